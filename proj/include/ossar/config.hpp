#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ossar/data.hpp"
#include "ossar/errors.hpp"
#include "ossar/train.hpp"

// Run configuration files.
//
//   # comment
//   [train]          preset, epochs, batch_size, learning_rate, optimizer, eval_every
//   [loss]           tau, alpha, beta, theta_coc, classification_metric, amc_metric
//   [model]          hidden_dims (comma list), embedding_dim, init_scale
//   [data]           classes, samples_per_class, dim, separation, overlap, hard,
//                    hard_angle_deg, groups
//   [split]          known, unknown (comma lists), test_fraction
//
// Values may be bare or double-quoted. Keys before any section header go to [train].
namespace ossar {

struct RunConfig {
    TrainConfig train;
    SyntheticConfig data;
    SplitSpec split{{0, 1, 2, 3}, {4, 5}};
    double test_fraction = 0.3;

    /// One seed drives data generation, the split, initialization and shuffling.
    void set_seed(std::uint64_t seed) {
        train.seed = seed;
        data.seed = seed;
    }
};

struct ConfigEntry {
    std::string section;
    std::string key;
    std::string value;
    std::size_t line = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("invalid boolean '" + std::string(v) + "' for " + std::string(key));
}

}  // namespace detail

inline std::vector<ConfigEntry> parse_config_entries(std::istream& is) {
    std::vector<ConfigEntry> out;
    std::string section = "train";
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section");
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        std::string_view key = detail::trim(line.substr(0, eq));
        std::string_view value = detail::trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        out.push_back({section, std::string(key), std::string(value), line_no});
    }
    return out;
}

inline void apply_entry(RunConfig& cfg, const ConfigEntry& e) {
    const std::string_view k = e.key;
    const std::string_view v = e.value;
    try {
        if (e.section == "train" || e.section == "loss" || e.section == "model") {
            apply_setting(cfg.train, k, v);
        } else if (e.section == "data") {
            auto& d = cfg.data;
            if (k == "classes") d.num_classes = detail::parse_count(k, v);
            else if (k == "samples_per_class") d.samples_per_class = detail::parse_count(k, v);
            else if (k == "dim") d.dim = detail::parse_count(k, v);
            else if (k == "separation") d.separation = detail::parse_real(k, v);
            else if (k == "overlap") d.overlap = detail::parse_real(k, v);
            else if (k == "hard") d.hard = detail::parse_bool(k, v);
            else if (k == "hard_angle_deg") d.hard_angle_deg = detail::parse_real(k, v);
            else if (k == "groups") d.num_groups = detail::parse_count(k, v);
            else throw ConfigError("unknown data setting '" + std::string(k) + "'");
        } else if (e.section == "split") {
            if (k == "known") cfg.split.known_classes = parse_id_list(v);
            else if (k == "unknown") cfg.split.unknown_classes = parse_id_list(v);
            else if (k == "test_fraction") cfg.test_fraction = detail::parse_real(k, v);
            else throw ConfigError("unknown split setting '" + std::string(k) + "'");
        } else {
            throw ConfigError("unknown section [" + e.section + "]");
        }
    } catch (const ConfigError& err) {
        throw ConfigError("config line " + std::to_string(e.line) + ": " + err.what());
    }
}

/// Applies entries in file order; `preset` lines therefore act as a base that later lines override.
inline void apply_config(RunConfig& cfg, std::istream& is) {
    for (const auto& e : parse_config_entries(is)) apply_entry(cfg, e);
}

inline void load_config(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    apply_config(cfg, is);
}

inline void apply_config_text(RunConfig& cfg, std::string_view text) {
    std::istringstream is{std::string(text)};
    apply_config(cfg, is);
}

}  // namespace ossar
