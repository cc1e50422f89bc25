#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ossar/binary_io.hpp"
#include "ossar/errors.hpp"
#include "ossar/numerics.hpp"

namespace ossar {

struct LabeledDataset {
    Matrix inputs;                        // B x D_in
    std::vector<int> labels;              // class ids
    std::vector<int> group_ids;           // fold groups
    std::vector<std::string> class_names; // indexed by class id; may be empty

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return inputs.cols(); }

    void validate() const {
        if (labels.empty()) throw DataError("dataset is empty");
        if (inputs.rows() != labels.size() || group_ids.size() != labels.size()) {
            throw DataError("dataset columns have inconsistent lengths");
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] < 0) throw DataError("negative label at row " + std::to_string(i));
            if (group_ids[i] < 0) throw DataError("negative group id at row " + std::to_string(i));
        }
        if (!inputs.all_finite()) throw DataError("dataset contains non-finite inputs");
    }

    [[nodiscard]] std::vector<int> classes() const {
        std::set<int> s(labels.begin(), labels.end());
        return {s.begin(), s.end()};
    }

    /// Rows at the given indices, in order.
    [[nodiscard]] LabeledDataset subset(std::span<const std::size_t> idx) const {
        LabeledDataset out;
        out.inputs = Matrix(idx.size(), dim());
        out.labels.reserve(idx.size());
        out.group_ids.reserve(idx.size());
        out.class_names = class_names;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const auto src = inputs.row(idx[r]);
            std::copy(src.begin(), src.end(), out.inputs.row(r).begin());
            out.labels.push_back(labels[idx[r]]);
            out.group_ids.push_back(group_ids[idx[r]]);
        }
        return out;
    }

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

struct SyntheticConfig {
    std::size_t num_classes = 6;
    std::size_t samples_per_class = 200;
    std::size_t dim = 8;
    double separation = 5.0;
    double overlap = 1.0;
    std::uint64_t seed = 0;
    std::size_t num_groups = 5;

    // Hard mode: the means of hard_neighbors sit hard_angle_deg away from the
    // mean of hard_anchor, on opposite sides of it.
    bool hard = false;
    double hard_angle_deg = 14.0;
    int hard_anchor = 4;
    std::vector<int> hard_neighbors{0, 1};
};

namespace detail {

inline std::vector<double> random_unit(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double n = 0.0;
    do {
        for (double& x : v) x = rng.normal();
        n = norm2(v);
    } while (n < 1e-6);
    for (double& x : v) x /= n;
    return v;
}

/// Unit vector orthogonal to u (Gram-Schmidt on a random draw).
inline std::vector<double> random_orthogonal_unit(Rng& rng, std::span<const double> u) {
    for (;;) {
        std::vector<double> v = random_unit(rng, u.size());
        const double proj = dot(v, u);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * u[i];
        const double n = norm2(v);
        if (n > 1e-3) {
            for (double& x : v) x /= n;
            return v;
        }
    }
}

}  // namespace detail

/// Class means of gen_synthetic for the given config (num_classes x dim).
inline Matrix synthetic_means(const SyntheticConfig& cfg) {
    if (cfg.num_classes < 3) throw ConfigError("gen_synthetic needs at least 3 classes");
    if (cfg.dim < 2) throw ConfigError("gen_synthetic needs dim >= 2");
    if (!(cfg.separation > 0.0)) throw ConfigError("separation must be positive");
    if (!(cfg.overlap >= 0.0)) throw ConfigError("overlap must be non-negative");
    if (cfg.samples_per_class == 0) throw ConfigError("samples_per_class must be positive");
    if (cfg.num_groups == 0) throw ConfigError("num_groups must be positive");

    Rng rng(cfg.seed);
    Matrix means(cfg.num_classes, cfg.dim);
    // Redraw until every pair of directions is at least 30 degrees apart.
    const double max_cos = std::cos(std::numbers::pi / 6.0);
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        std::vector<double> u;
        for (int attempt = 0;; ++attempt) {
            u = detail::random_unit(rng, cfg.dim);
            bool ok = true;
            for (std::size_t j = 0; j < c && attempt < 1000; ++j) {
                if (dot(u, means.row(j)) / cfg.separation > max_cos) ok = false;
            }
            if (ok) break;
        }
        for (std::size_t i = 0; i < cfg.dim; ++i) means(c, i) = cfg.separation * u[i];
    }

    if (cfg.hard) {
        const auto k = static_cast<int>(cfg.num_classes);
        if (cfg.hard_anchor < 0 || cfg.hard_anchor >= k) throw ConfigError("hard_anchor out of range");
        if (!(cfg.hard_angle_deg > 0.0 && cfg.hard_angle_deg < 90.0)) throw ConfigError("hard_angle_deg must be in (0, 90)");
        std::vector<double> u(means.row(static_cast<std::size_t>(cfg.hard_anchor)).begin(),
                              means.row(static_cast<std::size_t>(cfg.hard_anchor)).end());
        for (double& x : u) x /= cfg.separation;
        const std::vector<double> v = detail::random_orthogonal_unit(rng, u);
        const double a = cfg.hard_angle_deg * std::numbers::pi / 180.0;
        for (std::size_t n = 0; n < cfg.hard_neighbors.size(); ++n) {
            const int c = cfg.hard_neighbors[n];
            if (c < 0 || c >= k || c == cfg.hard_anchor) throw ConfigError("invalid hard neighbor class");
            // Alternate sides of the anchor; beyond two neighbors rotate towards a fresh direction.
            std::vector<double> w = n < 2 ? v : detail::random_orthogonal_unit(rng, u);
            const double side = (n % 2 == 0) ? 1.0 : -1.0;
            for (std::size_t i = 0; i < cfg.dim; ++i) {
                means(static_cast<std::size_t>(c), i) = cfg.separation * (std::cos(a) * u[i] + side * std::sin(a) * w[i]);
            }
        }
    }
    return means;
}

/// Isotropic Gaussian classes around seeded means of length `separation`.
inline LabeledDataset gen_synthetic(const SyntheticConfig& cfg) {
    const Matrix means = synthetic_means(cfg);
    Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
    LabeledDataset ds;
    const std::size_t n = cfg.num_classes * cfg.samples_per_class;
    ds.inputs = Matrix(n, cfg.dim);
    ds.labels.reserve(n);
    ds.group_ids.reserve(n);
    std::size_t r = 0;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        ds.class_names.push_back("class" + std::to_string(c));
        for (std::size_t s = 0; s < cfg.samples_per_class; ++s, ++r) {
            for (std::size_t i = 0; i < cfg.dim; ++i) {
                const double noise = cfg.overlap > 0.0 ? cfg.overlap * rng.normal() : 0.0;
                ds.inputs(r, i) = means(c, i) + noise;
            }
            ds.labels.push_back(static_cast<int>(c));
            ds.group_ids.push_back(static_cast<int>(s % cfg.num_groups));
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Known / unknown partition
// ---------------------------------------------------------------------------

struct SplitSpec {
    std::vector<int> known_classes;
    std::vector<int> unknown_classes;
};

struct OpenSetSplit {
    LabeledDataset train;         // known classes, labels remapped to [0, K)
    LabeledDataset test_known;    // known classes, remapped
    LabeledDataset test_unknown;  // unknown classes, original labels
    std::vector<int> known_classes;  // remapped label k -> original class id
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_known_indices;
    std::vector<std::size_t> test_unknown_indices;

    [[nodiscard]] std::size_t num_known() const noexcept { return known_classes.size(); }

    [[nodiscard]] int original_label(int remapped) const { return known_classes.at(static_cast<std::size_t>(remapped)); }
};

/// Parses "0,1,2" into class ids.
inline std::vector<int> parse_id_list(std::string_view text) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        std::string_view tok = text.substr(pos, comma - pos);
        while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
        while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
        if (!tok.empty()) {
            int v = 0;
            const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc{} || p != tok.data() + tok.size()) {
                throw ConfigError("invalid class id '" + std::string(tok) + "'");
            }
            out.push_back(v);
        }
        pos = comma + 1;
    }
    return out;
}

inline void validate_split_spec(const SplitSpec& spec, std::span<const int> dataset_classes) {
    if (spec.known_classes.size() < 2) throw ConfigError("split needs at least 2 known classes");
    if (spec.unknown_classes.empty()) throw ConfigError("split needs at least 1 unknown class");
    std::set<int> seen;
    for (int c : spec.known_classes) {
        if (!seen.insert(c).second) throw ConfigError("class " + std::to_string(c) + " listed twice");
    }
    for (int c : spec.unknown_classes) {
        if (!seen.insert(c).second) throw ConfigError("class " + std::to_string(c) + " is both known and unknown");
    }
    for (int c : seen) {
        if (std::find(dataset_classes.begin(), dataset_classes.end(), c) == dataset_classes.end()) {
            throw DataError("class " + std::to_string(c) + " does not occur in the dataset");
        }
    }
}

/// Stratified train/test split of the known classes; all unknown-class samples go to test_unknown.
inline OpenSetSplit apply_split(const LabeledDataset& dataset, const SplitSpec& spec, double test_fraction,
                                std::uint64_t seed) {
    dataset.validate();
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in (0, 1)");
    const auto classes = dataset.classes();
    validate_split_spec(spec, classes);

    OpenSetSplit split;
    split.known_classes = spec.known_classes;
    std::map<int, int> remap;
    for (std::size_t k = 0; k < spec.known_classes.size(); ++k) remap[spec.known_classes[k]] = static_cast<int>(k);
    const std::set<int> unknown(spec.unknown_classes.begin(), spec.unknown_classes.end());

    Rng rng(seed);
    for (int c : spec.known_classes) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (dataset.labels[i] == c) idx.push_back(i);
        }
        if (idx.size() < 2) throw DataError("known class " + std::to_string(c) + " has fewer than 2 samples");
        rng.shuffle(std::span<std::size_t>(idx));
        auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
        n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
        split.test_known_indices.insert(split.test_known_indices.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        split.train_indices.insert(split.train_indices.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (unknown.contains(dataset.labels[i])) split.test_unknown_indices.push_back(i);
    }
    std::sort(split.train_indices.begin(), split.train_indices.end());
    std::sort(split.test_known_indices.begin(), split.test_known_indices.end());

    split.train = dataset.subset(split.train_indices);
    split.test_known = dataset.subset(split.test_known_indices);
    split.test_unknown = dataset.subset(split.test_unknown_indices);
    for (int& y : split.train.labels) y = remap.at(y);
    for (int& y : split.test_known.labels) y = remap.at(y);
    return split;
}

// ---------------------------------------------------------------------------
// Group folds
// ---------------------------------------------------------------------------

struct GroupFold {
    std::vector<int> train_groups;
    std::vector<int> heldout_groups;
};

/// Round-robin assignment of sorted distinct group ids to folds; each group is held out once.
inline std::vector<GroupFold> group_folds(const LabeledDataset& dataset, std::size_t num_folds) {
    if (num_folds < 2) throw ConfigError("need at least 2 folds");
    const std::set<int> distinct(dataset.group_ids.begin(), dataset.group_ids.end());
    if (distinct.size() < num_folds) {
        throw ConfigError("only " + std::to_string(distinct.size()) + " groups for " + std::to_string(num_folds) +
                          " folds");
    }
    std::vector<GroupFold> folds(num_folds);
    std::size_t i = 0;
    for (int g : distinct) folds[i++ % num_folds].heldout_groups.push_back(g);
    for (std::size_t f = 0; f < num_folds; ++f) {
        for (std::size_t other = 0; other < num_folds; ++other) {
            if (other == f) continue;
            const auto& h = folds[other].heldout_groups;
            folds[f].train_groups.insert(folds[f].train_groups.end(), h.begin(), h.end());
        }
        std::sort(folds[f].train_groups.begin(), folds[f].train_groups.end());
    }
    return folds;
}

/// Rows whose group id is in `groups`.
inline LabeledDataset select_groups(const LabeledDataset& dataset, std::span<const int> groups) {
    const std::set<int> keep(groups.begin(), groups.end());
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (keep.contains(dataset.group_ids[i])) idx.push_back(i);
    }
    return dataset.subset(idx);
}

// ---------------------------------------------------------------------------
// Feature files: CSV (label,group,f0..) and OSSF binary
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kFeatureFileVersion = 1;

inline std::string format_double(double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return {buf, static_cast<std::size_t>(n)};
}

inline void write_features_csv(std::ostream& os, const LabeledDataset& ds) {
    os << "label,group";
    for (std::size_t i = 0; i < ds.dim(); ++i) os << ",f" << i;
    os << '\n';
    for (std::size_t r = 0; r < ds.size(); ++r) {
        os << ds.labels[r] << ',' << ds.group_ids[r];
        for (double v : ds.inputs.row(r)) os << ',' << format_double(v);
        os << '\n';
    }
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
}

template <typename T>
T parse_field(std::string_view tok, std::size_t row, const char* what) {
    T v{};
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) {
        throw DataError("row " + std::to_string(row) + ": cannot parse " + what + " '" + std::string(tok) + "'");
    }
    return v;
}

}  // namespace detail

/// Rows are numbered from 1 for the first data line after the header.
inline LabeledDataset read_features_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw DataError("feature CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_commas(line);
    if (header.size() < 3 || header[0] != "label" || header[1] != "group") {
        throw DataError("feature CSV header must start with label,group,f0");
    }
    const std::size_t dim = header.size() - 2;
    for (std::size_t i = 0; i < dim; ++i) {
        if (header[i + 2] != "f" + std::to_string(i)) throw DataError("feature CSV header column " + std::to_string(i + 2) + " must be f" + std::to_string(i));
    }
    LabeledDataset ds;
    std::vector<double> values;
    std::size_t row = 0;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto fields = detail::split_commas(line);
        if (fields.size() != dim + 2) {
            throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(dim + 2) + " fields, got " +
                            std::to_string(fields.size()));
        }
        ds.labels.push_back(detail::parse_field<int>(fields[0], row, "label"));
        ds.group_ids.push_back(detail::parse_field<int>(fields[1], row, "group"));
        for (std::size_t i = 0; i < dim; ++i) {
            const double v = detail::parse_field<double>(fields[i + 2], row, "feature");
            if (!std::isfinite(v)) throw DataError("row " + std::to_string(row) + ": non-finite feature");
            values.push_back(v);
        }
    }
    ds.inputs = Matrix(ds.labels.size(), dim, std::move(values));
    ds.validate();
    return ds;
}

inline void write_features_binary(std::ostream& os, const LabeledDataset& ds) {
    using namespace binary;
    put_magic(os, "OSSF");
    put_u16(os, kFeatureFileVersion);
    put_u32(os, checked_u32(ds.size()));
    put_u32(os, checked_u32(ds.dim()));
    for (int y : ds.labels) put_i32(os, y);
    for (int g : ds.group_ids) put_i32(os, g);
    for (double v : ds.inputs.values()) put_f64(os, v);
}

inline LabeledDataset read_features_binary(std::istream& is) {
    using namespace binary;
    expect_magic(is, "OSSF");
    const auto version = get_u16(is);
    if (version != kFeatureFileVersion) throw DataError("unsupported OSSF version " + std::to_string(version));
    const std::uint32_t rows = get_u32(is);
    const std::uint32_t dim = get_u32(is);
    LabeledDataset ds;
    ds.labels.resize(rows);
    ds.group_ids.resize(rows);
    for (auto& y : ds.labels) y = get_i32(is);
    for (auto& g : ds.group_ids) g = get_i32(is);
    std::vector<double> values(std::size_t{rows} * dim);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = get_f64(is);
        if (!std::isfinite(values[i])) throw DataError("row " + std::to_string(i / dim + 1) + ": non-finite feature");
    }
    ds.inputs = Matrix(rows, dim, std::move(values));
    ds.validate();
    return ds;
}

inline bool is_csv_path(const std::filesystem::path& path) { return path.extension() == ".csv"; }

/// Format chosen by extension: .csv is text, anything else is OSSF binary.
inline void save_features(const std::filesystem::path& path, const LabeledDataset& ds) {
    std::ofstream os(path, is_csv_path(path) ? std::ios::out : std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    if (is_csv_path(path)) {
        write_features_csv(os, ds);
    } else {
        write_features_binary(os, ds);
    }
    if (!os) throw DataError("failed writing " + path.string());
}

inline LabeledDataset load_features(const std::filesystem::path& path) {
    std::ifstream is(path, is_csv_path(path) ? std::ios::in : std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    LabeledDataset ds = is_csv_path(path) ? read_features_csv(is) : read_features_binary(is);
    for (int c : ds.classes()) {
        if (ds.class_names.size() <= static_cast<std::size_t>(c)) ds.class_names.resize(static_cast<std::size_t>(c) + 1);
        ds.class_names[static_cast<std::size_t>(c)] = "class" + std::to_string(c);
    }
    return ds;
}

}  // namespace ossar
