#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "ossar/data.hpp"
#include "ossar/errors.hpp"
#include "ossar/eval.hpp"
#include "ossar/losses.hpp"
#include "ossar/model.hpp"
#include "ossar/numerics.hpp"

namespace ossar {

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

enum class OptimizerKind { Adam, SGD };

inline std::string_view to_string(OptimizerKind k) noexcept { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
    if (s == "adam" || s == "Adam") return OptimizerKind::Adam;
    if (s == "sgd" || s == "SGD") return OptimizerKind::SGD;
    throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment buffers for a fixed list of parameter blocks.
struct OptimizerState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::uint64_t step = 0;
};

/// One update over parallel lists of parameter and gradient blocks.
inline void optimizer_step(OptimizerState& state, std::span<const std::span<double>> params,
                           std::span<const std::span<const double>> grads, const OptimizerConfig& config) {
    if (params.size() != grads.size()) throw UsageError("optimizer_step: block count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size()) {
            throw UsageError("optimizer_step: block " + std::to_string(i) + " shape mismatch");
        }
    }
    if (config.kind == OptimizerKind::SGD) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            for (std::size_t j = 0; j < params[i].size(); ++j) params[i][j] -= config.learning_rate * grads[i][j];
        }
        ++state.step;
        return;
    }
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.size(), 0.0);
            state.second_moment.emplace_back(p.size(), 0.0);
        }
    } else if (state.first_moment.size() != params.size()) {
        throw UsageError("optimizer_step: state was built for a different parameter layout");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double corr1 = 1.0 - std::pow(config.beta1, t);
    const double corr2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != params[i].size()) throw UsageError("optimizer_step: state shape mismatch");
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            const double g = grads[i][j];
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
            const double m_hat = m[j] / corr1;
            const double v_hat = v[j] / corr2;
            params[i][j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

struct ModelGrads {
    EmbedderGrads embedder;
    Matrix points;
    std::vector<double> margins;
};

/// Parameter blocks in a fixed order: (W_l, b_l) per layer, points, margins.
inline std::vector<std::span<double>> parameter_blocks(Model& model) {
    std::vector<std::span<double>> out;
    for (std::size_t l = 0; l < model.embedder.num_layers(); ++l) {
        out.emplace_back(model.embedder.weights[l].values());
        out.emplace_back(model.embedder.biases[l]);
    }
    out.emplace_back(model.bank.points.values());
    out.emplace_back(model.bank.margins);
    return out;
}

inline std::vector<std::span<const double>> gradient_blocks(const ModelGrads& grads) {
    std::vector<std::span<const double>> out;
    for (std::size_t l = 0; l < grads.embedder.weights.size(); ++l) {
        out.emplace_back(grads.embedder.weights[l].values());
        out.emplace_back(grads.embedder.biases[l]);
    }
    out.emplace_back(grads.points.values());
    out.emplace_back(grads.margins);
    return out;
}

/// Updates every model parameter, then clamps margins at zero.
inline void optimizer_step(OptimizerState& state, Model& model, const ModelGrads& grads,
                           const OptimizerConfig& config) {
    const auto params = parameter_blocks(model);
    const auto g = gradient_blocks(grads);
    optimizer_step(state, params, g, config);
    model.bank.project_margins();
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    LossConfig loss;
    std::vector<std::size_t> hidden_dims{64};
    std::size_t embedding_dim = 32;
    double init_scale = 1.0;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::Adam;
    std::uint64_t seed = 0;
    std::size_t eval_every = 1;

    void validate() const {
        loss.validate();
        if (embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
        for (std::size_t h : hidden_dims) {
            if (h == 0) throw ConfigError("hidden layer sizes must be positive");
        }
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (eval_every == 0) throw ConfigError("eval_every must be positive");
        if (!(init_scale > 0.0)) throw ConfigError("init_scale must be positive");
    }

    [[nodiscard]] ModelConfig model_config(std::size_t input_dim) const {
        ModelConfig mc;
        mc.layer_dims.clear();
        mc.layer_dims.push_back(input_dim);
        mc.layer_dims.insert(mc.layer_dims.end(), hidden_dims.begin(), hidden_dims.end());
        mc.layer_dims.push_back(embedding_dim);
        mc.seed = seed;
        mc.init_scale = init_scale;
        return mc;
    }

    [[nodiscard]] OptimizerConfig optimizer_config() const {
        OptimizerConfig oc;
        oc.kind = optimizer;
        oc.learning_rate = learning_rate;
        return oc;
    }
};

/// Named configurations. Loss arms: "ossar" (angular + AMC + COC), "no-hc"
/// (reciprocal euclidean classification + AMC + COC), "no-coc" (angular + AMC),
/// "arpl" (euclidean + AMC). Schedules: "desk" and "paper".
inline void apply_preset(TrainConfig& cfg, std::string_view name) {
    if (name == "ossar" || name == "full") {
        cfg.loss.classification_metric = DistanceMetric::Angular;
        cfg.loss.amc_metric = DistanceMetric::EuclideanRP;
        cfg.loss.alpha = 0.1;
        cfg.loss.beta = 0.1;
    } else if (name == "no-hc") {
        cfg.loss.classification_metric = DistanceMetric::EuclideanRP;
        cfg.loss.amc_metric = DistanceMetric::EuclideanRP;
        cfg.loss.alpha = 0.1;
        cfg.loss.beta = 0.1;
    } else if (name == "no-coc") {
        cfg.loss.classification_metric = DistanceMetric::Angular;
        cfg.loss.amc_metric = DistanceMetric::EuclideanRP;
        cfg.loss.alpha = 0.1;
        cfg.loss.beta = 0.0;
    } else if (name == "arpl") {
        cfg.loss.classification_metric = DistanceMetric::EuclideanRP;
        cfg.loss.amc_metric = DistanceMetric::EuclideanRP;
        cfg.loss.alpha = 0.1;
        cfg.loss.beta = 0.0;
    } else if (name == "desk") {
        cfg.epochs = 200;
        cfg.batch_size = 32;
        cfg.learning_rate = 1e-4;
        cfg.optimizer = OptimizerKind::Adam;
    } else if (name == "paper") {
        cfg.epochs = 90;
        cfg.batch_size = 64;
        cfg.learning_rate = 1e-5;
        cfg.optimizer = OptimizerKind::Adam;
        cfg.loss.tau = 1.0;
        cfg.loss.alpha = 0.1;
        cfg.loss.beta = 0.1;
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "'");
    }
}

struct EpochRecord {
    std::size_t epoch = 0;
    double total = 0.0;
    double classification = 0.0;
    double amc = 0.0;
    double coc = 0.0;
    double val_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

struct TrainResult {
    Model model;
    TrainHistory history;
};

inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto src = m.row(idx[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

/// Forward, loss and full backward pass for one mini-batch.
inline std::pair<TotalLossOutput, ModelGrads> batch_gradients(const Model& model, const Matrix& inputs,
                                                              std::span<const int> labels, const LossConfig& loss) {
    const auto fwd = embed_forward(model.embedder, inputs);
    TotalLossOutput out = total_loss(fwd.features, model.bank, labels, loss);
    auto back = embed_backward(model.embedder, fwd.cache, out.grad_features);
    ModelGrads grads{std::move(back.params), out.grad_points, out.grad_margins};
    return {std::move(out), std::move(grads)};
}

/// Mini-batch training on split.train; val_accuracy is measured on split.test_known.
inline TrainResult train(const OpenSetSplit& split, const TrainConfig& config) {
    config.validate();
    split.train.validate();
    const std::size_t k = split.num_known();
    TrainResult res;
    res.model = init_model(config.model_config(split.train.dim()), k);

    const OptimizerConfig opt = config.optimizer_config();
    OptimizerState state;
    Rng rng(config.seed ^ 0xD1B54A32D192ED03ull);
    const std::size_t n = split.train.size();
    std::vector<std::size_t> order(n);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(std::span<std::size_t>(order));
        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, stop - start);
            const Matrix inputs = gather_rows(split.train.inputs, idx);
            std::vector<int> labels(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = split.train.labels[idx[i]];

            std::pair<TotalLossOutput, ModelGrads> step;
            try {
                step = batch_gradients(res.model, inputs, labels, config.loss);
            } catch (const Error& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) + ": " +
                                   e.what());
            }
            const auto& out = step.first;
            if (!std::isfinite(out.value) || !out.grad_features.all_finite() || !out.grad_points.all_finite()) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index));
            }
            const double w = static_cast<double>(idx.size()) / static_cast<double>(n);
            rec.total += w * out.value;
            rec.classification += w * out.classification;
            rec.amc += w * out.amc;
            rec.coc += w * out.coc;
            optimizer_step(state, res.model, step.second, opt);
        }
        if (epoch % config.eval_every == 0 || epoch == config.epochs) {
            const Matrix logits = compute_logits(res.model, split.test_known.inputs, config.loss.classification_metric,
                                                 config.loss.tau);
            rec.val_accuracy = closed_accuracy(logits, split.test_known.labels,
                                               std::vector<bool>(split.test_known.size(), true));
        }
        res.history.epochs.push_back(rec);
    }
    return res;
}

inline void write_history_csv(std::ostream& os, const TrainHistory& history) {
    os << "epoch,total,cls,amc,coc,val_acc\n";
    for (const auto& r : history.epochs) {
        os << r.epoch << ',' << format_double(r.total) << ',' << format_double(r.classification) << ','
           << format_double(r.amc) << ',' << format_double(r.coc) << ','
           << (std::isnan(r.val_accuracy) ? std::string("nan") : format_double(r.val_accuracy)) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Settings by name (shared by config files and sweep grids)
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_real(std::string_view key, std::string_view v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
        throw ConfigError("invalid number '" + std::string(v) + "' for " + std::string(key));
    }
    return out;
}

inline std::uint64_t parse_count(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
        throw ConfigError("invalid count '" + std::string(v) + "' for " + std::string(key));
    }
    return out;
}

inline std::vector<std::size_t> parse_count_list(std::string_view key, std::string_view v) {
    std::vector<std::size_t> out;
    for (int id : parse_id_list(v)) {
        if (id < 0) throw ConfigError("negative size in " + std::string(key));
        out.push_back(static_cast<std::size_t>(id));
    }
    return out;
}

}  // namespace detail

/// Assigns one named training setting. Keys may carry a "loss." / "train." / "model." prefix.
inline void apply_setting(TrainConfig& cfg, std::string_view key, std::string_view value) {
    for (std::string_view prefix : {"loss.", "train.", "model."}) {
        if (key.starts_with(prefix)) {
            key.remove_prefix(prefix.size());
            break;
        }
    }
    using detail::parse_count;
    using detail::parse_real;
    if (key == "tau") cfg.loss.tau = parse_real(key, value);
    else if (key == "alpha") cfg.loss.alpha = parse_real(key, value);
    else if (key == "beta") cfg.loss.beta = parse_real(key, value);
    else if (key == "theta_coc" || key == "theta") cfg.loss.theta_coc = parse_real(key, value);
    else if (key == "classification_metric") cfg.loss.classification_metric = parse_metric(value);
    else if (key == "amc_metric") cfg.loss.amc_metric = parse_metric(value);
    else if (key == "epochs") cfg.epochs = parse_count(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_count(key, value);
    else if (key == "learning_rate" || key == "lr") cfg.learning_rate = parse_real(key, value);
    else if (key == "optimizer") cfg.optimizer = parse_optimizer(value);
    else if (key == "seed") cfg.seed = parse_count(key, value);
    else if (key == "eval_every") cfg.eval_every = parse_count(key, value);
    else if (key == "hidden_dims") cfg.hidden_dims = value.empty() ? std::vector<std::size_t>{} : detail::parse_count_list(key, value);
    else if (key == "embedding_dim") cfg.embedding_dim = parse_count(key, value);
    else if (key == "init_scale") cfg.init_scale = parse_real(key, value);
    else if (key == "preset") apply_preset(cfg, value);
    else throw ConfigError("unknown training setting '" + std::string(key) + "'");
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

/// One grid point: ordered (key, value) assignments applied on top of the base config.
using GridCell = std::vector<std::pair<std::string, std::string>>;

struct SweepGrid {
    std::vector<std::string> keys;
    std::vector<GridCell> cells;
};

/// Cartesian product; the last key varies fastest.
inline SweepGrid cartesian_grid(const std::vector<std::pair<std::string, std::vector<std::string>>>& axes) {
    SweepGrid grid;
    for (const auto& [k, values] : axes) {
        if (values.empty()) throw ConfigError("grid axis '" + k + "' has no values");
        grid.keys.push_back(k);
    }
    grid.cells.emplace_back();
    for (const auto& [k, values] : axes) {
        std::vector<GridCell> next;
        for (const auto& cell : grid.cells) {
            for (const auto& v : values) {
                GridCell c = cell;
                c.emplace_back(k, v);
                next.push_back(std::move(c));
            }
        }
        grid.cells = std::move(next);
    }
    return grid;
}

/// Built-in grids: "theta" (5 COC thresholds), "weights" (7 alpha/beta pairs),
/// "amc-metric" (4 margin distances).
inline SweepGrid named_grid(std::string_view name) {
    if (name == "theta") return cartesian_grid({{"theta_coc", {"0", "0.25", "0.5", "1", "2"}}});
    if (name == "amc-metric") {
        return cartesian_grid({{"amc_metric", {"euclidean", "angular", "manhattan", "chebyshev"}}});
    }
    if (name == "weights") {
        SweepGrid g;
        g.keys = {"alpha", "beta"};
        const std::pair<const char*, const char*> pairs[] = {{"0.05", "0.05"}, {"0.05", "0.1"}, {"0.1", "0.05"},
                                                             {"0.1", "0.1"},   {"0.1", "0.5"},  {"0.5", "0.1"},
                                                             {"0.5", "0.5"}};
        for (const auto& [a, b] : pairs) g.cells.push_back({{"alpha", a}, {"beta", b}});
        return g;
    }
    throw ConfigError("unknown grid '" + std::string(name) + "'");
}

/// Parses "key=v1,v2;key2=v3" into a cartesian grid, or a built-in grid name.
inline SweepGrid parse_grid(std::string_view spec) {
    if (spec.find('=') == std::string_view::npos) return named_grid(spec);
    std::vector<std::pair<std::string, std::vector<std::string>>> axes;
    std::size_t pos = 0;
    while (pos < spec.size()) {
        const std::size_t semi = std::min(spec.find(';', pos), spec.size());
        const std::string_view part = spec.substr(pos, semi - pos);
        pos = semi + 1;
        if (part.empty()) continue;
        const std::size_t eq = part.find('=');
        if (eq == std::string_view::npos) throw ConfigError("grid axis needs key=values: '" + std::string(part) + "'");
        std::vector<std::string> values;
        std::string_view rest = part.substr(eq + 1);
        std::size_t p = 0;
        while (p <= rest.size()) {
            const std::size_t comma = std::min(rest.find(',', p), rest.size());
            if (comma > p) values.emplace_back(rest.substr(p, comma - p));
            p = comma + 1;
        }
        axes.emplace_back(std::string(part.substr(0, eq)), std::move(values));
    }
    return cartesian_grid(axes);
}

struct SweepRow {
    GridCell cell;
    bool ok = false;
    std::string error;
    EvalReport report;
};

inline SweepRow run_cell(const TrainConfig& base, const GridCell& cell, const OpenSetSplit& split) {
    SweepRow row;
    row.cell = cell;
    try {
        TrainConfig cfg = base;
        for (const auto& [k, v] : cell) apply_setting(cfg, k, v);
        const auto trained = train(split, cfg);
        row.report = evaluate(trained.model, split, cfg.loss.classification_metric, cfg.loss.tau);
        row.ok = true;
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    return row;
}

/// Trains and evaluates every grid cell. Cells are independent, so with
/// jobs > 1 they run on worker threads; rows always come back in grid order.
inline std::vector<SweepRow> sweep(const TrainConfig& base, const SweepGrid& grid, const OpenSetSplit& split,
                                   std::size_t jobs = 1) {
    std::vector<SweepRow> rows(grid.cells.size());
    jobs = std::max<std::size_t>(1, std::min(jobs, grid.cells.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < grid.cells.size(); ++i) rows[i] = run_cell(base, grid.cells[i], split);
        return rows;
    }
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            for (std::size_t i = w; i < grid.cells.size(); i += jobs) rows[i] = run_cell(base, grid.cells[i], split);
        });
    }
    workers.clear();
    return rows;
}

/// Columns: grid keys, then acc, auroc, oscr. Failed cells print "error" in the metric columns.
inline void write_sweep_csv(std::ostream& os, const SweepGrid& grid, std::span<const SweepRow> rows) {
    for (const auto& k : grid.keys) os << k << ',';
    os << "acc,auroc,oscr\n";
    for (const auto& row : rows) {
        for (const auto& k : grid.keys) {
            std::string v;
            for (const auto& [ck, cv] : row.cell) {
                if (ck == k) v = cv;
            }
            os << v << ',';
        }
        if (row.ok) {
            os << format_double(row.report.closed_accuracy) << ',' << format_double(row.report.auroc) << ','
               << format_double(row.report.oscr) << '\n';
        } else {
            os << "error,error,error\n";
        }
    }
}

}  // namespace ossar
