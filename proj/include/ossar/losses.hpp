#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ossar/errors.hpp"
#include "ossar/model.hpp"
#include "ossar/numerics.hpp"

namespace ossar {

struct LossConfig {
    double tau = 1.0;
    double alpha = 0.1;
    double beta = 0.1;
    double theta_coc = 0.0;
    DistanceMetric classification_metric = DistanceMetric::Angular;
    DistanceMetric amc_metric = DistanceMetric::EuclideanRP;

    void validate() const {
        if (!(tau > 0.0)) throw ConfigError("tau must be positive");
        if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("loss weights must be non-negative");
        if (!(theta_coc >= 0.0)) throw ConfigError("theta_coc must be non-negative");
        if (classification_metric != DistanceMetric::EuclideanRP && classification_metric != DistanceMetric::Angular) {
            throw ConfigError("classification metric must be euclidean or angular");
        }
    }
};

/// Scalar loss with gradients w.r.t. features (B x D), points (K x D) and margins (K).
struct LossOutput {
    double value = 0.0;
    Matrix grad_features;
    Matrix grad_points;
    std::vector<double> grad_margins;
};

/// Objective value, its parts, and the combined gradients.
struct TotalLossOutput : LossOutput {
    double classification = 0.0;
    double amc = 0.0;
    double coc = 0.0;
};

struct CocOutput {
    double value = 0.0;
    Matrix grad_logits;
};

namespace detail {

inline void check_batch(const Matrix& features, const ReciprocalBank& bank, std::span<const int> labels) {
    if (features.rows() == 0) throw UsageError("empty batch");
    if (features.rows() != labels.size()) throw ConfigError("label count does not match batch size");
    if (features.cols() != bank.points.cols()) throw ConfigError("feature dim does not match reciprocal points");
    if (bank.margins.size() != bank.points.rows()) throw ConfigError("margin count does not match point count");
    const auto k = static_cast<int>(bank.num_classes());
    for (std::size_t b = 0; b < labels.size(); ++b) {
        if (labels[b] < 0 || labels[b] >= k) {
            throw DataError("label " + std::to_string(labels[b]) + " at sample " + std::to_string(b) +
                            " outside [0, " + std::to_string(k) + ")");
        }
    }
}

inline LossOutput zero_output(const Matrix& features, const ReciprocalBank& bank) {
    LossOutput out;
    out.grad_features = Matrix(features.rows(), features.cols());
    out.grad_points = Matrix(bank.points.rows(), bank.points.cols());
    out.grad_margins.assign(bank.num_classes(), 0.0);
    return out;
}

/// Cross-entropy on tau-scaled scores. Writes d(mean CE)/d(logits) into grad_logits.
inline double cross_entropy_on_logits(const Matrix& logits, std::span<const int> labels, Matrix& grad_logits) {
    const std::size_t batch = logits.rows();
    const double inv_b = 1.0 / static_cast<double>(batch);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const auto row = logits.row(b);
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : row) mx = std::max(mx, v);
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        const auto y = static_cast<std::size_t>(labels[b]);
        total += lse - row[y];
        auto g = grad_logits.row(b);
        for (std::size_t k = 0; k < row.size(); ++k) {
            g[k] += inv_b * (std::exp(row[k] - lse) - (k == y ? 1.0 : 0.0));
        }
    }
    return total * inv_b;
}

inline Matrix scaled(const Matrix& m, double s) {
    Matrix out = m;
    for (double& v : out.values()) v *= s;
    return out;
}

}  // namespace detail

/// Distance used inside the margin constraint. EuclideanRP is the pure
/// ||f-p||^2 / D term, Angular is 1 - cos, the others are L1 / L-inf.
inline double amc_distance(std::span<const double> f, std::span<const double> p, DistanceMetric metric) {
    switch (metric) {
        case DistanceMetric::EuclideanRP: {
            double sq = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i) sq += (f[i] - p[i]) * (f[i] - p[i]);
            return sq / static_cast<double>(f.size());
        }
        case DistanceMetric::Angular: return 1.0 - pair_score(f, p, DistanceMetric::Angular);
        case DistanceMetric::Manhattan:
        case DistanceMetric::Chebyshev: return pair_score(f, p, metric);
    }
    return 0.0;
}

inline void amc_distance_grad(std::span<const double> f, std::span<const double> p, DistanceMetric metric,
                              double upstream, std::span<double> grad_f, std::span<double> grad_p) {
    switch (metric) {
        case DistanceMetric::EuclideanRP: {
            const double s = 2.0 * upstream / static_cast<double>(f.size());
            for (std::size_t i = 0; i < f.size(); ++i) {
                grad_f[i] += s * (f[i] - p[i]);
                grad_p[i] -= s * (f[i] - p[i]);
            }
            return;
        }
        case DistanceMetric::Angular:
            pair_score_grad(f, p, DistanceMetric::Angular, -upstream, grad_f, grad_p);
            return;
        case DistanceMetric::Manhattan:
        case DistanceMetric::Chebyshev: pair_score_grad(f, p, metric, upstream, grad_f, grad_p); return;
    }
}

/// Mean over the batch of -log softmax(tau * Dist(f_b, P))[y_b].
///
/// metric = EuclideanRP gives the reciprocal classification loss,
/// metric = Angular the hyperspherical one.
inline LossOutput classification_loss(const Matrix& features, const ReciprocalBank& bank, std::span<const int> labels,
                                      DistanceMetric metric, double tau) {
    detail::check_batch(features, bank, labels);
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    const Matrix scores = pairwise_scores(features, bank.points, metric);
    const Matrix logits = detail::scaled(scores, tau);
    LossOutput out = detail::zero_output(features, bank);
    Matrix grad_logits(logits.rows(), logits.cols());
    out.value = detail::cross_entropy_on_logits(logits, labels, grad_logits);
    pairwise_scores_backward(features, bank.points, metric, detail::scaled(grad_logits, tau), out.grad_features,
                             out.grad_points);
    return out;
}

/// Mean over the batch of max(d(f_b, P_{y_b}) - R_{y_b}, 0).
inline LossOutput amc_loss(const Matrix& features, const ReciprocalBank& bank, std::span<const int> labels,
                           DistanceMetric metric) {
    detail::check_batch(features, bank, labels);
    LossOutput out = detail::zero_output(features, bank);
    const double inv_b = 1.0 / static_cast<double>(features.rows());
    for (std::size_t b = 0; b < features.rows(); ++b) {
        const auto y = static_cast<std::size_t>(labels[b]);
        const double hinge = amc_distance(features.row(b), bank.points.row(y), metric) - bank.margins[y];
        if (hinge > 0.0) {
            out.value += hinge * inv_b;
            amc_distance_grad(features.row(b), bank.points.row(y), metric, inv_b, out.grad_features.row(b),
                              out.grad_points.row(y));
            out.grad_margins[y] -= inv_b;
        }
    }
    return out;
}

/// Over-confidence penalty on logit gaps.
///
/// Per sample, gap_C = max_j l_j - l_C; the loss is the batch mean of
/// sum_C max(gap_C - theta, 0). The argmax (lowest index on ties) receives
/// +1 and class C receives -1 for every active gap.
inline CocOutput coc_loss(const Matrix& logits, double theta_coc) {
    if (!logits.all_finite()) throw NumericError("coc_loss: non-finite logits");
    if (logits.rows() == 0) throw UsageError("empty batch");
    CocOutput out;
    out.grad_logits = Matrix(logits.rows(), logits.cols());
    const double inv_b = 1.0 / static_cast<double>(logits.rows());
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        const auto row = logits.row(b);
        const std::size_t top = argmax(row);
        auto g = out.grad_logits.row(b);
        for (std::size_t c = 0; c < row.size(); ++c) {
            const double excess = (row[top] - row[c]) - theta_coc;
            if (excess > 0.0) {
                out.value += excess * inv_b;
                g[top] += inv_b;
                g[c] -= inv_b;
            }
        }
    }
    return out;
}

/// L_cls + alpha * L_amc + beta * L_coc with L_cls chosen by config.classification_metric.
inline TotalLossOutput total_loss(const Matrix& features, const ReciprocalBank& bank, std::span<const int> labels,
                                  const LossConfig& config) {
    config.validate();
    detail::check_batch(features, bank, labels);
    const Matrix scores = pairwise_scores(features, bank.points, config.classification_metric);
    const Matrix logits = detail::scaled(scores, config.tau);

    TotalLossOutput out;
    static_cast<LossOutput&>(out) = detail::zero_output(features, bank);

    Matrix grad_logits(logits.rows(), logits.cols());
    out.classification = detail::cross_entropy_on_logits(logits, labels, grad_logits);

    const CocOutput coc = coc_loss(logits, config.theta_coc);
    out.coc = coc.value;
    if (config.beta != 0.0) {
        auto g = grad_logits.values();
        const auto gc = coc.grad_logits.values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += config.beta * gc[i];
    }
    pairwise_scores_backward(features, bank.points, config.classification_metric,
                             detail::scaled(grad_logits, config.tau), out.grad_features, out.grad_points);

    const LossOutput amc = amc_loss(features, bank, labels, config.amc_metric);
    out.amc = amc.value;
    if (config.alpha != 0.0) {
        auto gf = out.grad_features.values();
        const auto af = amc.grad_features.values();
        for (std::size_t i = 0; i < gf.size(); ++i) gf[i] += config.alpha * af[i];
        auto gp = out.grad_points.values();
        const auto ap = amc.grad_points.values();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += config.alpha * ap[i];
        for (std::size_t k = 0; k < out.grad_margins.size(); ++k) out.grad_margins[k] += config.alpha * amc.grad_margins[k];
    }

    out.value = out.classification + config.alpha * out.amc + config.beta * out.coc;
    if (!std::isfinite(out.value)) throw NumericError("total_loss: non-finite value");
    return out;
}

}  // namespace ossar
