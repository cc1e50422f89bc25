#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "ossar/data.hpp"
#include "ossar/errors.hpp"
#include "ossar/losses.hpp"
#include "ossar/model.hpp"
#include "ossar/numerics.hpp"

namespace ossar {

/// One operating point of a threshold sweep; `rate` is TPR (ROC) or CCR (OSCR).
struct CurvePoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double rate = 0.0;

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct EvalReport {
    double closed_accuracy = 0.0;
    double auroc = 0.0;
    double oscr = 0.0;
    std::vector<CurvePoint> roc_curve;
    std::vector<CurvePoint> oscr_curve;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct OscrResult {
    double value = 0.0;
    std::vector<CurvePoint> curve;
};

/// Per-row argmax, lowest index on ties.
inline std::vector<int> predict_closed(const Matrix& logits) {
    if (logits.rows() == 0) throw UsageError("predict_closed: empty batch");
    if (!logits.all_finite()) throw NumericError("predict_closed: non-finite logits");
    std::vector<int> out(logits.rows());
    for (std::size_t b = 0; b < logits.rows(); ++b) out[b] = static_cast<int>(argmax(logits.row(b)));
    return out;
}

/// Max logit per row; higher means more known-like.
inline std::vector<double> openset_score(const Matrix& logits) {
    if (!logits.all_finite()) throw NumericError("openset_score: non-finite logits");
    std::vector<double> out(logits.rows());
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        const auto row = logits.row(b);
        out[b] = *std::max_element(row.begin(), row.end());
    }
    return out;
}

/// tau * Dist(F(x), P) for a batch of raw inputs.
inline Matrix compute_logits(const Model& model, const Matrix& inputs, DistanceMetric metric, double tau) {
    const Matrix features = embed_forward(model.embedder, inputs).features;
    Matrix logits = pairwise_scores(features, model.bank.points, metric);
    for (double& v : logits.values()) v *= tau;
    return logits;
}

namespace detail {

inline void check_known_unknown(std::span<const double> scores, const std::vector<bool>& is_known,
                                std::size_t& n_known, std::size_t& n_unknown) {
    if (scores.size() != is_known.size()) throw EvaluationError("scores and known flags differ in length");
    n_known = static_cast<std::size_t>(std::count(is_known.begin(), is_known.end(), true));
    n_unknown = is_known.size() - n_known;
    if (n_known == 0 || n_unknown == 0) throw EvaluationError("need at least one known and one unknown sample");
    for (double s : scores) {
        if (!std::isfinite(s)) throw NumericError("non-finite open-set score");
    }
}

/// Indices sorted by descending score; stable so equal scores keep input order.
inline std::vector<std::size_t> order_descending(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

/// Sweeps every distinct score as a threshold (accept s >= t). The curve starts
/// at (fpr, rate) = (0, 0) with threshold +inf and ends at fpr = 1.
inline std::vector<CurvePoint> sweep_thresholds(std::span<const double> scores, const std::vector<bool>& is_known,
                                                const std::vector<bool>& counts_as_hit, double n_known_denominator,
                                                double n_unknown) {
    const auto order = order_descending(scores);
    std::vector<CurvePoint> curve;
    curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    double hits = 0.0, false_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double t = scores[order[i]];
        while (i < order.size() && scores[order[i]] == t) {
            const std::size_t s = order[i];
            if (is_known[s]) {
                if (counts_as_hit[s]) hits += 1.0;
            } else {
                false_pos += 1.0;
            }
            ++i;
        }
        curve.push_back({t, false_pos / n_unknown, hits / n_known_denominator});
    }
    return curve;
}

inline double trapezoid(std::span<const CurvePoint> curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        area += (curve[i].fpr - curve[i - 1].fpr) * 0.5 * (curve[i].rate + curve[i - 1].rate);
    }
    return area;
}

}  // namespace detail

/// Known-vs-unknown ROC over all distinct thresholds.
inline std::vector<CurvePoint> roc_curve(std::span<const double> scores, const std::vector<bool>& is_known) {
    std::size_t nk = 0, nu = 0;
    detail::check_known_unknown(scores, is_known, nk, nu);
    return detail::sweep_thresholds(scores, is_known, is_known, static_cast<double>(nk), static_cast<double>(nu));
}

inline double roc_area(std::span<const CurvePoint> curve) { return detail::trapezoid(curve); }

/// Mann-Whitney AUROC: fraction of (known, unknown) pairs where the known scores higher, ties count 1/2.
inline double auroc(std::span<const double> scores, const std::vector<bool>& is_known) {
    std::size_t nk = 0, nu = 0;
    detail::check_known_unknown(scores, is_known, nk, nu);
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Midranks (1-based) over tie blocks.
    double rank_sum_known = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t m = i; m < j; ++m) {
            if (is_known[idx[m]]) rank_sum_known += midrank;
        }
        i = j;
    }
    const double n1 = static_cast<double>(nk), n0 = static_cast<double>(nu);
    const double u = rank_sum_known - n1 * (n1 + 1.0) / 2.0;
    return u / (n1 * n0);
}

/// Open-set classification rate: area under CCR vs FPR.
///
/// `true_labels` is only read where is_known is set.
inline OscrResult oscr(const Matrix& logits, std::span<const int> true_labels, const std::vector<bool>& is_known) {
    if (true_labels.size() != logits.rows()) throw EvaluationError("label count does not match logits");
    const auto scores = openset_score(logits);
    std::size_t nk = 0, nu = 0;
    detail::check_known_unknown(scores, is_known, nk, nu);
    const auto pred = predict_closed(logits);
    std::vector<bool> correct(scores.size());
    for (std::size_t b = 0; b < scores.size(); ++b) correct[b] = is_known[b] && pred[b] == true_labels[b];
    OscrResult out;
    out.curve = detail::sweep_thresholds(scores, is_known, correct, static_cast<double>(nk), static_cast<double>(nu));
    out.value = detail::trapezoid(out.curve);
    return out;
}

/// Closed-set accuracy over known samples only.
inline double closed_accuracy(const Matrix& logits, std::span<const int> true_labels, const std::vector<bool>& is_known) {
    const auto pred = predict_closed(logits);
    std::size_t n = 0, hit = 0;
    for (std::size_t b = 0; b < pred.size(); ++b) {
        if (!is_known[b]) continue;
        ++n;
        if (pred[b] == true_labels[b]) ++hit;
    }
    if (n == 0) throw EvaluationError("no known samples for closed-set accuracy");
    return static_cast<double>(hit) / static_cast<double>(n);
}

/// Scores test_known followed by test_unknown and assembles all metrics.
inline EvalReport evaluate(const Model& model, const OpenSetSplit& split, DistanceMetric metric, double tau) {
    const Matrix lk = compute_logits(model, split.test_known.inputs, metric, tau);
    const Matrix lu = compute_logits(model, split.test_unknown.inputs, metric, tau);
    const std::size_t nk = lk.rows(), nu = lu.rows();
    Matrix logits(nk + nu, lk.cols());
    std::copy(lk.values().begin(), lk.values().end(), logits.values().begin());
    std::copy(lu.values().begin(), lu.values().end(), logits.values().begin() + static_cast<std::ptrdiff_t>(lk.size()));

    std::vector<int> labels(split.test_known.labels);
    labels.resize(nk + nu, -1);
    std::vector<bool> is_known(nk + nu, false);
    std::fill_n(is_known.begin(), nk, true);

    EvalReport r;
    r.closed_accuracy = closed_accuracy(logits, labels, is_known);
    const auto scores = openset_score(logits);
    r.auroc = auroc(scores, is_known);
    r.roc_curve = roc_curve(scores, is_known);
    auto o = oscr(logits, labels, is_known);
    r.oscr = o.value;
    r.oscr_curve = std::move(o.curve);
    return r;
}

/// CSV of one curve: header `threshold,fpr,<rate_name>`, one row per distinct
/// threshold (the +inf origin is omitted), 17 significant digits.
inline void write_curve_csv(std::ostream& os, std::span<const CurvePoint> curve, std::string_view rate_name) {
    os << "threshold,fpr," << rate_name << '\n';
    for (const auto& p : curve) {
        if (std::isinf(p.threshold)) continue;
        os << format_double(p.threshold) << ',' << format_double(p.fpr) << ',' << format_double(p.rate) << '\n';
    }
}

inline void save_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve,
                           std::string_view rate_name) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write_curve_csv(os, curve, rate_name);
}

}  // namespace ossar
