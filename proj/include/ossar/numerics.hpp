#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ossar/errors.hpp"

namespace ossar {

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ConfigError("matrix data length " + std::to_string(data_.size()) +
                              " does not match " + std::to_string(rows_) + "x" +
                              std::to_string(cols_));
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ == 0 ? 0 : init.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : init) {
            if (r.size() != cols_) throw ConfigError("ragged matrix initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> values() noexcept { return data_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& storage() const noexcept { return data_; }

    [[nodiscard]] bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

/// Seeded generator whose output is identical across standard libraries.
///
/// std::mt19937_64 has a fully specified sequence, but the standard
/// distributions do not, so the conversions to uniform/normal/bounded
/// integers are done here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(angle);
        has_spare_ = true;
        return r * std::cos(angle);
    }

    /// Uniform integer in [0, n), unbiased.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw UsageError("Rng::below(0)");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x = 0;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Distance kernels
// ---------------------------------------------------------------------------

enum class DistanceMetric { EuclideanRP, Angular, Manhattan, Chebyshev };

inline constexpr double kZeroNormGuard = 1e-12;

inline std::string_view to_string(DistanceMetric m) noexcept {
    switch (m) {
        case DistanceMetric::EuclideanRP: return "euclidean";
        case DistanceMetric::Angular: return "angular";
        case DistanceMetric::Manhattan: return "manhattan";
        case DistanceMetric::Chebyshev: return "chebyshev";
    }
    return "?";
}

inline DistanceMetric parse_metric(std::string_view s) {
    if (s == "euclidean" || s == "euclidean_rp" || s == "EuclideanRP") return DistanceMetric::EuclideanRP;
    if (s == "angular" || s == "Angular") return DistanceMetric::Angular;
    if (s == "manhattan" || s == "Manhattan") return DistanceMetric::Manhattan;
    if (s == "chebyshev" || s == "Chebyshev") return DistanceMetric::Chebyshev;
    throw ConfigError("unknown distance metric '" + std::string(s) + "'");
}

namespace detail {

inline double checked_norm(std::span<const double> v, const char* what) {
    const double n = norm2(v);
    if (!(n > kZeroNormGuard)) {
        throw DegenerateInputError(std::string("zero-norm ") + what + " under angular metric");
    }
    return n;
}

inline double sign(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// Score between one feature and one point.
///
/// EuclideanRP is the reciprocal-point composite ||f-p||^2/D - f.p, Angular is
/// cosine similarity, Manhattan and Chebyshev are the L1 and L-inf distances.
inline double pair_score(std::span<const double> f, std::span<const double> p, DistanceMetric metric) {
    const std::size_t d = f.size();
    switch (metric) {
        case DistanceMetric::EuclideanRP: {
            double sq = 0.0, fp = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double diff = f[i] - p[i];
                sq += diff * diff;
                fp += f[i] * p[i];
            }
            return sq / static_cast<double>(d) - fp;
        }
        case DistanceMetric::Angular: {
            const double nf = detail::checked_norm(f, "feature");
            const double np = detail::checked_norm(p, "point");
            return std::clamp(dot(f, p) / (nf * np), -1.0, 1.0);
        }
        case DistanceMetric::Manhattan: {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += std::abs(f[i] - p[i]);
            return s;
        }
        case DistanceMetric::Chebyshev: {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s = std::max(s, std::abs(f[i] - p[i]));
            return s;
        }
    }
    return 0.0;
}

/// Accumulates upstream * d(pair_score)/df into grad_f and upstream * d/dp into grad_p.
/// Kinks of |.| and max take the zero / lowest-index subgradient.
inline void pair_score_grad(std::span<const double> f, std::span<const double> p, DistanceMetric metric,
                            double upstream, std::span<double> grad_f, std::span<double> grad_p) {
    const std::size_t d = f.size();
    if (upstream == 0.0) return;
    switch (metric) {
        case DistanceMetric::EuclideanRP: {
            const double inv_d = 2.0 / static_cast<double>(d);
            for (std::size_t i = 0; i < d; ++i) {
                const double diff = (f[i] - p[i]) * inv_d;
                grad_f[i] += upstream * (diff - p[i]);
                grad_p[i] += upstream * (-diff - f[i]);
            }
            return;
        }
        case DistanceMetric::Angular: {
            const double nf = detail::checked_norm(f, "feature");
            const double np = detail::checked_norm(p, "point");
            const double inv = 1.0 / (nf * np);
            const double c = dot(f, p) * inv;
            for (std::size_t i = 0; i < d; ++i) {
                grad_f[i] += upstream * (p[i] * inv - c * f[i] / (nf * nf));
                grad_p[i] += upstream * (f[i] * inv - c * p[i] / (np * np));
            }
            return;
        }
        case DistanceMetric::Manhattan: {
            for (std::size_t i = 0; i < d; ++i) {
                const double s = detail::sign(f[i] - p[i]);
                grad_f[i] += upstream * s;
                grad_p[i] -= upstream * s;
            }
            return;
        }
        case DistanceMetric::Chebyshev: {
            std::size_t best = 0;
            double best_abs = -1.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double a = std::abs(f[i] - p[i]);
                if (a > best_abs) {
                    best_abs = a;
                    best = i;
                }
            }
            const double s = detail::sign(f[best] - p[best]);
            grad_f[best] += upstream * s;
            grad_p[best] -= upstream * s;
            return;
        }
    }
}

/// B x K matrix of pair_score(features[b], points[k]).
inline Matrix pairwise_scores(const Matrix& features, const Matrix& points, DistanceMetric metric) {
    if (features.cols() == 0 || features.cols() != points.cols()) {
        throw ConfigError("pairwise_scores: feature dim " + std::to_string(features.cols()) +
                          " vs point dim " + std::to_string(points.cols()));
    }
    Matrix out(features.rows(), points.rows());
    for (std::size_t b = 0; b < features.rows(); ++b) {
        for (std::size_t k = 0; k < points.rows(); ++k) {
            out(b, k) = pair_score(features.row(b), points.row(k), metric);
        }
    }
    return out;
}

/// Backpropagates grad_scores (B x K) of pairwise_scores into feature and point gradients.
inline void pairwise_scores_backward(const Matrix& features, const Matrix& points, DistanceMetric metric,
                                     const Matrix& grad_scores, Matrix& grad_features, Matrix& grad_points) {
    for (std::size_t b = 0; b < features.rows(); ++b) {
        for (std::size_t k = 0; k < points.rows(); ++k) {
            pair_score_grad(features.row(b), points.row(k), metric, grad_scores(b, k), grad_features.row(b),
                            grad_points.row(k));
        }
    }
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Row-wise softmax of scores * tau, max-subtracted.
inline Matrix softmax_rows(const Matrix& scores, double tau) {
    if (!(tau > 0.0)) throw ConfigError("softmax temperature must be positive");
    if (!scores.all_finite()) throw NumericError("softmax_rows: non-finite score");
    Matrix out(scores.rows(), scores.cols());
    for (std::size_t r = 0; r < scores.rows(); ++r) {
        const auto in = scores.row(r);
        auto o = out.row(r);
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : in) mx = std::max(mx, tau * v);
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp(tau * in[c] - mx);
            sum += o[c];
        }
        for (double& v : o) v /= sum;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

/// Max relative error between central differences of f at x and analytic_grad.
///
/// Per coordinate: |g_fd - g_an| / max(1, |g_fd| + |g_an|).
inline double grad_check(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                         std::span<const double> analytic_grad, double eps) {
    if (x.size() != analytic_grad.size()) throw ConfigError("grad_check: gradient length mismatch");
    if (!(eps >= 1e-7 && eps <= 1e-3)) throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");
    std::vector<double> probe(x.begin(), x.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + eps;
        const double up = f(probe);
        probe[i] = x[i] - eps;
        const double down = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("grad_check: non-finite evaluation at coordinate " + std::to_string(i));
        }
        const double fd = (up - down) / (2.0 * eps);
        const double err = std::abs(fd - analytic_grad[i]) / std::max(1.0, std::abs(fd) + std::abs(analytic_grad[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace ossar
