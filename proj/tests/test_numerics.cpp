#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ossar/numerics.hpp"

using namespace ossar;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& v : m.values()) v = rng.normal();
    return m;
}

}  // namespace

TEST(PairwiseScores, AngularOrthogonalIsZero) {
    const Matrix f{{1.0, 0.0}};
    const Matrix p{{0.0, 1.0}};
    EXPECT_DOUBLE_EQ(pairwise_scores(f, p, DistanceMetric::Angular)(0, 0), 0.0);
}

TEST(PairwiseScores, AngularParallelIsOne) {
    const Matrix f{{2.0, 0.0}};
    const Matrix p{{1.0, 0.0}};
    EXPECT_DOUBLE_EQ(pairwise_scores(f, p, DistanceMetric::Angular)(0, 0), 1.0);
}

TEST(PairwiseScores, EuclideanCompositeHandValue) {
    // ((1-3)^2 + (2-4)^2) / 2 - (1*3 + 2*4) = 4 - 11
    const Matrix f{{1.0, 2.0}};
    const Matrix p{{3.0, 4.0}};
    EXPECT_DOUBLE_EQ(pairwise_scores(f, p, DistanceMetric::EuclideanRP)(0, 0), -7.0);
}

TEST(PairwiseScores, ManhattanAndChebyshev) {
    const Matrix f{{1.0, -2.0, 0.5}};
    const Matrix p{{0.0, 1.0, 0.5}};
    EXPECT_DOUBLE_EQ(pairwise_scores(f, p, DistanceMetric::Manhattan)(0, 0), 4.0);
    EXPECT_DOUBLE_EQ(pairwise_scores(f, p, DistanceMetric::Chebyshev)(0, 0), 3.0);
}

TEST(PairwiseScores, DimensionMismatchIsConfigError) {
    const Matrix f(2, 3);
    const Matrix p(2, 4);
    EXPECT_THROW(pairwise_scores(f, p, DistanceMetric::EuclideanRP), ConfigError);
}

TEST(PairwiseScores, ZeroNormUnderAngularIsDegenerate) {
    const Matrix f{{0.0, 0.0}, {1.0, 1.0}};
    const Matrix p{{1.0, 0.0}};
    EXPECT_THROW(pairwise_scores(f, p, DistanceMetric::Angular), DegenerateInputError);
    EXPECT_THROW(pairwise_scores(p, Matrix{{0.0, 0.0}}, DistanceMetric::Angular), DegenerateInputError);
    // The other metrics accept zero vectors.
    EXPECT_NO_THROW(pairwise_scores(f, p, DistanceMetric::EuclideanRP));
}

TEST(PairwiseScores, AngularScaleInvariantAndBounded) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix f = random_matrix(rng, 5, 6);
        const Matrix p = random_matrix(rng, 3, 6);
        const Matrix base = pairwise_scores(f, p, DistanceMetric::Angular);
        const double c = rng.uniform(0.01, 100.0);
        Matrix fc = f;
        for (double& v : fc.values()) v *= c;
        const Matrix scaled = pairwise_scores(fc, p, DistanceMetric::Angular);
        for (std::size_t i = 0; i < base.size(); ++i) {
            EXPECT_NEAR(base.values()[i], scaled.values()[i], 1e-10);
            EXPECT_LE(std::abs(base.values()[i]), 1.0);
        }
    }
}

TEST(PairwiseScores, LpDistancesTranslationInvariantAndOrdered) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix f = random_matrix(rng, 4, 5);
        const Matrix p = random_matrix(rng, 3, 5);
        std::vector<double> shift(5);
        for (double& s : shift) s = rng.normal() * 3.0;
        Matrix fs = f, ps = p;
        for (std::size_t r = 0; r < fs.rows(); ++r)
            for (std::size_t c = 0; c < 5; ++c) fs(r, c) += shift[c];
        for (std::size_t r = 0; r < ps.rows(); ++r)
            for (std::size_t c = 0; c < 5; ++c) ps(r, c) += shift[c];
        const Matrix l1 = pairwise_scores(f, p, DistanceMetric::Manhattan);
        const Matrix linf = pairwise_scores(f, p, DistanceMetric::Chebyshev);
        const Matrix l1s = pairwise_scores(fs, ps, DistanceMetric::Manhattan);
        const Matrix linfs = pairwise_scores(fs, ps, DistanceMetric::Chebyshev);
        for (std::size_t i = 0; i < l1.size(); ++i) {
            EXPECT_NEAR(l1.values()[i], l1s.values()[i], 1e-9);
            EXPECT_NEAR(linf.values()[i], linfs.values()[i], 1e-9);
            EXPECT_GE(l1.values()[i], linf.values()[i]);
            EXPECT_GE(linf.values()[i], 0.0);
        }
    }
}

TEST(PairwiseScores, GradientsMatchFiniteDifferences) {
    Rng rng(3);
    for (DistanceMetric m : {DistanceMetric::EuclideanRP, DistanceMetric::Angular, DistanceMetric::Manhattan,
                             DistanceMetric::Chebyshev}) {
        for (int trial = 0; trial < 10; ++trial) {
            const Matrix f = random_matrix(rng, 3, 4);
            const Matrix p = random_matrix(rng, 2, 4);
            const Matrix upstream = random_matrix(rng, 3, 2);
            Matrix gf(3, 4), gp(2, 4);
            pairwise_scores_backward(f, p, m, upstream, gf, gp);
            std::vector<double> x(f.values().begin(), f.values().end());
            x.insert(x.end(), p.values().begin(), p.values().end());
            std::vector<double> g(gf.values().begin(), gf.values().end());
            g.insert(g.end(), gp.values().begin(), gp.values().end());
            Matrix fp = f, pp = p;
            const double err = grad_check(
                [&](std::span<const double> v) {
                    std::copy(v.begin(), v.begin() + 12, fp.values().begin());
                    std::copy(v.begin() + 12, v.end(), pp.values().begin());
                    const Matrix s = pairwise_scores(fp, pp, m);
                    return dot(s.values(), upstream.values());
                },
                x, g, 1e-5);
            EXPECT_LT(err, 1e-4) << to_string(m);
        }
    }
}

TEST(SoftmaxRows, UniformRow) {
    const Matrix s = softmax_rows(Matrix{{0.0, 0.0, 0.0}}, 1.0);
    for (double v : s.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxRows, LargeScoresDoNotOverflow) {
    const Matrix s = softmax_rows(Matrix{{1000.0, 0.0}}, 1.0);
    EXPECT_NEAR(s(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(s(0, 1), 0.0, 1e-12);
    EXPECT_TRUE(s.all_finite());
}

TEST(SoftmaxRows, ClosedFormTwoClasses) {
    const Matrix s = softmax_rows(Matrix{{1.0, 2.0}}, 1.0);
    const double e = std::exp(1.0);
    EXPECT_NEAR(s(0, 0), 1.0 / (1.0 + e), 1e-15);
    EXPECT_NEAR(s(0, 1), e / (1.0 + e), 1e-15);
    EXPECT_NEAR(s(0, 0), 0.26894, 1e-5);
}

TEST(SoftmaxRows, NonPositiveTemperatureRejected) {
    EXPECT_THROW(softmax_rows(Matrix{{1.0}}, 0.0), ConfigError);
    EXPECT_THROW(softmax_rows(Matrix{{1.0}}, -1.0), ConfigError);
}

TEST(SoftmaxRows, RowsSumToOneAndKeepArgmax) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix m = random_matrix(rng, 4, 5);
        for (double& v : m.values()) v *= 20.0;
        const double tau = rng.uniform(0.1, 5.0);
        const Matrix s = softmax_rows(m, tau);
        for (std::size_t r = 0; r < 4; ++r) {
            const auto row = s.row(r);
            EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
            EXPECT_EQ(argmax(row), argmax(m.row(r)));
        }
    }
}

TEST(Argmax, TiesGoToLowestIndex) {
    const std::vector<double> v{0.5, 0.5, 0.1};
    EXPECT_EQ(argmax(v), 0u);
    const std::vector<double> w{0.1, 0.9, 0.9};
    EXPECT_EQ(argmax(w), 1u);
}

TEST(GradCheck, QuadraticIsExact) {
    const std::vector<double> x{3.0};
    const std::vector<double> g{6.0};
    const double err = grad_check([](std::span<const double> v) { return v[0] * v[0]; }, x, g, 1e-5);
    EXPECT_LT(err, 1e-8);
}

TEST(GradCheck, LinearIsExact) {
    const std::vector<double> x{0.3, -2.0, 5.5, 1e3};
    const std::vector<double> g(4, 1.0);
    const double err = grad_check(
        [](std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }, x, g, 1e-5);
    // Only round-off remains: one ulp of 1e3 over 2e-5 is about 6e-9.
    EXPECT_LT(err, 1e-8);
}

TEST(GradCheck, DetectsWrongGradient) {
    const std::vector<double> x{1.0, 2.0};
    const std::vector<double> g{2.0, 0.0};  // true gradient is (2, 4)
    const double err =
        grad_check([](std::span<const double> v) { return v[0] * v[0] + v[1] * v[1]; }, x, g, 1e-5);
    EXPECT_GT(err, 0.5);
}

TEST(GradCheck, NonFiniteEvaluationIsNumericError) {
    const std::vector<double> x{0.0};
    const std::vector<double> g{0.0};
    EXPECT_THROW(grad_check([](std::span<const double> v) { return std::log(v[0] * v[0] - 1.0); }, x, g, 1e-5),
                 NumericError);
}

TEST(GradCheck, EpsOutOfRangeRejected) {
    const std::vector<double> x{0.0};
    EXPECT_THROW(grad_check([](std::span<const double>) { return 0.0; }, x, x, 1e-2), ConfigError);
}

TEST(Rng, DeterministicAcrossInstances) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(a.uniform(), b.uniform());
        EXPECT_EQ(a.normal(), b.normal());
        EXPECT_EQ(a.below(17), b.below(17));
    }
}

TEST(Rng, UniformInRangeAndNormalMoments) {
    Rng rng(1);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.05);
    EXPECT_NEAR(sq / n, 1.0, 0.05);
}
