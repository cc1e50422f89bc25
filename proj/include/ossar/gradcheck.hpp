#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ossar/losses.hpp"
#include "ossar/model.hpp"
#include "ossar/numerics.hpp"

// Finite-difference checks of every hand-derived gradient on seeded random
// instances (B <= 8, D <= 8, K <= 5).
namespace ossar::gradcheck {

struct Instance {
    Matrix features;
    ReciprocalBank bank;
    std::vector<int> labels;
};

/// Random batch with margins set to a random fraction of a typical distance so
/// both active and inactive hinge terms appear.
inline Instance random_instance(std::uint64_t seed, DistanceMetric amc_metric = DistanceMetric::EuclideanRP) {
    Rng rng(seed);
    const std::size_t b = 1 + rng.below(8);
    const std::size_t d = 2 + rng.below(7);
    const std::size_t k = 2 + rng.below(4);
    Instance inst;
    inst.features = Matrix(b, d);
    for (double& v : inst.features.values()) v = rng.normal();
    inst.bank.points = Matrix(k, d);
    for (double& v : inst.bank.points.values()) v = rng.normal();
    double typical = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < k; ++j) typical += amc_distance(inst.features.row(i), inst.bank.points.row(j), amc_metric);
    }
    typical /= static_cast<double>(b * k);
    inst.bank.margins.resize(k);
    for (double& r : inst.bank.margins) r = rng.uniform(0.0, 1.5) * typical;
    for (std::size_t i = 0; i < b; ++i) inst.labels.push_back(static_cast<int>(rng.below(k)));
    return inst;
}

/// Packs (features | points | margins) into one vector.
inline std::vector<double> flatten(const Matrix& features, const ReciprocalBank& bank) {
    std::vector<double> x(features.values().begin(), features.values().end());
    x.insert(x.end(), bank.points.values().begin(), bank.points.values().end());
    x.insert(x.end(), bank.margins.begin(), bank.margins.end());
    return x;
}

inline void unflatten(std::span<const double> x, Matrix& features, ReciprocalBank& bank) {
    std::size_t o = 0;
    for (double& v : features.values()) v = x[o++];
    for (double& v : bank.points.values()) v = x[o++];
    for (double& v : bank.margins) v = x[o++];
}

inline std::vector<double> flatten_grads(const LossOutput& out) {
    std::vector<double> g(out.grad_features.values().begin(), out.grad_features.values().end());
    g.insert(g.end(), out.grad_points.values().begin(), out.grad_points.values().end());
    g.insert(g.end(), out.grad_margins.begin(), out.grad_margins.end());
    return g;
}

using LossFn = std::function<LossOutput(const Matrix&, const ReciprocalBank&, std::span<const int>)>;

/// Max relative error of a LossOutput-producing function on one instance.
inline double check_loss(const LossFn& fn, const Instance& inst, double eps = 1e-5) {
    const LossOutput out = fn(inst.features, inst.bank, inst.labels);
    const auto x = flatten(inst.features, inst.bank);
    const auto g = flatten_grads(out);
    Matrix f = inst.features;
    ReciprocalBank bank = inst.bank;
    return grad_check(
        [&](std::span<const double> probe) {
            unflatten(probe, f, bank);
            return fn(f, bank, inst.labels).value;
        },
        x, g, eps);
}

/// COC gradient w.r.t. logits on tau-scaled scores of the instance.
inline double check_coc(const Instance& inst, DistanceMetric metric, double tau, double theta, double eps = 1e-5) {
    Matrix logits = pairwise_scores(inst.features, inst.bank.points, metric);
    for (double& v : logits.values()) v *= tau;
    const CocOutput out = coc_loss(logits, theta);
    Matrix probe_m = logits;
    return grad_check(
        [&](std::span<const double> probe) {
            std::copy(probe.begin(), probe.end(), probe_m.values().begin());
            return coc_loss(probe_m, theta).value;
        },
        logits.values(), out.grad_logits.values(), eps);
}

/// Embedder parameters and inputs under a random linear readout loss.
inline double check_embedder(std::uint64_t seed, double eps = 1e-5) {
    Rng rng(seed);
    const std::size_t b = 1 + rng.below(8);
    ModelConfig mc;
    mc.layer_dims = {2 + rng.below(7), 2 + rng.below(7), 2 + rng.below(7)};
    mc.seed = seed;
    const Model model = init_model(mc, 2);
    Matrix inputs(b, mc.layer_dims.front());
    for (double& v : inputs.values()) v = rng.normal();
    Matrix readout(b, mc.layer_dims.back());
    for (double& v : readout.values()) v = rng.normal();

    auto loss = [&](const EmbedderParams& p, const Matrix& x) {
        const Matrix f = embed_forward(p, x).features;
        return dot(f.values(), readout.values());
    };
    const auto fwd = embed_forward(model.embedder, inputs);
    const auto back = embed_backward(model.embedder, fwd.cache, readout);

    std::vector<double> x, g;
    for (std::size_t l = 0; l < model.embedder.num_layers(); ++l) {
        x.insert(x.end(), model.embedder.weights[l].values().begin(), model.embedder.weights[l].values().end());
        x.insert(x.end(), model.embedder.biases[l].begin(), model.embedder.biases[l].end());
        g.insert(g.end(), back.params.weights[l].values().begin(), back.params.weights[l].values().end());
        g.insert(g.end(), back.params.biases[l].begin(), back.params.biases[l].end());
    }
    x.insert(x.end(), inputs.values().begin(), inputs.values().end());
    g.insert(g.end(), back.inputs.values().begin(), back.inputs.values().end());

    EmbedderParams p = model.embedder;
    Matrix in = inputs;
    return grad_check(
        [&](std::span<const double> probe) {
            std::size_t o = 0;
            for (std::size_t l = 0; l < p.num_layers(); ++l) {
                for (double& v : p.weights[l].values()) v = probe[o++];
                for (double& v : p.biases[l]) v = probe[o++];
            }
            for (double& v : in.values()) v = probe[o++];
            return loss(p, in);
        },
        x, g, eps);
}

struct CheckResult {
    std::string name;
    double max_error = 0.0;
    std::size_t instances = 0;
};

/// Runs every gradient family on `instances` seeds starting at `base_seed`.
inline std::vector<CheckResult> run_suite(std::size_t instances = 20, std::uint64_t base_seed = 1000) {
    std::vector<CheckResult> results;
    auto run = [&](std::string name, const std::function<double(std::uint64_t)>& one) {
        CheckResult r{std::move(name), 0.0, instances};
        for (std::size_t i = 0; i < instances; ++i) r.max_error = std::max(r.max_error, one(base_seed + i));
        results.push_back(std::move(r));
    };

    for (DistanceMetric m : {DistanceMetric::EuclideanRP, DistanceMetric::Angular}) {
        run("classification_loss/" + std::string(to_string(m)), [m](std::uint64_t s) {
            return check_loss([m](const Matrix& f, const ReciprocalBank& b, std::span<const int> y) {
                return classification_loss(f, b, y, m, 1.0);
            }, random_instance(s));
        });
    }
    for (DistanceMetric m : {DistanceMetric::EuclideanRP, DistanceMetric::Angular, DistanceMetric::Manhattan,
                             DistanceMetric::Chebyshev}) {
        run("amc_loss/" + std::string(to_string(m)), [m](std::uint64_t s) {
            return check_loss([m](const Matrix& f, const ReciprocalBank& b, std::span<const int> y) {
                return amc_loss(f, b, y, m);
            }, random_instance(s, m));
        });
    }
    run("coc_loss", [](std::uint64_t s) {
        Rng rng(s ^ 0xC0C);
        const double theta = rng.uniform(0.0, 1.0);
        const auto metric = (s % 2 == 0) ? DistanceMetric::Angular : DistanceMetric::EuclideanRP;
        return check_coc(random_instance(s), metric, 1.0, theta);
    });
    for (DistanceMetric m : {DistanceMetric::EuclideanRP, DistanceMetric::Angular}) {
        run("total_loss/" + std::string(to_string(m)), [m](std::uint64_t s) {
            LossConfig cfg;
            cfg.classification_metric = m;
            cfg.alpha = 0.1;
            cfg.beta = 0.1;
            cfg.theta_coc = 0.1;
            cfg.tau = 1.0 + 0.5 * static_cast<double>(s % 3);
            return check_loss([cfg](const Matrix& f, const ReciprocalBank& b, std::span<const int> y) {
                return static_cast<LossOutput>(total_loss(f, b, y, cfg));
            }, random_instance(s));
        });
    }
    run("embedder", [](std::uint64_t s) { return check_embedder(s); });
    return results;
}

}  // namespace ossar::gradcheck
