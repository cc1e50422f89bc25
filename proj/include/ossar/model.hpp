#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ossar/binary_io.hpp"
#include "ossar/errors.hpp"
#include "ossar/numerics.hpp"

namespace ossar {

/// Multilayer perceptron F(x): ReLU on hidden layers, identity on the output.
/// Layer l maps dims[l] -> dims[l+1] as x * W + b, W stored as in x out.
struct EmbedderParams {
    std::vector<std::size_t> layer_dims;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    [[nodiscard]] std::size_t num_layers() const noexcept { return weights.size(); }
    [[nodiscard]] std::size_t input_dim() const noexcept { return layer_dims.front(); }
    [[nodiscard]] std::size_t output_dim() const noexcept { return layer_dims.back(); }

    friend bool operator==(const EmbedderParams&, const EmbedderParams&) = default;
};

/// One reciprocal point per known class plus a learnable margin per class.
struct ReciprocalBank {
    Matrix points;                 // K x D
    std::vector<double> margins;   // K, kept >= 0

    [[nodiscard]] std::size_t num_classes() const noexcept { return points.rows(); }

    void project_margins() noexcept {
        for (double& r : margins) r = std::max(r, 0.0);
    }

    friend bool operator==(const ReciprocalBank&, const ReciprocalBank&) = default;
};

struct ModelConfig {
    std::vector<std::size_t> layer_dims{8, 64, 32};
    std::uint64_t seed = 0;
    double init_scale = 1.0;
};

/// Trainable snapshot: embedder plus reciprocal bank.
struct Model {
    EmbedderParams embedder;
    ReciprocalBank bank;

    friend bool operator==(const Model&, const Model&) = default;
};

inline void validate_layer_dims(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) throw ConfigError("layer_dims needs at least an input and an output size");
    for (std::size_t d : dims) {
        if (d == 0) throw ConfigError("layer_dims entries must be positive");
    }
}

inline Model init_model(const ModelConfig& config, std::size_t num_classes) {
    validate_layer_dims(config.layer_dims);
    if (num_classes < 2) throw ConfigError("need at least 2 known classes");
    if (!(config.init_scale > 0.0)) throw ConfigError("init_scale must be positive");

    Rng rng(config.seed);
    Model m;
    auto& e = m.embedder;
    e.layer_dims = config.layer_dims;
    for (std::size_t l = 0; l + 1 < config.layer_dims.size(); ++l) {
        const std::size_t in = config.layer_dims[l];
        const std::size_t out = config.layer_dims[l + 1];
        const double bound = config.init_scale / std::sqrt(static_cast<double>(in));
        Matrix w(in, out);
        for (double& v : w.values()) v = rng.uniform(-bound, bound);
        e.weights.push_back(std::move(w));
        e.biases.emplace_back(out, 0.0);
    }
    const std::size_t d = config.layer_dims.back();
    const double bound = config.init_scale / std::sqrt(static_cast<double>(d));
    m.bank.points = Matrix(num_classes, d);
    for (double& v : m.bank.points.values()) v = rng.uniform(-bound, bound);
    m.bank.margins.assign(num_classes, 0.0);
    return m;
}

/// Activations kept by embed_forward for the backward pass.
struct EmbedCache {
    std::vector<std::size_t> layer_dims;
    std::vector<Matrix> activations;     // activations[0] = inputs, activations[l+1] = layer l output
    std::vector<Matrix> pre_activations; // pre_activations[l] = layer l before ReLU
};

struct EmbedderGrads {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

struct EmbedForward {
    Matrix features;
    EmbedCache cache;
};

struct EmbedBackward {
    EmbedderGrads params;
    Matrix inputs;
};

inline EmbedForward embed_forward(const EmbedderParams& params, const Matrix& inputs) {
    if (inputs.cols() != params.input_dim()) {
        throw ConfigError("embed_forward: input has " + std::to_string(inputs.cols()) + " columns, model expects " +
                          std::to_string(params.input_dim()));
    }
    EmbedForward out;
    out.cache.layer_dims = params.layer_dims;
    out.cache.activations.push_back(inputs);
    const std::size_t batch = inputs.rows();
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const Matrix& a = out.cache.activations.back();
        const Matrix& w = params.weights[l];
        const auto& b = params.biases[l];
        Matrix z(batch, w.cols());
        for (std::size_t r = 0; r < batch; ++r) {
            auto zr = z.row(r);
            std::copy(b.begin(), b.end(), zr.begin());
            const auto ar = a.row(r);
            for (std::size_t i = 0; i < w.rows(); ++i) {
                const double ai = ar[i];
                if (ai == 0.0) continue;
                const auto wi = w.row(i);
                for (std::size_t j = 0; j < w.cols(); ++j) zr[j] += ai * wi[j];
            }
        }
        Matrix act = z;
        if (l + 1 < params.num_layers()) {
            for (double& v : act.values()) v = std::max(v, 0.0);
        }
        out.cache.pre_activations.push_back(std::move(z));
        out.cache.activations.push_back(std::move(act));
    }
    out.features = out.cache.activations.back();
    return out;
}

inline EmbedBackward embed_backward(const EmbedderParams& params, const EmbedCache& cache,
                                    const Matrix& grad_features) {
    if (cache.layer_dims != params.layer_dims || cache.pre_activations.size() != params.num_layers()) {
        throw UsageError("embed_backward: cache does not match the model");
    }
    const Matrix& out = cache.activations.back();
    if (grad_features.rows() != out.rows() || grad_features.cols() != out.cols()) {
        throw UsageError("embed_backward: gradient shape does not match cached forward pass");
    }
    const std::size_t batch = grad_features.rows();
    EmbedBackward res;
    res.params.weights.resize(params.num_layers());
    res.params.biases.resize(params.num_layers());

    Matrix g = grad_features;
    for (std::size_t l = params.num_layers(); l-- > 0;) {
        if (l + 1 < params.num_layers()) {
            const Matrix& z = cache.pre_activations[l];
            auto gv = g.values();
            const auto zv = z.values();
            for (std::size_t i = 0; i < gv.size(); ++i) {
                if (!(zv[i] > 0.0)) gv[i] = 0.0;
            }
        }
        const Matrix& a = cache.activations[l];
        const Matrix& w = params.weights[l];
        Matrix gw(w.rows(), w.cols());
        std::vector<double> gb(w.cols(), 0.0);
        Matrix ga(batch, w.rows());
        for (std::size_t r = 0; r < batch; ++r) {
            const auto gr = g.row(r);
            const auto ar = a.row(r);
            auto gar = ga.row(r);
            for (std::size_t j = 0; j < w.cols(); ++j) gb[j] += gr[j];
            for (std::size_t i = 0; i < w.rows(); ++i) {
                const auto wi = w.row(i);
                auto gwi = gw.row(i);
                double acc = 0.0;
                for (std::size_t j = 0; j < w.cols(); ++j) {
                    gwi[j] += ar[i] * gr[j];
                    acc += gr[j] * wi[j];
                }
                gar[i] = acc;
            }
        }
        res.params.weights[l] = std::move(gw);
        res.params.biases[l] = std::move(gb);
        g = std::move(ga);
    }
    res.inputs = std::move(g);
    return res;
}

// ---------------------------------------------------------------------------
// OSRP checkpoint
//
//   "OSRP" u16 version
//   u32 n_dims, u32 dims[n_dims]
//   per layer: f64 array weights (in*out, row-major), f64 array biases (out)
//   u32 K, u32 D, f64 array points (K*D)
//   f64 array margins (K)
// Arrays carry a u32 length prefix; everything is little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& os, const Model& model) {
    using namespace binary;
    put_magic(os, "OSRP");
    put_u16(os, kCheckpointVersion);
    const auto& e = model.embedder;
    put_u32(os, checked_u32(e.layer_dims.size()));
    for (std::size_t d : e.layer_dims) put_u32(os, checked_u32(d));
    for (std::size_t l = 0; l < e.num_layers(); ++l) {
        put_f64_array(os, e.weights[l].values());
        put_f64_array(os, e.biases[l]);
    }
    put_u32(os, checked_u32(model.bank.points.rows()));
    put_u32(os, checked_u32(model.bank.points.cols()));
    put_f64_array(os, model.bank.points.values());
    put_f64_array(os, model.bank.margins);
}

inline Model read_checkpoint(std::istream& is) {
    using namespace binary;
    expect_magic(is, "OSRP");
    const auto version = get_u16(is);
    if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    Model m;
    auto& e = m.embedder;
    const std::uint32_t n_dims = get_u32(is);
    if (n_dims < 2 || n_dims > 1024) throw DataError("implausible layer count in checkpoint");
    for (std::uint32_t i = 0; i < n_dims; ++i) e.layer_dims.push_back(get_u32(is));
    validate_layer_dims(e.layer_dims);
    for (std::size_t l = 0; l + 1 < e.layer_dims.size(); ++l) {
        const std::size_t in = e.layer_dims[l], out = e.layer_dims[l + 1];
        e.weights.emplace_back(in, out, get_f64_array(is, in * out));
        e.biases.push_back(get_f64_array(is, out));
    }
    const std::uint32_t k = get_u32(is);
    const std::uint32_t d = get_u32(is);
    if (d != e.output_dim()) throw DataError("checkpoint point dimension does not match embedder output");
    m.bank.points = Matrix(k, d, get_f64_array(is, std::size_t{k} * d));
    m.bank.margins = get_f64_array(is, k);
    return m;
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write_checkpoint(os, model);
    if (!os) throw DataError("failed writing " + path.string());
}

inline Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    return read_checkpoint(is);
}

}  // namespace ossar
