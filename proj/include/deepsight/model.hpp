#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace deepsight {

// Dense layer parameters. Weights are row-major [out x in]; row i holds the
// incoming weights of output neuron i.
struct Layer {
    std::size_t out = 0;
    std::size_t in = 0;
    std::vector<double> w;  // out * in, row-major
    std::vector<double> b;  // out

    Layer() = default;
    Layer(std::size_t out_dim, std::size_t in_dim)
        : out(out_dim), in(in_dim), w(out_dim * in_dim, 0.0), b(out_dim, 0.0) {}

    double& weight(std::size_t i, std::size_t h) { return w[i * in + h]; }
    double weight(std::size_t i, std::size_t h) const { return w[i * in + h]; }
};

// Full parameter set of a dense feed-forward classifier with a softmax head.
// Immutable by convention once built: every operation returns a new value.
struct ModelParams {
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.front().in; }
    std::size_t output_classes() const { return layers.back().out; }
    std::size_t num_layers() const { return layers.size(); }
    std::size_t num_params() const;

    // Layer dimensions as in -> h1 -> ... -> P.
    std::vector<std::size_t> dims() const;
};

// Elementwise difference local - global with its cached L2 norm.
struct ParamUpdate {
    std::vector<Layer> deltas;
    double l2 = 0.0;
};

// Read-only view of the output layer (bias of length P, weights P x H).
struct OutputLayerView {
    const std::vector<double>& bias;
    const std::vector<double>& weights;  // row-major P x H
    std::size_t classes;
    std::size_t fan_in;
};

// Zero-initialized model with the given dims (in, h1, ..., P). P >= 2 and a
// consistent shape chain are enforced.
ModelParams make_model(const std::vector<std::size_t>& dims);

// Random init: weights uniform in +-1/sqrt(fan_in), biases zero.
ModelParams init_model(const std::vector<std::size_t>& dims, std::uint64_t seed);

bool same_shape(const ModelParams& a, const ModelParams& b);
void require_same_shape(const ModelParams& a, const ModelParams& b, const char* what);

// Forward pass: ReLU hidden layers, softmax output. Output entries are in
// (0, 1] and sum to 1.
std::vector<double> forward(const ModelParams& model, const std::vector<double>& input);

// Raw output-layer scores before the softmax.
std::vector<double> logits(const ModelParams& model, const std::vector<double>& input);

std::vector<double> softmax(const std::vector<double>& z);
std::size_t argmax(const std::vector<double>& v);

ParamUpdate diff(const ModelParams& local, const ModelParams& global);
ModelParams apply_scaled(const ModelParams& global, const ParamUpdate& update, double lambda);
ParamUpdate scale_update(const ParamUpdate& update, double lambda);

// Equal-weight averaging: global + mean(updates). Summation runs in the
// given list order, left to right, in double precision.
ModelParams fedavg(const ModelParams& global, const std::vector<ParamUpdate>& updates);

OutputLayerView output_layer_view(const ModelParams& model);

double update_norm(const std::vector<Layer>& deltas);

// Flatten all parameters into one vector (layer order, weights then bias).
std::vector<double> flatten(const ModelParams& model);

// Versioned binary snapshot; round-trips bit-exactly.
void save_model(const ModelParams& model, const std::string& path);
ModelParams load_model(const std::string& path);
void write_model(const ModelParams& model, std::ostream& out);
ModelParams read_model(std::istream& in);

}  // namespace deepsight
