#include "deepsight/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "deepsight/rng.hpp"

namespace deepsight {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void check_dims(const std::vector<std::size_t>& dims) {
    require(dims.size() >= 2, "model needs at least one layer (in, out)");
    for (std::size_t d : dims) require(d >= 1, "layer dims must be positive");
    require(dims.back() >= 2, "output classes P must be >= 2");
}

}  // namespace

std::size_t ModelParams::num_params() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.w.size() + l.b.size();
    return n;
}

std::vector<std::size_t> ModelParams::dims() const {
    std::vector<std::size_t> d;
    d.push_back(layers.front().in);
    for (const Layer& l : layers) d.push_back(l.out);
    return d;
}

ModelParams make_model(const std::vector<std::size_t>& dims) {
    check_dims(dims);
    ModelParams m;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k)
        m.layers.emplace_back(dims[k + 1], dims[k]);
    return m;
}

ModelParams init_model(const std::vector<std::size_t>& dims, std::uint64_t seed) {
    ModelParams m = make_model(dims);
    SplitMix64 rng(derive_seed(seed, 0x6d6f64656cULL));
    for (Layer& l : m.layers) {
        double scale = 1.0 / std::sqrt(static_cast<double>(l.in));
        for (double& w : l.w) w = (2.0 * rng.next_double() - 1.0) * scale;
    }
    return m;
}

bool same_shape(const ModelParams& a, const ModelParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t k = 0; k < a.layers.size(); ++k)
        if (a.layers[k].out != b.layers[k].out || a.layers[k].in != b.layers[k].in)
            return false;
    return true;
}

void require_same_shape(const ModelParams& a, const ModelParams& b, const char* what) {
    if (!same_shape(a, b))
        throw std::invalid_argument(std::string(what) + ": model shapes differ");
}

std::vector<double> logits(const ModelParams& model, const std::vector<double>& input) {
    if (input.size() != model.input_dim())
        throw std::invalid_argument("forward: input dimension mismatch");
    std::vector<double> act(input);
    std::vector<double> next;
    for (std::size_t k = 0; k < model.layers.size(); ++k) {
        const Layer& l = model.layers[k];
        next.assign(l.out, 0.0);
        for (std::size_t i = 0; i < l.out; ++i) {
            double s = l.b[i];
            const double* row = &l.w[i * l.in];
            for (std::size_t h = 0; h < l.in; ++h) s += row[h] * act[h];
            next[i] = s;
        }
        if (k + 1 < model.layers.size())
            for (double& v : next) v = v > 0.0 ? v : 0.0;  // ReLU
        act.swap(next);
    }
    return act;
}

std::vector<double> softmax(const std::vector<double>& z) {
    double zmax = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - zmax);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

std::vector<double> forward(const ModelParams& model, const std::vector<double>& input) {
    return softmax(logits(model, input));
}

std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double update_norm(const std::vector<Layer>& deltas) {
    double sq = 0.0;
    for (const Layer& l : deltas) {
        for (double v : l.w) sq += v * v;
        for (double v : l.b) sq += v * v;
    }
    return std::sqrt(sq);
}

ParamUpdate diff(const ModelParams& local, const ModelParams& global) {
    require_same_shape(local, global, "diff");
    ParamUpdate u;
    u.deltas.reserve(local.layers.size());
    for (std::size_t k = 0; k < local.layers.size(); ++k) {
        const Layer& a = local.layers[k];
        const Layer& g = global.layers[k];
        Layer d(a.out, a.in);
        for (std::size_t i = 0; i < a.w.size(); ++i) d.w[i] = a.w[i] - g.w[i];
        for (std::size_t i = 0; i < a.b.size(); ++i) d.b[i] = a.b[i] - g.b[i];
        u.deltas.push_back(std::move(d));
    }
    u.l2 = update_norm(u.deltas);
    return u;
}

ModelParams apply_scaled(const ModelParams& global, const ParamUpdate& update, double lambda) {
    if (!std::isfinite(lambda)) throw std::invalid_argument("apply_scaled: non-finite factor");
    ModelParams out = global;
    if (update.deltas.size() != out.layers.size())
        throw std::invalid_argument("apply_scaled: update shape mismatch");
    for (std::size_t k = 0; k < out.layers.size(); ++k) {
        Layer& l = out.layers[k];
        const Layer& d = update.deltas[k];
        if (d.out != l.out || d.in != l.in)
            throw std::invalid_argument("apply_scaled: update shape mismatch");
        if (lambda == 1.0) {
            for (std::size_t i = 0; i < l.w.size(); ++i) l.w[i] += d.w[i];
            for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] += d.b[i];
        } else {
            for (std::size_t i = 0; i < l.w.size(); ++i) l.w[i] += lambda * d.w[i];
            for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] += lambda * d.b[i];
        }
    }
    return out;
}

ParamUpdate scale_update(const ParamUpdate& update, double lambda) {
    ParamUpdate out;
    out.deltas = update.deltas;
    for (Layer& l : out.deltas) {
        for (double& v : l.w) v *= lambda;
        for (double& v : l.b) v *= lambda;
    }
    out.l2 = update_norm(out.deltas);
    return out;
}

ModelParams fedavg(const ModelParams& global, const std::vector<ParamUpdate>& updates) {
    if (updates.empty()) throw std::invalid_argument("fedavg: empty update list");
    const double inv = 1.0 / static_cast<double>(updates.size());
    ModelParams out = global;
    for (std::size_t k = 0; k < out.layers.size(); ++k) {
        Layer& l = out.layers[k];
        std::vector<double> sw(l.w.size(), 0.0), sb(l.b.size(), 0.0);
        for (const ParamUpdate& u : updates) {
            if (u.deltas.size() != out.layers.size() || u.deltas[k].out != l.out ||
                u.deltas[k].in != l.in)
                throw std::invalid_argument("fedavg: update shape mismatch");
            const Layer& d = u.deltas[k];
            for (std::size_t i = 0; i < sw.size(); ++i) sw[i] += d.w[i];
            for (std::size_t i = 0; i < sb.size(); ++i) sb[i] += d.b[i];
        }
        for (std::size_t i = 0; i < sw.size(); ++i) l.w[i] += sw[i] * inv;
        for (std::size_t i = 0; i < sb.size(); ++i) l.b[i] += sb[i] * inv;
    }
    return out;
}

OutputLayerView output_layer_view(const ModelParams& model) {
    const Layer& last = model.layers.back();
    return OutputLayerView{last.b, last.w, last.out, last.in};
}

std::vector<double> flatten(const ModelParams& model) {
    std::vector<double> flat;
    flat.reserve(model.num_params());
    for (const Layer& l : model.layers) {
        flat.insert(flat.end(), l.w.begin(), l.w.end());
        flat.insert(flat.end(), l.b.begin(), l.b.end());
    }
    return flat;
}

namespace {
constexpr char kMagic[8] = {'d', 's', 'm', 'o', 'd', 'e', 'l', '1'};

template <typename T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("model snapshot: truncated file");
    return v;
}
}  // namespace

void write_model(const ModelParams& model, std::ostream& out) {
    out.write(kMagic, sizeof(kMagic));
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(model.layers.size()));
    for (const Layer& l : model.layers) {
        write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(l.out));
        write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(l.in));
        out.write(reinterpret_cast<const char*>(l.w.data()),
                  static_cast<std::streamsize>(l.w.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(l.b.data()),
                  static_cast<std::streamsize>(l.b.size() * sizeof(double)));
    }
}

ModelParams read_model(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw std::runtime_error("model snapshot: bad magic/version");
    auto n_layers = read_raw<std::uint32_t>(in);
    ModelParams m;
    for (std::uint32_t k = 0; k < n_layers; ++k) {
        auto out_dim = read_raw<std::uint32_t>(in);
        auto in_dim = read_raw<std::uint32_t>(in);
        Layer l(out_dim, in_dim);
        in.read(reinterpret_cast<char*>(l.w.data()),
                static_cast<std::streamsize>(l.w.size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(l.b.data()),
                static_cast<std::streamsize>(l.b.size() * sizeof(double)));
        if (!in) throw std::runtime_error("model snapshot: truncated file");
        m.layers.push_back(std::move(l));
    }
    if (m.layers.empty()) throw std::runtime_error("model snapshot: no layers");
    return m;
}

void save_model(const ModelParams& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_model(model, out);
}

ModelParams load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_model(in);
}

}  // namespace deepsight
