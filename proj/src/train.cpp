#include "deepsight/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "deepsight/features.hpp"
#include "deepsight/rng.hpp"

namespace deepsight {

namespace {

struct ForwardTrace {
    // acts[0] is the input; acts[k] is layer k's post-ReLU activation for
    // hidden layers. Logits and probs cover the output layer.
    std::vector<std::vector<double>> acts;
    std::vector<double> logits;
    std::vector<double> probs;
};

ForwardTrace forward_trace(const ModelParams& model, const std::vector<double>& input) {
    ForwardTrace t;
    t.acts.push_back(input);
    for (std::size_t k = 0; k < model.layers.size(); ++k) {
        const Layer& l = model.layers[k];
        const std::vector<double>& prev = t.acts.back();
        std::vector<double> z(l.out);
        for (std::size_t i = 0; i < l.out; ++i) {
            double s = l.b[i];
            const double* row = &l.w[i * l.in];
            for (std::size_t h = 0; h < l.in; ++h) s += row[h] * prev[h];
            z[i] = s;
        }
        if (k + 1 < model.layers.size()) {
            for (double& v : z) v = v > 0.0 ? v : 0.0;
            t.acts.push_back(std::move(z));
        } else {
            t.logits = std::move(z);
        }
    }
    t.probs = softmax(t.logits);
    return t;
}

// Accumulate parameter gradients given dL/dlogits for one sample.
void backprop_accumulate(const ModelParams& model, const ForwardTrace& t,
                         std::vector<double> grad_z, std::vector<Layer>& grads) {
    for (std::size_t k = model.layers.size(); k-- > 0;) {
        const Layer& l = model.layers[k];
        Layer& g = grads[k];
        const std::vector<double>& prev = t.acts[k];
        for (std::size_t i = 0; i < l.out; ++i) {
            g.b[i] += grad_z[i];
            double gi = grad_z[i];
            double* grow = &g.w[i * l.in];
            for (std::size_t h = 0; h < l.in; ++h) grow[h] += gi * prev[h];
        }
        if (k == 0) break;
        std::vector<double> grad_prev(l.in, 0.0);
        for (std::size_t i = 0; i < l.out; ++i) {
            double gi = grad_z[i];
            const double* row = &l.w[i * l.in];
            for (std::size_t h = 0; h < l.in; ++h) grad_prev[h] += gi * row[h];
        }
        // ReLU mask of the previous hidden activation.
        for (std::size_t h = 0; h < l.in; ++h)
            if (prev[h] <= 0.0) grad_prev[h] = 0.0;
        grad_z = std::move(grad_prev);
    }
}

std::vector<Layer> zero_grads(const ModelParams& model) {
    std::vector<Layer> grads;
    grads.reserve(model.layers.size());
    for (const Layer& l : model.layers) grads.emplace_back(l.out, l.in);
    return grads;
}

// Gradient of 1 - cos(flatten(model), flatten(reference)) w.r.t. the model
// parameters, written into grads.
void add_cosine_anomaly_grad(const ModelParams& model, const ModelParams& reference,
                             double weight, std::vector<Layer>& grads) {
    double dot = 0.0, nw = 0.0, ng = 0.0;
    for (std::size_t k = 0; k < model.layers.size(); ++k) {
        const Layer& a = model.layers[k];
        const Layer& r = reference.layers[k];
        for (std::size_t i = 0; i < a.w.size(); ++i) {
            dot += a.w[i] * r.w[i];
            nw += a.w[i] * a.w[i];
            ng += r.w[i] * r.w[i];
        }
        for (std::size_t i = 0; i < a.b.size(); ++i) {
            dot += a.b[i] * r.b[i];
            nw += a.b[i] * a.b[i];
            ng += r.b[i] * r.b[i];
        }
    }
    if (nw == 0.0 || ng == 0.0) return;
    double normw = std::sqrt(nw), normg = std::sqrt(ng);
    double cosv = dot / (normw * normg);
    // d/dw_i [1 - cos] = -(g_i / (|w||g|) - cos * w_i / |w|^2)
    for (std::size_t k = 0; k < model.layers.size(); ++k) {
        const Layer& a = model.layers[k];
        const Layer& r = reference.layers[k];
        Layer& g = grads[k];
        for (std::size_t i = 0; i < a.w.size(); ++i)
            g.w[i] += weight * -(r.w[i] / (normw * normg) - cosv * a.w[i] / nw);
        for (std::size_t i = 0; i < a.b.size(); ++i)
            g.b[i] += weight * -(r.b[i] / (normw * normg) - cosv * a.b[i] / nw);
    }
}

constexpr double kDdifEps = 1e-12;

// Gradient of || DDif(model) - target ||_2 via backprop through the softmax
// ratios over the fixed random sample stream.
void add_ddif_anomaly_grad(const ModelParams& model,
                           const std::vector<std::vector<double>>& global_probs,
                           const std::vector<double>& target_ddif, std::uint64_t seed,
                           int n_samples, double weight, std::vector<Layer>& grads) {
    const std::size_t P = model.output_classes();
    const std::size_t in_dim = model.input_dim();
    std::vector<ForwardTrace> traces;
    traces.reserve(static_cast<std::size_t>(n_samples));
    std::vector<double> cur(P, 0.0);
    for (int m = 0; m < n_samples; ++m) {
        traces.push_back(
            forward_trace(model, ddif_input(seed, static_cast<std::uint64_t>(m), in_dim)));
        const std::vector<double>& q = global_probs[static_cast<std::size_t>(m)];
        for (std::size_t i = 0; i < P; ++i)
            cur[i] += traces.back().probs[i] / std::max(q[i], kDdifEps);
    }
    for (double& v : cur) v /= static_cast<double>(n_samples);

    double dist_sq = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
        double diff = cur[i] - target_ddif[i];
        dist_sq += diff * diff;
    }
    double dist = std::sqrt(dist_sq);
    if (dist < 1e-15) return;

    // dL/dDDif_i, folded with the per-sample 1/(M * q_i) factor below.
    std::vector<double> dl(P);
    for (std::size_t i = 0; i < P; ++i) dl[i] = (cur[i] - target_ddif[i]) / dist;

    std::vector<double> grad_z(P);
    for (int m = 0; m < n_samples; ++m) {
        const ForwardTrace& t = traces[static_cast<std::size_t>(m)];
        const std::vector<double>& q = global_probs[static_cast<std::size_t>(m)];
        std::vector<double> c(P);
        double csum = 0.0;
        for (std::size_t i = 0; i < P; ++i) {
            c[i] = dl[i] / (static_cast<double>(n_samples) * std::max(q[i], kDdifEps));
            csum += c[i] * t.probs[i];
        }
        // d p_i / d z_j = p_i (delta_ij - p_j)
        for (std::size_t j = 0; j < P; ++j)
            grad_z[j] = weight * t.probs[j] * (c[j] - csum);
        backprop_accumulate(model, t, grad_z, grads);
    }
}

}  // namespace

ModelParams train_local(const ModelParams& model, const ClientDataset& data,
                        const TrainConfig& cfg, std::uint64_t seed,
                        const ModelParams* reference) {
    if (data.samples.empty()) throw std::invalid_argument("train_local: empty dataset");
    if (cfg.epochs < 1) throw std::invalid_argument("train_local: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("train_local: batch_size must be >= 1");
    if (cfg.learning_rate < 0.0) throw std::invalid_argument("train_local: negative learning rate");
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0)
        throw std::invalid_argument("train_local: alpha must be in [0, 1]");
    const bool evasion = cfg.loss_mode == LossMode::anomaly_evasion && cfg.alpha < 1.0;
    if (cfg.loss_mode == LossMode::anomaly_evasion && reference == nullptr)
        throw std::invalid_argument("train_local: evasion mode needs a reference model");

    ModelParams w = model;
    const std::size_t n = data.samples.size();
    const std::size_t last = w.layers.size() - 1;

    // For the DDif term both the global predictions and the imitation target
    // are fixed for the whole training run.
    std::vector<std::vector<double>> global_probs;
    std::vector<double> target_ddif;
    if (evasion && cfg.anomaly_kind == AnomalyKind::ddif_l2) {
        global_probs = ddif_global_probs(model, cfg.ddif_seed, cfg.ddif_samples, model.input_dim());
        target_ddif = ddif_against(global_probs, *reference, cfg.ddif_seed, cfg.ddif_samples,
                                   model.input_dim());
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        SplitMix64 shuffle_rng(derive_seed(seed, 0x7368756666ULL, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(stop - start);
            std::vector<Layer> grads = zero_grads(w);
            const double class_weight = evasion ? cfg.alpha : 1.0;
            for (std::size_t s = start; s < stop; ++s) {
                const Sample& sample = data.samples[order[s]];
                ForwardTrace t = forward_trace(w, sample.x);
                std::vector<double> grad_z = t.probs;
                grad_z[static_cast<std::size_t>(sample.y)] -= 1.0;
                for (double& v : grad_z) v *= class_weight * inv_batch;
                backprop_accumulate(w, t, std::move(grad_z), grads);
            }
            if (evasion) {
                if (cfg.anomaly_kind == AnomalyKind::parameter_cosine)
                    add_cosine_anomaly_grad(w, *reference, 1.0 - cfg.alpha, grads);
                else
                    add_ddif_anomaly_grad(w, global_probs, target_ddif, cfg.ddif_seed,
                                          cfg.ddif_samples, 1.0 - cfg.alpha, grads);
            }
            if (cfg.freeze_output_layer) {
                std::fill(grads[last].w.begin(), grads[last].w.end(), 0.0);
                std::fill(grads[last].b.begin(), grads[last].b.end(), 0.0);
            }
            for (std::size_t k = 0; k < w.layers.size(); ++k) {
                Layer& l = w.layers[k];
                const Layer& g = grads[k];
                for (std::size_t i = 0; i < l.w.size(); ++i) l.w[i] -= cfg.learning_rate * g.w[i];
                for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] -= cfg.learning_rate * g.b[i];
            }
        }
    }
    if (cfg.freeze_output_layer) {
        // The last layer is carried over verbatim, not merely un-stepped.
        w.layers[last] = model.layers[last];
    }
    return w;
}

double dataset_loss(const ModelParams& model, const ClientDataset& data) {
    if (data.samples.empty()) throw std::invalid_argument("dataset_loss: empty dataset");
    double total = 0.0;
    for (const Sample& s : data.samples) {
        std::vector<double> p = forward(model, s.x);
        total += -std::log(std::max(p[static_cast<std::size_t>(s.y)], 1e-300));
    }
    return total / static_cast<double>(data.samples.size());
}

}  // namespace deepsight
