#include "deepsight/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

#include "deepsight/rng.hpp"

namespace deepsight {

namespace {
constexpr double kDdifEps = 1e-12;
}

std::vector<double> ddif_input(std::uint64_t seed, std::uint64_t m, std::size_t in_dim) {
    std::vector<double> x(in_dim);
    for (std::size_t j = 0; j < in_dim; ++j) x[j] = counter_u01(seed, m, j);
    return x;
}

std::vector<std::vector<double>> ddif_global_probs(const ModelParams& global,
                                                   std::uint64_t seed, int n_samples,
                                                   std::size_t in_dim) {
    if (n_samples < 1) throw std::invalid_argument("ddif: n_samples must be >= 1");
    if (in_dim != global.input_dim())
        throw std::invalid_argument("ddif: input dimension mismatch");
    std::vector<std::vector<double>> probs;
    probs.reserve(static_cast<std::size_t>(n_samples));
    for (int m = 0; m < n_samples; ++m)
        probs.push_back(forward(global, ddif_input(seed, static_cast<std::uint64_t>(m), in_dim)));
    return probs;
}

std::vector<double> ddif_against(const std::vector<std::vector<double>>& global_probs,
                                 const ModelParams& local, std::uint64_t seed, int n_samples,
                                 std::size_t in_dim) {
    if (static_cast<int>(global_probs.size()) != n_samples)
        throw std::invalid_argument("ddif: cached prediction count mismatch");
    const std::size_t P = local.output_classes();
    std::vector<double> acc(P, 0.0);
    for (int m = 0; m < n_samples; ++m) {
        std::vector<double> p =
            forward(local, ddif_input(seed, static_cast<std::uint64_t>(m), in_dim));
        const std::vector<double>& q = global_probs[static_cast<std::size_t>(m)];
        for (std::size_t i = 0; i < P; ++i) acc[i] += p[i] / std::max(q[i], kDdifEps);
    }
    for (double& v : acc) v /= static_cast<double>(n_samples);
    return acc;
}

std::vector<double> ddif(const ModelParams& global, const ModelParams& local,
                         std::uint64_t seed, int n_samples, std::size_t in_dim) {
    require_same_shape(global, local, "ddif");
    return ddif_against(ddif_global_probs(global, seed, n_samples, in_dim), local, seed,
                        n_samples, in_dim);
}

std::vector<double> update_energy(const ModelParams& global, const ModelParams& local) {
    require_same_shape(global, local, "update_energy");
    const Layer& lg = global.layers.back();
    const Layer& ll = local.layers.back();
    std::vector<double> energy(ll.out, 0.0);
    for (std::size_t i = 0; i < ll.out; ++i) {
        double e = std::abs(ll.b[i] - lg.b[i]);
        for (std::size_t h = 0; h < ll.in; ++h)
            e += std::abs(ll.w[i * ll.in + h] - lg.w[i * lg.in + h]);
        energy[i] = e;
    }
    return energy;
}

std::vector<double> neups(const std::vector<double>& energies) {
    if (energies.empty()) throw std::invalid_argument("neups: empty energy vector");
    double sum_sq = 0.0;
    for (double e : energies) sum_sq += e * e;
    std::vector<double> out(energies.size());
    if (sum_sq == 0.0) {
        for (double& v : out) v = 1.0 / static_cast<double>(energies.size());
        return out;
    }
    for (std::size_t i = 0; i < energies.size(); ++i) out[i] = energies[i] * energies[i] / sum_sq;
    return out;
}

double te_factor(std::size_t classes) {
    return std::max(0.01, 1.0 / static_cast<double>(classes));
}

double te_threshold(const std::vector<double>& neup_vector) {
    if (neup_vector.empty()) throw std::invalid_argument("te_threshold: empty NEUP vector");
    double max_neup = 0.0;
    for (double c : neup_vector) max_neup = std::max(max_neup, c);
    return te_factor(neup_vector.size()) * max_neup;
}

int threshold_exceedings(const std::vector<double>& neup_vector,
                         std::optional<double> tf_override) {
    if (neup_vector.empty())
        throw std::invalid_argument("threshold_exceedings: empty NEUP vector");
    double max_neup = 0.0;
    for (double c : neup_vector) max_neup = std::max(max_neup, c);
    double factor = tf_override ? *tf_override : te_factor(neup_vector.size());
    double xi = factor * max_neup;
    int count = 0;
    for (double c : neup_vector)
        if (c > xi) ++count;
    return count;
}

std::vector<double> bias_update(const ModelParams& global, const ModelParams& local) {
    require_same_shape(global, local, "bias_update");
    const std::vector<double>& bg = global.layers.back().b;
    const std::vector<double>& bl = local.layers.back().b;
    std::vector<double> out(bl.size());
    for (std::size_t i = 0; i < bl.size(); ++i) out[i] = bl[i] - bg[i];
    return out;
}

double cosine_distance(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        dot += u[k] * v[k];
        nu += u[k] * u[k];
        nv += v[k] * v[k];
    }
    if (nu == 0.0 || nv == 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(nu) * std::sqrt(nv));
}

DistanceMatrix cosine_matrix(const std::vector<std::vector<double>>& updates) {
    if (updates.size() < 2) throw std::invalid_argument("cosine_matrix: need N >= 2 updates");
    DistanceMatrix out(updates.size());
    for (std::size_t i = 0; i < updates.size(); ++i)
        for (std::size_t j = i + 1; j < updates.size(); ++j)
            out.set(i, j, cosine_distance(updates[i], updates[j]));
    return out;
}

FeatureBundle extract_features(const ModelParams& global, const ModelParams& local,
                               const std::array<std::uint64_t, 3>& seeds, int n_samples,
                               std::optional<double> tf_override) {
    FeatureBundle fb;
    for (std::size_t s = 0; s < 3; ++s)
        fb.ddifs[s] = ddif(global, local, seeds[s], n_samples, global.input_dim());
    fb.energies = update_energy(global, local);
    fb.neups = neups(fb.energies);
    fb.threshold = tf_override ? *tf_override * *std::max_element(fb.neups.begin(), fb.neups.end())
                               : te_threshold(fb.neups);
    fb.te = threshold_exceedings(fb.neups, tf_override);
    return fb;
}

std::string feature_bundle_json(const FeatureBundle& fb, int round, int client) {
    nlohmann::json j;
    j["round"] = round;
    j["client"] = client;
    j["ddifs"] = {fb.ddifs[0], fb.ddifs[1], fb.ddifs[2]};
    j["energies"] = fb.energies;
    j["neups"] = fb.neups;
    j["te"] = fb.te;
    j["threshold"] = fb.threshold;
    return j.dump();
}

}  // namespace deepsight
