#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deepsight/clustering.hpp"
#include "deepsight/model.hpp"

namespace deepsight {

// Per-client per-round inspection metrics.
struct FeatureBundle {
    std::array<std::vector<double>, 3> ddifs;  // one vector of length P per seed
    std::vector<double> energies;              // length P, nonnegative
    std::vector<double> neups;                 // length P, sums to 1
    int te = 0;
    double threshold = 0.0;  // the xi used for the TE count
};

// Random model input for DDif evaluation: coordinate j of sample m, uniform
// in [0,1), a pure function of (seed, m, j).
std::vector<double> ddif_input(std::uint64_t seed, std::uint64_t m, std::size_t in_dim);

// Division Differences: per output neuron, the mean ratio of the local
// model's predicted probability to the global model's over n_samples random
// inputs. The denominator is guarded at 1e-12.
std::vector<double> ddif(const ModelParams& global, const ModelParams& local,
                         std::uint64_t seed, int n_samples, std::size_t in_dim);

// Same, with the global model's predictions precomputed once and shared
// across clients (they only depend on the seed).
std::vector<std::vector<double>> ddif_global_probs(const ModelParams& global,
                                                   std::uint64_t seed, int n_samples,
                                                   std::size_t in_dim);
std::vector<double> ddif_against(const std::vector<std::vector<double>>& global_probs,
                                 const ModelParams& local, std::uint64_t seed, int n_samples,
                                 std::size_t in_dim);

// Output-layer update Energy: E_i = |db_i| + sum_h |dw_{i,h}|.
std::vector<double> update_energy(const ModelParams& global, const ModelParams& local);

// Normalized update energies: C_i = E_i^2 / sum_j E_j^2. An all-zero energy
// vector yields the uniform vector (an update carrying no output-layer
// information is treated as maximally heterogeneous).
std::vector<double> neups(const std::vector<double>& energies);

// Threshold factor max(0.01, 1/P) and the threshold xi = factor * max NEUP.
double te_factor(std::size_t classes);
double te_threshold(const std::vector<double>& neup_vector);

// Number of NEUPs strictly above the threshold; tf_override substitutes the
// threshold factor for sweeps.
int threshold_exceedings(const std::vector<double>& neup_vector,
                         std::optional<double> tf_override = std::nullopt);

// Output-layer bias delta local - global.
std::vector<double> bias_update(const ModelParams& global, const ModelParams& local);

// Pairwise cosine distances 1 - cos(u_i, u_j) in [0, 2]. A zero vector is at
// distance 1 from everything; the diagonal is 0.
DistanceMatrix cosine_matrix(const std::vector<std::vector<double>>& updates);

double cosine_distance(const std::vector<double>& u, const std::vector<double>& v);

FeatureBundle extract_features(const ModelParams& global, const ModelParams& local,
                               const std::array<std::uint64_t, 3>& seeds, int n_samples,
                               std::optional<double> tf_override = std::nullopt);

// One JSON object per bundle, for JSONL feature dumps.
std::string feature_bundle_json(const FeatureBundle& fb, int round, int client);

}  // namespace deepsight
