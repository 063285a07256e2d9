#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "deepsight/clustering.hpp"
#include "deepsight/features.hpp"
#include "deepsight/model.hpp"

namespace deepsight {

enum class DefenseMode { deepsight, filtering_only, clipping_only, none };

struct DefenseConfig {
    DefenseMode mode = DefenseMode::deepsight;
    double tau = 1.0 / 3.0;  // suspicious fraction at which a cluster is dropped
    std::optional<double> tf_override;
    bool final_round_clusterwise = false;
    int ddif_samples = 20000;
    std::array<std::uint64_t, 3> ddif_seeds{1, 2, 3};
    int min_cluster_size = 2;
    int min_samples = 4;  // density smoothing of the clusterer
    // Cosine distances on output-layer bias updates by default; optionally on
    // the full flattened updates.
    bool cosine_full_update = false;
    // Keep the merged ensemble distance matrix in the result (debug dumps).
    bool keep_merged_matrix = false;
};

struct FilterVerdict {
    std::vector<bool> labels;  // true = suspicious
    double boundary = 0.0;
    std::vector<int> accepted;
    std::vector<int> rejected;
    ClusterAssignment clusters;
    std::vector<int> te;
};

struct AggregationResult {
    ModelParams global;
    FilterVerdict verdict;
    double s_bound = 0.0;
    std::vector<FeatureBundle> features;  // empty in none/clipping_only modes
    // Final-round clusterwise output: one model per cluster (noise points get
    // their own), and each client's model index.
    std::optional<std::vector<ModelParams>> cluster_models;
    std::optional<std::vector<int>> client_model_index;
    std::optional<DistanceMatrix> merged_distances;
};

// Label updates from their Threshold Exceedings: boundary = median(TE)/2, a
// model is suspicious iff its TE <= boundary.
std::pair<std::vector<bool>, double> classify(const std::vector<int>& te_counts);

// Poisoned Cluster Identification: a cluster's members are accepted iff the
// fraction of suspicious members is strictly below tau. Noise points act as
// singleton clusters. Returns accepted indices, ascending.
std::vector<int> pci(const ClusterAssignment& clusters, const std::vector<bool>& labels,
                     double tau);

// Dynamic clipping bound: median of the update norms (mean of the central
// pair for even N).
double clipping_bound(const std::vector<double>& norms);
double median(std::vector<double> values);

// Downscale to norm at most S: result = min(1, S/||u||) * u. Updates already
// within the bound are returned unchanged.
ParamUpdate clip(const ParamUpdate& update, double s_bound);

// The full pipeline: feature extraction -> classification -> clustering
// ensemble -> PCI -> clipping (bound from ALL updates, filtered included) ->
// FedAvg over the accepted set. The ablation modes skip layers; none is plain
// FedAvg. An empty accepted set returns the global model unchanged.
AggregationResult deepsight_aggregate(const ModelParams& global,
                                      const std::vector<ModelParams>& locals,
                                      const DefenseConfig& cfg, bool is_final_round = false);

}  // namespace deepsight
