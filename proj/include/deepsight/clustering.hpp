#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace deepsight {

// Flat partition: labels[i] >= 0 is a cluster id, -1 marks noise.
// Cluster ids are contiguous from 0, ordered by smallest member index.
struct ClusterAssignment {
    std::vector<int> labels;
    int n_clusters = 0;

    std::size_t size() const { return labels.size(); }
};

// Symmetric pairwise distances with zero diagonal.
struct DistanceMatrix {
    std::size_t n = 0;
    std::vector<double> d;  // n * n

    DistanceMatrix() = default;
    explicit DistanceMatrix(std::size_t n_points) : n(n_points), d(n_points * n_points, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return d[i * n + j]; }
    double at(std::size_t i, std::size_t j) const { return d[i * n + j]; }

    void set(std::size_t i, std::size_t j, double v) {
        d[i * n + j] = v;
        d[j * n + i] = v;
    }
};

DistanceMatrix euclidean_distances(const std::vector<std::vector<double>>& points);

// Density-based hierarchical clustering (HDBSCAN*): mutual-reachability
// distances -> minimum spanning tree -> condensed cluster tree -> excess-of-
// mass extraction. The number of clusters is determined by the data; points
// that never join a stable cluster are labeled noise. If no split ever
// produces two viable clusters, all points form a single cluster.
//
// min_samples controls the density smoothing (core distance = distance to
// the min_samples-th neighbor, self included) and is clamped to the point
// count. The default of 4 keeps unimodal blobs in one piece.
ClusterAssignment density_cluster(const DistanceMatrix& dists, int min_cluster_size,
                                  int min_samples = 4);
ClusterAssignment density_cluster(const std::vector<std::vector<double>>& points,
                                  int min_cluster_size, int min_samples = 4);

// Binary co-membership distances: 0 iff same non-noise cluster, else 1.
// Noise points count as singletons (0 only on the diagonal).
DistanceMatrix dists_from_clust(const ClusterAssignment& assign);

// Clustering ensemble: cluster the cosine matrix (precomputed), the NEUP
// vectors and each DDif seed's vectors (Euclidean), convert every result to
// co-membership distances, average the three DDif matrices, average that with
// the NEUP and cosine matrices, and cluster the merged matrix.
ClusterAssignment ensemble_cluster(
    const std::vector<std::vector<double>>& neup_vectors,
    const std::array<std::vector<std::vector<double>>, 3>& ddif_vectors,
    const DistanceMatrix& cosine_dists, int min_cluster_size = 2, int min_samples = 4);

// The merged ensemble matrix itself, exposed for debugging dumps.
DistanceMatrix ensemble_merged_distances(
    const std::vector<std::vector<double>>& neup_vectors,
    const std::array<std::vector<std::vector<double>>, 3>& ddif_vectors,
    const DistanceMatrix& cosine_dists, int min_cluster_size = 2, int min_samples = 4);

}  // namespace deepsight
