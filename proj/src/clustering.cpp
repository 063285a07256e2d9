#include "deepsight/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace deepsight {

namespace {

struct MstEdge {
    std::size_t a, b;
    double w;
};

// Prim's algorithm on the complete mutual-reachability graph. Ties are broken
// by vertex index so the tree is unique.
std::vector<MstEdge> minimum_spanning_tree(const DistanceMatrix& mr) {
    const std::size_t n = mr.n;
    std::vector<bool> in_tree(n, false);
    std::vector<double> key(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> parent(n, 0);
    key[0] = 0.0;
    std::vector<MstEdge> edges;
    edges.reserve(n - 1);
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t u = n;
        for (std::size_t v = 0; v < n; ++v)
            if (!in_tree[v] && (u == n || key[v] < key[u])) u = v;
        in_tree[u] = true;
        if (u != 0) edges.push_back({std::min(parent[u], u), std::max(parent[u], u), key[u]});
        for (std::size_t v = 0; v < n; ++v) {
            if (in_tree[v]) continue;
            double w = mr.at(u, v);
            if (w < key[v]) {
                key[v] = w;
                parent[v] = u;
            }
        }
    }
    std::sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) {
        if (x.w != y.w) return x.w < y.w;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });
    return edges;
}

// Single-linkage dendrogram node. Leaves are 0..n-1; internal nodes follow.
struct DendroNode {
    std::size_t left = 0, right = 0;
    double dist = 0.0;
    std::size_t size = 1;
};

struct UnionFind {
    std::vector<std::size_t> root;
    explicit UnionFind(std::size_t n) : root(n) {
        for (std::size_t i = 0; i < n; ++i) root[i] = i;
    }
    std::size_t find(std::size_t x) {
        while (root[x] != x) {
            root[x] = root[root[x]];
            x = root[x];
        }
        return x;
    }
};

// Condensed-tree cluster.
struct CondCluster {
    int parent = -1;
    double lambda_birth = 0.0;
    double stability = 0.0;
    std::vector<int> children;
};

void collect_leaves(const std::vector<DendroNode>& tree, std::size_t n_points,
                    std::size_t node, std::vector<std::size_t>& out) {
    if (node < n_points) {
        out.push_back(node);
        return;
    }
    std::vector<std::size_t> stack{node};
    while (!stack.empty()) {
        std::size_t cur = stack.back();
        stack.pop_back();
        if (cur < n_points) {
            out.push_back(cur);
            continue;
        }
        const DendroNode& d = tree[cur];
        stack.push_back(d.left);
        stack.push_back(d.right);
    }
}

}  // namespace

DistanceMatrix euclidean_distances(const std::vector<std::vector<double>>& points) {
    const std::size_t n = points.size();
    DistanceMatrix out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (points[i].size() != points[0].size())
            throw std::invalid_argument("euclidean_distances: inconsistent dimensions");
        for (std::size_t j = i + 1; j < n; ++j) {
            double sq = 0.0;
            for (std::size_t k = 0; k < points[i].size(); ++k) {
                double diff = points[i][k] - points[j][k];
                sq += diff * diff;
            }
            out.set(i, j, std::sqrt(sq));
        }
    }
    return out;
}

ClusterAssignment density_cluster(const std::vector<std::vector<double>>& points,
                                  int min_cluster_size, int min_samples) {
    if (points.size() < 2) throw std::invalid_argument("density_cluster: need N >= 2 points");
    return density_cluster(euclidean_distances(points), min_cluster_size, min_samples);
}

ClusterAssignment density_cluster(const DistanceMatrix& dists, int min_cluster_size,
                                  int min_samples) {
    const std::size_t n = dists.n;
    if (n < 2) throw std::invalid_argument("density_cluster: need N >= 2 points");
    if (min_cluster_size < 2)
        throw std::invalid_argument("density_cluster: min_cluster_size must be >= 2");
    if (min_samples < 2)
        throw std::invalid_argument("density_cluster: min_samples must be >= 2");
    const std::size_t mcs = static_cast<std::size_t>(min_cluster_size);

    // Core distance: distance to the min_samples-th neighbor, self included.
    std::vector<double> core(n, 0.0);
    std::vector<double> row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) row.push_back(dists.at(i, j));
        std::size_t k = std::min(static_cast<std::size_t>(min_samples) - 1, row.size()) - 1;
        std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
        core[i] = row[k];
    }

    DistanceMatrix mreach(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            mreach.set(i, j, std::max({core[i], core[j], dists.at(i, j)}));

    std::vector<MstEdge> edges = minimum_spanning_tree(mreach);

    // lambda = 1/distance; zero distances get a finite cap above every real one.
    double max_lambda = 0.0;
    for (const MstEdge& e : edges)
        if (e.w > 0.0) max_lambda = std::max(max_lambda, 1.0 / e.w);
    const double lambda_cap = std::max(1e12, 4.0 * max_lambda);
    auto to_lambda = [&](double d) { return d > 0.0 ? 1.0 / d : lambda_cap; };

    // Build the single-linkage dendrogram from the sorted MST edges.
    std::vector<DendroNode> tree(2 * n - 1);
    {
        UnionFind uf(2 * n - 1);
        std::vector<std::size_t> comp_node(2 * n - 1);
        for (std::size_t i = 0; i < 2 * n - 1; ++i) comp_node[i] = i;
        std::size_t next = n;
        for (const MstEdge& e : edges) {
            std::size_t ra = uf.find(e.a), rb = uf.find(e.b);
            std::size_t na = comp_node[ra], nb = comp_node[rb];
            DendroNode& d = tree[next];
            d.left = na;
            d.right = nb;
            d.dist = e.w;
            d.size = tree[na].size + tree[nb].size;
            uf.root[ra] = next;
            uf.root[rb] = next;
            comp_node[next] = next;
            ++next;
        }
    }
    const std::size_t root_node = 2 * n - 2;

    // Condense: walk the dendrogram top-down; a split is real only when both
    // sides have at least min_cluster_size points, otherwise the small side
    // falls out of the current cluster at that density level.
    std::vector<CondCluster> clusters(1);
    clusters[0].lambda_birth = 0.0;
    std::vector<int> fall_out_cluster(n, 0);
    std::vector<double> fall_out_lambda(n, 0.0);

    std::vector<std::pair<std::size_t, int>> work;  // (dendro node, cluster id)
    work.emplace_back(root_node, 0);
    std::vector<std::size_t> leaves;
    while (!work.empty()) {
        auto [node, cid] = work.back();
        work.pop_back();
        const DendroNode& d = tree[node];
        const double lam = to_lambda(d.dist);
        const std::size_t ls = tree[d.left].size, rs = tree[d.right].size;
        CondCluster& c = clusters[static_cast<std::size_t>(cid)];
        if (ls >= mcs && rs >= mcs) {
            c.stability += static_cast<double>(ls + rs) * (lam - c.lambda_birth);
            int cl = static_cast<int>(clusters.size());
            clusters.push_back(CondCluster{cid, lam, 0.0, {}});
            int cr = static_cast<int>(clusters.size());
            clusters.push_back(CondCluster{cid, lam, 0.0, {}});
            clusters[static_cast<std::size_t>(cid)].children = {cl, cr};
            work.emplace_back(d.left, cl);
            work.emplace_back(d.right, cr);
        } else if (ls >= mcs || rs >= mcs) {
            const std::size_t big = ls >= mcs ? d.left : d.right;
            const std::size_t small = ls >= mcs ? d.right : d.left;
            leaves.clear();
            collect_leaves(tree, n, small, leaves);
            c.stability += static_cast<double>(leaves.size()) * (lam - c.lambda_birth);
            for (std::size_t p : leaves) {
                fall_out_cluster[p] = cid;
                fall_out_lambda[p] = lam;
            }
            work.emplace_back(big, cid);
        } else {
            leaves.clear();
            collect_leaves(tree, n, node, leaves);
            c.stability += static_cast<double>(leaves.size()) * (lam - c.lambda_birth);
            for (std::size_t p : leaves) {
                fall_out_cluster[p] = cid;
                fall_out_lambda[p] = lam;
            }
        }
    }

    // Excess-of-mass selection, bottom-up; the root is not selectable.
    const std::size_t nc = clusters.size();
    std::vector<double> subtree_stab(nc, 0.0);
    std::vector<bool> selected(nc, false);
    for (std::size_t idx = nc; idx-- > 1;) {
        CondCluster& c = clusters[idx];
        if (c.children.empty()) {
            subtree_stab[idx] = c.stability;
            selected[idx] = true;
        } else {
            double child_sum = 0.0;
            for (int ch : c.children) child_sum += subtree_stab[static_cast<std::size_t>(ch)];
            if (c.stability >= child_sum) {
                selected[idx] = true;
                subtree_stab[idx] = c.stability;
            } else {
                subtree_stab[idx] = child_sum;
            }
        }
    }
    // A selected ancestor overrides any selected descendant.
    std::vector<int> final_cluster_of(nc, -1);  // per condensed cluster: owning selected id
    {
        std::vector<int> stack{0};
        std::vector<int> owner(nc, -1);
        while (!stack.empty()) {
            int cur = stack.back();
            stack.pop_back();
            const auto ucur = static_cast<std::size_t>(cur);
            int own = clusters[ucur].parent >= 0
                          ? owner[static_cast<std::size_t>(clusters[ucur].parent)]
                          : -1;
            if (own < 0 && cur != 0 && selected[ucur]) own = cur;
            owner[ucur] = own;
            final_cluster_of[ucur] = own;
            for (int ch : clusters[ucur].children) stack.push_back(ch);
        }
    }

    ClusterAssignment result;
    result.labels.assign(n, -1);
    bool any_selected = false;
    for (std::size_t i = 1; i < nc; ++i) any_selected |= (final_cluster_of[i] == static_cast<int>(i));
    if (!any_selected) {
        // No real split anywhere: the data is one cluster. Points that only
        // connect at far lower density than the bulk (below half the peak
        // fall-out level) stay outside it as noise.
        double peak = 0.0;
        for (double l : fall_out_lambda) peak = std::max(peak, l);
        for (std::size_t p = 0; p < n; ++p)
            result.labels[p] = fall_out_lambda[p] >= 0.5 * peak ? 0 : -1;
        result.n_clusters = 1;
        return result;
    }

    for (std::size_t p = 0; p < n; ++p) {
        int owner = final_cluster_of[static_cast<std::size_t>(fall_out_cluster[p])];
        result.labels[p] = owner;  // provisional: condensed id or -1
    }
    // Relabel contiguously, ordered by smallest member index.
    std::vector<int> relabel(nc, -1);
    int next_id = 0;
    for (std::size_t p = 0; p < n; ++p) {
        int c = result.labels[p];
        if (c < 0) continue;
        if (relabel[static_cast<std::size_t>(c)] < 0) relabel[static_cast<std::size_t>(c)] = next_id++;
        result.labels[p] = relabel[static_cast<std::size_t>(c)];
    }
    result.n_clusters = next_id;
    return result;
}

DistanceMatrix dists_from_clust(const ClusterAssignment& assign) {
    const std::size_t n = assign.labels.size();
    DistanceMatrix out(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            bool same = assign.labels[i] >= 0 && assign.labels[i] == assign.labels[j];
            out.set(i, j, same ? 0.0 : 1.0);
        }
    return out;
}

DistanceMatrix ensemble_merged_distances(
    const std::vector<std::vector<double>>& neup_vectors,
    const std::array<std::vector<std::vector<double>>, 3>& ddif_vectors,
    const DistanceMatrix& cosine_dists, int min_cluster_size, int min_samples) {
    const std::size_t n = neup_vectors.size();
    if (cosine_dists.n != n || ddif_vectors[0].size() != n || ddif_vectors[1].size() != n ||
        ddif_vectors[2].size() != n)
        throw std::invalid_argument("ensemble_cluster: inconsistent client count");

    DistanceMatrix cosine_m =
        dists_from_clust(density_cluster(cosine_dists, min_cluster_size, min_samples));
    DistanceMatrix neup_m =
        dists_from_clust(density_cluster(neup_vectors, min_cluster_size, min_samples));

    DistanceMatrix ddif_merged(n);
    for (const auto& seed_vectors : ddif_vectors) {
        DistanceMatrix m =
            dists_from_clust(density_cluster(seed_vectors, min_cluster_size, min_samples));
        for (std::size_t i = 0; i < m.d.size(); ++i) ddif_merged.d[i] += m.d[i];
    }
    for (double& v : ddif_merged.d) v /= 3.0;

    DistanceMatrix merged(n);
    for (std::size_t i = 0; i < merged.d.size(); ++i)
        merged.d[i] = (ddif_merged.d[i] + neup_m.d[i] + cosine_m.d[i]) / 3.0;
    return merged;
}

ClusterAssignment ensemble_cluster(
    const std::vector<std::vector<double>>& neup_vectors,
    const std::array<std::vector<std::vector<double>>, 3>& ddif_vectors,
    const DistanceMatrix& cosine_dists, int min_cluster_size, int min_samples) {
    DistanceMatrix merged = ensemble_merged_distances(neup_vectors, ddif_vectors, cosine_dists,
                                                      min_cluster_size, min_samples);
    return density_cluster(merged, min_cluster_size, min_samples);
}

}  // namespace deepsight
