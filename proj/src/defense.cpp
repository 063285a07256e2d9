#include "deepsight/defense.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace deepsight {

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median: empty input");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::pair<std::vector<bool>, double> classify(const std::vector<int>& te_counts) {
    if (te_counts.empty()) throw std::invalid_argument("classify: empty TE list");
    std::vector<double> te(te_counts.begin(), te_counts.end());
    const double boundary = median(std::move(te)) / 2.0;
    std::vector<bool> labels(te_counts.size());
    for (std::size_t i = 0; i < te_counts.size(); ++i)
        labels[i] = static_cast<double>(te_counts[i]) <= boundary;
    return {labels, boundary};
}

std::vector<int> pci(const ClusterAssignment& clusters, const std::vector<bool>& labels,
                     double tau) {
    if (clusters.labels.size() != labels.size())
        throw std::invalid_argument("pci: cluster/label size mismatch");
    if (tau <= 0.0 || tau > 1.0) throw std::invalid_argument("pci: tau must be in (0, 1]");

    // Noise points vote alone; real clusters vote as a block.
    std::map<int, std::pair<int, int>> tally;  // cluster -> (size, suspicious)
    for (std::size_t i = 0; i < clusters.labels.size(); ++i) {
        int c = clusters.labels[i];
        if (c < 0) continue;
        auto& [size, sus] = tally[c];
        ++size;
        if (labels[i]) ++sus;
    }
    std::vector<int> accepted;
    for (std::size_t i = 0; i < clusters.labels.size(); ++i) {
        int c = clusters.labels[i];
        double fraction;
        if (c < 0) {
            fraction = labels[i] ? 1.0 : 0.0;
        } else {
            const auto& [size, sus] = tally[c];
            fraction = static_cast<double>(sus) / static_cast<double>(size);
        }
        if (fraction < tau) accepted.push_back(static_cast<int>(i));
    }
    return accepted;
}

double clipping_bound(const std::vector<double>& norms) {
    return median(norms);
}

ParamUpdate clip(const ParamUpdate& update, double s_bound) {
    if (s_bound <= 0.0) throw std::invalid_argument("clip: bound must be positive");
    if (update.l2 <= s_bound) return update;
    return scale_update(update, s_bound / update.l2);
}

namespace {

std::vector<int> all_indices(std::size_t n) {
    std::vector<int> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
    return idx;
}

}  // namespace

AggregationResult deepsight_aggregate(const ModelParams& global,
                                      const std::vector<ModelParams>& locals,
                                      const DefenseConfig& cfg, bool is_final_round) {
    if (locals.empty()) throw std::invalid_argument("deepsight_aggregate: no models");
    for (const ModelParams& m : locals) require_same_shape(global, m, "deepsight_aggregate");
    const std::size_t n = locals.size();

    AggregationResult res;
    res.verdict.labels.assign(n, false);
    res.verdict.te.assign(n, 0);

    std::vector<ParamUpdate> updates;
    updates.reserve(n);
    for (const ModelParams& m : locals) updates.push_back(diff(m, global));

    const bool filtering = cfg.mode == DefenseMode::deepsight ||
                           cfg.mode == DefenseMode::filtering_only;
    const bool clipping = cfg.mode == DefenseMode::deepsight ||
                          cfg.mode == DefenseMode::clipping_only;

    if (filtering) {
        if (n < 2)
            throw std::invalid_argument("deepsight_aggregate: filtering needs N >= 2 models");
        // Feature extraction. The global model's DDif predictions depend only
        // on the seed, so they are computed once and shared.
        const std::size_t in_dim = global.input_dim();
        std::array<std::vector<std::vector<double>>, 3> global_probs;
        for (std::size_t s = 0; s < 3; ++s)
            global_probs[s] =
                ddif_global_probs(global, cfg.ddif_seeds[s], cfg.ddif_samples, in_dim);

        std::array<std::vector<std::vector<double>>, 3> ddif_vectors;
        std::vector<std::vector<double>> neup_vectors(n);
        std::vector<std::vector<double>> cos_updates(n);
        const std::vector<double> global_flat =
            cfg.cosine_full_update ? flatten(global) : std::vector<double>{};
        res.features.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            FeatureBundle& fb = res.features[i];
            for (std::size_t s = 0; s < 3; ++s) {
                fb.ddifs[s] = ddif_against(global_probs[s], locals[i], cfg.ddif_seeds[s],
                                           cfg.ddif_samples, in_dim);
                ddif_vectors[s].push_back(fb.ddifs[s]);
            }
            fb.energies = update_energy(global, locals[i]);
            fb.neups = neups(fb.energies);
            fb.te = threshold_exceedings(fb.neups, cfg.tf_override);
            fb.threshold = (cfg.tf_override ? *cfg.tf_override : te_factor(fb.neups.size())) *
                           *std::max_element(fb.neups.begin(), fb.neups.end());
            neup_vectors[i] = fb.neups;
            res.verdict.te[i] = fb.te;
            if (cfg.cosine_full_update) {
                cos_updates[i] = flatten(locals[i]);
                for (std::size_t k = 0; k < cos_updates[i].size(); ++k)
                    cos_updates[i][k] -= global_flat[k];
            } else {
                cos_updates[i] = bias_update(global, locals[i]);
            }
        }
        DistanceMatrix cosine = cosine_matrix(cos_updates);

        auto [labels, boundary] = classify(res.verdict.te);
        res.verdict.labels = labels;
        res.verdict.boundary = boundary;

        DistanceMatrix merged = ensemble_merged_distances(neup_vectors, ddif_vectors, cosine,
                                                          cfg.min_cluster_size, cfg.min_samples);
        res.verdict.clusters = density_cluster(merged, cfg.min_cluster_size, cfg.min_samples);
        if (cfg.keep_merged_matrix) res.merged_distances = std::move(merged);
        res.verdict.accepted = pci(res.verdict.clusters, res.verdict.labels, cfg.tau);
    } else {
        res.verdict.accepted = all_indices(n);
        res.verdict.clusters.labels.assign(n, 0);
        res.verdict.clusters.n_clusters = 1;
    }
    {
        std::vector<bool> is_accepted(n, false);
        for (int i : res.verdict.accepted) is_accepted[static_cast<std::size_t>(i)] = true;
        for (std::size_t i = 0; i < n; ++i)
            if (!is_accepted[i]) res.verdict.rejected.push_back(static_cast<int>(i));
    }

    // The clipping bound uses every received update, filtered ones included.
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = updates[i].l2;
    res.s_bound = clipping_bound(norms);

    auto clipped_update = [&](std::size_t i) {
        if (!clipping || res.s_bound <= 0.0) return updates[i];
        return clip(updates[i], res.s_bound);
    };

    if (res.verdict.accepted.empty()) {
        res.global = global;  // skip the round rather than aggregate nothing
    } else {
        std::vector<ParamUpdate> kept;
        kept.reserve(res.verdict.accepted.size());
        for (int i : res.verdict.accepted) kept.push_back(clipped_update(static_cast<std::size_t>(i)));
        res.global = fedavg(global, kept);
    }

    if (is_final_round && cfg.final_round_clusterwise) {
        // Clusterwise aggregation over ALL members (filtered ones included):
        // each cluster gets its own model; noise points keep a personal one.
        std::vector<ModelParams> models;
        std::vector<int> index_of(n);
        std::map<int, std::vector<std::size_t>> members;
        for (std::size_t i = 0; i < n; ++i) {
            int c = res.verdict.clusters.labels[i];
            if (c < 0) {
                std::vector<ParamUpdate> solo{clipped_update(i)};
                index_of[i] = static_cast<int>(models.size());
                models.push_back(fedavg(global, solo));
            } else {
                members[c].push_back(i);
            }
        }
        for (const auto& [c, idx] : members) {
            std::vector<ParamUpdate> group;
            group.reserve(idx.size());
            for (std::size_t i : idx) group.push_back(clipped_update(i));
            int model_id = static_cast<int>(models.size());
            models.push_back(fedavg(global, group));
            for (std::size_t i : idx) index_of[i] = model_id;
        }
        res.cluster_models = std::move(models);
        res.client_model_index = std::move(index_of);
    }

    return res;
}

}  // namespace deepsight
