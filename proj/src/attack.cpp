#include "deepsight/attack.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "deepsight/rng.hpp"

namespace deepsight {

double scaling_factor(int total_clients, int compromised_clients, double norm_cap,
                      double update_norm) {
    if (compromised_clients < 1 || total_clients <= compromised_clients)
        throw std::invalid_argument("scaling_factor: need N > n >= 1");
    if (norm_cap <= 0.0) throw std::invalid_argument("scaling_factor: S must be positive");
    double cap = static_cast<double>(total_clients) / static_cast<double>(compromised_clients);
    if (update_norm == 0.0) return cap;
    return std::max(1.0, std::min(cap, norm_cap / update_norm));
}

std::size_t gap_subgroup(std::size_t rank, std::size_t n_compromised, std::size_t n_levels) {
    if (n_levels == 0) throw std::invalid_argument("gap_subgroup: empty PDR ladder");
    std::size_t group_size = (n_compromised + n_levels - 1) / n_levels;  // ceil
    return rank / group_size;
}

ParamUpdate adversarial_round(const ModelParams& global, const ClientDataset& data,
                              const AttackConfig& cfg, const FederationSpec& fed,
                              std::uint64_t seed, const ModelParams* reference) {
    TrainConfig train_cfg;
    train_cfg.learning_rate = cfg.adv_learning_rate;
    train_cfg.epochs = cfg.adv_epochs;
    train_cfg.batch_size = cfg.adv_batch_size;

    bool scale = true;
    switch (cfg.strategy) {
        case AttackStrategy::data_poison_only:
        case AttackStrategy::gap_bridging:
            train_cfg.loss_mode = LossMode::plain;
            scale = false;
            break;
        case AttackStrategy::constrain_and_scale:
        case AttackStrategy::noise_injection:
            train_cfg.loss_mode = LossMode::anomaly_evasion;
            train_cfg.anomaly_kind = AnomalyKind::parameter_cosine;
            train_cfg.alpha = cfg.alpha;
            break;
        case AttackStrategy::freeze_output:
            train_cfg.loss_mode = LossMode::anomaly_evasion;
            train_cfg.anomaly_kind = AnomalyKind::parameter_cosine;
            train_cfg.alpha = cfg.alpha;
            train_cfg.freeze_output_layer = true;
            break;
        case AttackStrategy::ddif_evasion:
            train_cfg.loss_mode = LossMode::anomaly_evasion;
            train_cfg.anomaly_kind = AnomalyKind::ddif_l2;
            train_cfg.alpha = cfg.alpha;
            train_cfg.ddif_samples = cfg.ddif_samples;
            train_cfg.ddif_seed = cfg.ddif_seed;
            break;
    }

    const ModelParams* ref = reference;
    if (train_cfg.loss_mode == LossMode::anomaly_evasion && ref == nullptr)
        ref = &global;  // evade toward the distributed global model

    ModelParams trained = train_local(global, data, train_cfg, seed, ref);
    ParamUpdate update = diff(trained, global);

    if (scale) {
        int n_compromised = static_cast<int>(std::floor(fed.pmr * fed.n_clients));
        if (n_compromised >= 1 && n_compromised < fed.n_clients) {
            double cap = cfg.norm_cap ? *cfg.norm_cap : std::numeric_limits<double>::infinity();
            double gamma = scaling_factor(fed.n_clients, n_compromised, cap, update.l2);
            if (gamma != 1.0) update = scale_update(update, gamma);
        }
    }

    if (cfg.strategy == AttackStrategy::noise_injection && cfg.noise_sigma > 0.0) {
        SplitMix64 rng(derive_seed(seed, 0x6e6f697365ULL));
        for (Layer& l : update.deltas) {
            for (double& v : l.w) v += cfg.noise_sigma * rng.next_normal();
            for (double& v : l.b) v += cfg.noise_sigma * rng.next_normal();
        }
        update.l2 = update_norm(update.deltas);
    }

    return update;
}

}  // namespace deepsight
