#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "deepsight/data.hpp"
#include "deepsight/model.hpp"
#include "deepsight/train.hpp"

namespace deepsight {

enum class AttackStrategy {
    data_poison_only,
    constrain_and_scale,
    freeze_output,
    noise_injection,
    gap_bridging,
    ddif_evasion
};

struct AttackConfig {
    AttackStrategy strategy = AttackStrategy::constrain_and_scale;
    double pdr = 0.5;
    // L2 cap S for the scaling factor; unset behaves as unbounded (the
    // factor is then limited by N/n alone).
    std::optional<double> norm_cap;
    double alpha = 0.7;             // loss-control weight for the evasion loss
    double adv_learning_rate = 0.05;
    int adv_epochs = 5;
    int adv_batch_size = 32;
    double noise_sigma = 0.0;       // noise_injection: std of added Gaussian noise
    std::vector<double> gap_pdrs;   // gap_bridging: per-subgroup PDR ladder
    int ddif_samples = 128;         // ddif_evasion: loss-side sample budget
    std::uint64_t ddif_seed = 1;
};

// Scaling factor gamma = max(1, min(N/n, S / update_norm)). A zero-norm
// update returns the N/n cap (scaling a zero update is a no-op anyway).
double scaling_factor(int total_clients, int compromised_clients, double norm_cap,
                      double update_norm);

// One compromised client's round: local training on the (already poisoned)
// dataset with the strategy's loss, then update scaling per the factor above.
// reference is the model whose DDifs the ddif_evasion loss imitates; seed
// drives batch shuffling and injected noise.
ParamUpdate adversarial_round(const ModelParams& global, const ClientDataset& data,
                              const AttackConfig& cfg, const FederationSpec& fed,
                              std::uint64_t seed, const ModelParams* reference = nullptr);

// gap_bridging: subgroup of the r-th compromised client (0-based rank) among
// n, with subgroups of size ceil(n / |pdr ladder|).
std::size_t gap_subgroup(std::size_t rank, std::size_t n_compromised, std::size_t n_levels);

}  // namespace deepsight
