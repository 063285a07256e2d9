#pragma once

#include <cstdint>

#include "deepsight/data.hpp"
#include "deepsight/model.hpp"

namespace deepsight {

enum class LossMode { plain, anomaly_evasion };

// Which similarity term the evasion loss uses.
enum class AnomalyKind {
    parameter_cosine,  // 1 - cos(local params, global params)
    ddif_l2            // L2 distance between own DDifs and a reference model's
};

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 1;
    int batch_size = 32;
    LossMode loss_mode = LossMode::plain;
    AnomalyKind anomaly_kind = AnomalyKind::parameter_cosine;
    double alpha = 1.0;  // weight of the classification loss in evasion mode
    bool freeze_output_layer = false;
    // ddif_l2 only: sample budget and stream seed for the loss-side DDifs.
    int ddif_samples = 128;
    std::uint64_t ddif_seed = 1;
};

// Mini-batch SGD with softmax cross-entropy. In evasion mode the step
// direction is alpha * grad(class loss) + (1 - alpha) * grad(anomaly loss);
// a reference model must be supplied then (the training start model for the
// cosine term, the imitation target for the DDif term). Deterministic given
// (model, data, cfg, seed).
ModelParams train_local(const ModelParams& model, const ClientDataset& data,
                        const TrainConfig& cfg, std::uint64_t seed,
                        const ModelParams* reference = nullptr);

// Mean softmax cross-entropy of the model on a dataset (diagnostics).
double dataset_loss(const ModelParams& model, const ClientDataset& data);

}  // namespace deepsight
