#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "vaead/dataset.hpp"
#include "vaead/latent.hpp"
#include "vaead/models.hpp"

namespace vaead {

struct TrainConfig {
    int64_t epochs = 100;
    int64_t batch_size = 8;
    double learning_rate = 1e-4;
    uint64_t seed = 0;
};

struct TrainStats {
    std::vector<LossBreakdown> epoch_losses;  // per-epoch means
    double wall_seconds = 0;
    uint64_t seed = 0;
    int64_t epochs_completed = 0;
};

struct EpochReport {
    int64_t epoch;  // 1-based
    LossBreakdown mean_loss;
};

using EpochCallback = std::function<void(const EpochReport&)>;

// Adam over the beta-ELBO. Batch order comes from seeded_permutation, and
// the reparameterisation noise from a generator seeded with config.seed.
// Leaves the model in eval mode. Throws EmptySplit, DivergedError.
TrainStats train(VaeModelImpl& model, const DatasetIndex& index, const TrainConfig& config,
                 const EpochCallback& on_epoch = {});

// Same loop over an in-memory N x C x S x S image tensor.
TrainStats train(VaeModelImpl& model, const torch::Tensor& images, const TrainConfig& config,
                 const EpochCallback& on_epoch = {});

// Writes epoch,reconstruction,kl,beta,total rows with fixed formatting so that
// identical runs produce byte-identical files.
std::string loss_csv(const TrainStats& stats);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct CheckpointMeta {
    ModelConfig config;
    uint64_t seed = 0;
    std::string category;  // category the model was trained on, may be empty
    std::string dataset_root;
    std::string dataset_kind;
};

// One torch archive holding every parameter and buffer under its module path,
// plus the JSON-serialised metadata.
void save_checkpoint(const std::filesystem::path& path, VaeModelImpl& model,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    VaeModel model;
    CheckpointMeta meta;
};

// Rebuilds the model from the stored config and restores every tensor bit-exactly.
// Throws ConfigError on a missing file or a tensor/config mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace vaead
