#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vaead/model_config.hpp"
#include "vaead/training.hpp"

namespace vaead {

// Generated MVTec-layout category: textured squares on a flat background;
// test anomalies are bright blobs with matching ground-truth masks.
struct SyntheticSpec {
    std::string category = "squares";
    int64_t image_size = 64;
    int64_t train_images = 256;
    int64_t test_good = 4;
    int64_t test_anomalous = 12;
    uint64_t seed = 7;
};

// Writes <root>/<category>/{train/good, test/good, test/blob, ground_truth/blob}.
void write_synthetic_dataset(const std::filesystem::path& root, const SyntheticSpec& spec);

// Desk-scale models sized for the 64 px fixture. Conv: 32 x 8 x 8 latent,
// width 16. VAE-GRF: exponential correlation, range 1. ViT: patch 8, dim 64,
// depth 2, 4 heads.
ModelConfig smoke_model_config(Architecture arch);

// 5 epochs, batch 8, lr 1e-3.
TrainConfig smoke_train_config(uint64_t seed);

} // namespace vaead
