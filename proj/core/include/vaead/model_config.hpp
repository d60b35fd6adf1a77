#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "vaead/grf_prior.hpp"

namespace vaead {

enum class Architecture { vae, vae_grf, vit_vae };

std::string_view to_string(Architecture arch);
// Accepts "vae", "vae-grf"/"vae_grf", "vit-vae"/"vit_vae".
Architecture architecture_from_string(std::string_view name);

enum class PriorKind { standard_normal, grf };

struct PriorConfig {
    PriorKind kind = PriorKind::standard_normal;
    // Lattice is filled in from the latent grid when the model is built.
    GrfParams grf;
};

struct ViTConfig {
    int64_t image_size = 224;
    int64_t patch_size = 16;
    int64_t embed_dim = 384;
    int64_t depth = 6;
    int64_t heads = 6;
    double mlp_ratio = 4.0;
    int64_t channels = 3;

    int64_t token_grid() const { return image_size / patch_size; }
    int64_t num_tokens() const { return token_grid() * token_grid(); }
    int64_t patch_dim() const { return channels * patch_size * patch_size; }
    int64_t mlp_hidden() const { return static_cast<int64_t>(static_cast<double>(embed_dim) * mlp_ratio); }

    // Throws ConfigError when the invariants do not hold.
    void validate() const;
};

struct ModelConfig {
    Architecture architecture = Architecture::vae;
    // Convolutional models: latent is z_channels x latent_spatial x latent_spatial.
    int64_t z_channels = 256;
    int64_t latent_spatial = 32;
    int64_t input_size = 256;
    int64_t base_width = 64;  // ResNet-18 stage-1 width
    int64_t channels = 3;
    double beta = 1.0;
    std::string backbone = "resnet18_style";
    PriorConfig prior;
    ViTConfig vit;

    // Image side length the model consumes.
    int64_t image_size() const { return architecture == Architecture::vit_vae ? vit.image_size : input_size; }

    void validate() const;
};

// Defaults for each architecture: conv models at 256 px with a 256 x 32 x 32
// latent; the GRF variant uses identity correlation; ViT-VAE at 224 px with
// 14 x 14 tokens of dimension 384.
ModelConfig default_model_config(Architecture arch);

void to_json(nlohmann::json& j, const GrfParams& p);
void from_json(const nlohmann::json& j, GrfParams& p);
void to_json(nlohmann::json& j, const PriorConfig& p);
void from_json(const nlohmann::json& j, PriorConfig& p);
void to_json(nlohmann::json& j, const ViTConfig& c);
void from_json(const nlohmann::json& j, ViTConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

} // namespace vaead
