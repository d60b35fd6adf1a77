#include "vaead/model_config.hpp"

#include "vaead/errors.hpp"

namespace vaead {

std::string_view to_string(Architecture arch) {
    switch (arch) {
        case Architecture::vae: return "vae";
        case Architecture::vae_grf: return "vae-grf";
        case Architecture::vit_vae: return "vit-vae";
    }
    return "vae";
}

Architecture architecture_from_string(std::string_view name) {
    if (name == "vae") return Architecture::vae;
    if (name == "vae-grf" || name == "vae_grf") return Architecture::vae_grf;
    if (name == "vit-vae" || name == "vit_vae") return Architecture::vit_vae;
    throw ConfigError("unknown architecture '" + std::string(name) + "' (expected vae, vae-grf or vit-vae)");
}

void ViTConfig::validate() const {
    if (image_size < 1 || patch_size < 1 || image_size % patch_size != 0) {
        throw ConfigError("vit.image_size must be a positive multiple of vit.patch_size");
    }
    if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0) {
        throw ConfigError("vit.embed_dim must be divisible by vit.heads");
    }
    if (depth < 0) throw ConfigError("vit.depth must be >= 0");
    if (!(mlp_ratio > 0)) throw ConfigError("vit.mlp_ratio must be positive");
    if (channels < 1) throw ConfigError("vit.channels must be >= 1");
    const int64_t p = patch_size;
    if ((p & (p - 1)) != 0) {
        throw ConfigError("vit.patch_size must be a power of two (the decoder upsamples by 2 per stage)");
    }
}

void ModelConfig::validate() const {
    if (z_channels < 1) throw ConfigError("model.z_channels must be >= 1");
    if (latent_spatial < 1) throw ConfigError("model.latent_spatial must be >= 1");
    if (input_size < 1) throw ConfigError("model.input_size must be >= 1");
    if (base_width < 1) throw ConfigError("model.base_width must be >= 1");
    if (channels < 1) throw ConfigError("model.channels must be >= 1");
    if (!(beta >= 0)) throw ConfigError("model.beta must be >= 0");
    if (architecture == Architecture::vit_vae) {
        vit.validate();
        if (vit.channels != channels) throw ConfigError("vit.channels must equal model.channels");
    }
    if (prior.kind == PriorKind::grf) {
        if (!(prior.grf.range > 0)) throw ConfigError("model.prior.range must be positive");
        if (!(prior.grf.variance > 0)) throw ConfigError("model.prior.variance must be positive");
    }
}

ModelConfig default_model_config(Architecture arch) {
    ModelConfig c;
    c.architecture = arch;
    switch (arch) {
        case Architecture::vae:
            c.prior.kind = PriorKind::standard_normal;
            break;
        case Architecture::vae_grf:
            c.prior.kind = PriorKind::grf;
            c.prior.grf.kind = CorrelationKind::identity;
            break;
        case Architecture::vit_vae:
            c.prior.kind = PriorKind::standard_normal;
            c.input_size = c.vit.image_size;
            c.z_channels = c.vit.embed_dim;
            c.latent_spatial = c.vit.token_grid();
            break;
    }
    return c;
}

void to_json(nlohmann::json& j, const GrfParams& p) {
    j = nlohmann::json{{"kind", std::string(to_string(p.kind))},
                       {"range", p.range},
                       {"variance", p.variance},
                       {"smoothness", p.smoothness},
                       {"lattice", {p.lattice.height, p.lattice.width}}};
}

void from_json(const nlohmann::json& j, GrfParams& p) {
    if (j.contains("kind")) p.kind = correlation_kind_from_string(j.at("kind").get<std::string>());
    p.range = j.value("range", p.range);
    p.variance = j.value("variance", p.variance);
    p.smoothness = j.value("smoothness", p.smoothness);
    if (j.contains("lattice")) {
        const auto& l = j.at("lattice");
        p.lattice = {l.at(0).get<int64_t>(), l.at(1).get<int64_t>()};
    }
}

void to_json(nlohmann::json& j, const PriorConfig& p) {
    if (p.kind == PriorKind::standard_normal) {
        j = nlohmann::json{{"type", "standard_normal"}};
    } else {
        j = p.grf;
        j["type"] = "grf";
    }
}

void from_json(const nlohmann::json& j, PriorConfig& p) {
    const std::string type = j.value("type", p.kind == PriorKind::grf ? "grf" : "standard_normal");
    if (type == "standard_normal") {
        p.kind = PriorKind::standard_normal;
    } else if (type == "grf") {
        p.kind = PriorKind::grf;
        from_json(j, p.grf);
    } else {
        throw ConfigError("model.prior.type must be standard_normal or grf, got '" + type + "'");
    }
}

void to_json(nlohmann::json& j, const ViTConfig& c) {
    j = nlohmann::json{{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"embed_dim", c.embed_dim},
                       {"depth", c.depth},           {"heads", c.heads},           {"mlp_ratio", c.mlp_ratio},
                       {"channels", c.channels}};
}

void from_json(const nlohmann::json& j, ViTConfig& c) {
    c.image_size = j.value("image_size", c.image_size);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.depth = j.value("depth", c.depth);
    c.heads = j.value("heads", c.heads);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.channels = j.value("channels", c.channels);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"arch", std::string(to_string(c.architecture))},
                       {"z_channels", c.z_channels},
                       {"latent_spatial", c.latent_spatial},
                       {"input_size", c.input_size},
                       {"base_width", c.base_width},
                       {"channels", c.channels},
                       {"beta", c.beta},
                       {"backbone", c.backbone},
                       {"prior", c.prior},
                       {"vit", c.vit}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    if (j.contains("arch")) {
        c = default_model_config(architecture_from_string(j.at("arch").get<std::string>()));
    }
    c.z_channels = j.value("z_channels", c.z_channels);
    c.latent_spatial = j.value("latent_spatial", c.latent_spatial);
    c.input_size = j.value("input_size", c.input_size);
    c.base_width = j.value("base_width", c.base_width);
    c.channels = j.value("channels", c.channels);
    c.beta = j.value("beta", c.beta);
    c.backbone = j.value("backbone", c.backbone);
    if (c.backbone != "resnet18_style") {
        throw ConfigError("model.backbone must be resnet18_style");
    }
    if (j.contains("prior")) from_json(j.at("prior"), c.prior);
    if (j.contains("vit")) {
        from_json(j.at("vit"), c.vit);
        if (c.architecture == Architecture::vit_vae) {
            // The ViT latent grid is fully determined by the ViT settings.
            c.input_size = c.vit.image_size;
            c.z_channels = c.vit.embed_dim;
            c.latent_spatial = c.vit.token_grid();
        }
    }
}

} // namespace vaead
