#include "vaead/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vaead/errors.hpp"

namespace vaead {

namespace {

std::string dims(const torch::Tensor& t) {
    std::string s;
    for (int64_t i = 0; i < t.dim(); ++i) s += (i ? "x" : "") + std::to_string(t.size(i));
    return s;
}

Prior build_prior(const ModelConfig& config) {
    config.validate();
    const bool grf = config.prior.kind == PriorKind::grf;
    if (config.architecture == Architecture::vae_grf && !grf) {
        throw ConfigError("vae-grf requires a grf prior");
    }
    if (config.architecture != Architecture::vae_grf && grf) {
        throw ConfigError(std::string(to_string(config.architecture)) + " uses the standard normal prior");
    }
    if (!grf) return StandardNormalPrior{};
    GrfParams params = config.prior.grf;
    params.lattice = {config.latent_spatial, config.latent_spatial};
    return std::make_shared<const GrfPrior>(params);
}

} // namespace

VaeModelImpl::VaeModelImpl(ModelConfig config) : config_(std::move(config)), prior_(build_prior(config_)) {}

void VaeModelImpl::check_images(const torch::Tensor& images) const {
    const int64_t s = config_.image_size();
    if (images.dim() != 4 || images.size(1) != config_.channels || images.size(2) != s || images.size(3) != s) {
        throw ShapeError("expected B x " + std::to_string(config_.channels) + " x " + std::to_string(s) + " x " +
                         std::to_string(s) + " images, got " + dims(images));
    }
}

ForwardPass VaeModelImpl::forward(const torch::Tensor& images, const torch::Tensor& noise) {
    ForwardPass pass;
    pass.latent = encode(images);
    if (!noise.sizes().equals(pass.latent.mean.sizes())) {
        throw ShapeError("noise " + dims(noise) + " does not match latent " + dims(pass.latent.mean));
    }
    pass.z = reparameterize(pass.latent, noise);
    pass.reconstruction = decode(pass.z);
    return pass;
}

ForwardPass VaeModelImpl::reconstruct(const torch::Tensor& images) {
    ForwardPass pass;
    pass.latent = encode(images);
    pass.z = pass.latent.mean;
    pass.reconstruction = decode(pass.z);
    return pass;
}

// ---------------------------------------------------------------------------
// Convolutional VAE
// ---------------------------------------------------------------------------

BasicBlockImpl::BasicBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride) {
    conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 3)
                                                    .stride(stride).padding(1).bias(false)));
    bn1 = register_module("bn1", nn::BatchNorm2d(out_channels));
    conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out_channels, out_channels, 3)
                                                    .stride(1).padding(1).bias(false)));
    bn2 = register_module("bn2", nn::BatchNorm2d(out_channels));
    if (stride != 1 || in_channels != out_channels) {
        shortcut = register_module(
            "shortcut",
            nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1).stride(stride).bias(false)),
                           nn::BatchNorm2d(out_channels)));
    }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
    auto out = torch::relu(bn1(conv1(x)));
    out = bn2(conv2(out));
    out = out + (shortcut ? shortcut->forward(x) : x);
    return torch::relu(out);
}

int64_t conv_downsampling_steps(const ModelConfig& config) {
    if (config.input_size % config.latent_spatial != 0) {
        throw ShapeError("input_size " + std::to_string(config.input_size) + " is not a multiple of latent_spatial " +
                         std::to_string(config.latent_spatial));
    }
    int64_t ratio = config.input_size / config.latent_spatial;
    int64_t steps = 0;
    while (ratio > 1 && ratio % 2 == 0) {
        ratio /= 2;
        ++steps;
    }
    if (ratio != 1 || steps > 5) {
        throw ShapeError("input_size / latent_spatial must be 2^k with k <= 5, got " +
                         std::to_string(config.input_size / config.latent_spatial));
    }
    return steps;
}

ResNetEncoderImpl::ResNetEncoderImpl(const ModelConfig& config) {
    const int64_t w = config.base_width;
    const int64_t steps = conv_downsampling_steps(config);
    // stride slots: stem conv, max-pool, stage2, stage3, stage4
    auto stride_at = [steps](int64_t slot) { return slot < steps ? 2 : 1; };

    stem = nn::Sequential(
        nn::Conv2d(nn::Conv2dOptions(config.channels, w, 7).stride(stride_at(0)).padding(3).bias(false)),
        nn::BatchNorm2d(w), nn::ReLU());
    if (steps >= 2) {
        stem->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
    }
    register_module("stem", stem);

    stages = nn::Sequential();
    int64_t in = w;
    for (int64_t stage = 0; stage < 4; ++stage) {
        const int64_t out = w << stage;
        const int64_t stride = stage == 0 ? 1 : stride_at(stage + 1);
        stages->push_back(BasicBlock(in, out, stride));
        stages->push_back(BasicBlock(out, out, 1));
        in = out;
    }
    register_module("stages", stages);
    out_channels = in;
}

torch::Tensor ResNetEncoderImpl::forward(const torch::Tensor& x) {
    return stages->forward(stem->forward(x));
}

ConvDecoderImpl::ConvDecoderImpl(const ModelConfig& config) {
    const int64_t w = config.base_width;
    const int64_t steps = conv_downsampling_steps(config);
    int64_t c = 8 * w;
    body = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(config.z_channels, c, 1).bias(false)), nn::BatchNorm2d(c),
                          nn::ReLU());
    for (int64_t i = 0; i < steps; ++i) {
        const int64_t out = std::max(w, c / 2);
        body->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(c, out, 4).stride(2).padding(1).bias(false)));
        body->push_back(nn::BatchNorm2d(out));
        body->push_back(nn::ReLU());
        c = out;
    }
    body->push_back(nn::Conv2d(nn::Conv2dOptions(c, config.channels, 3).padding(1)));
    body->push_back(nn::Sigmoid());
    register_module("body", body);
}

torch::Tensor ConvDecoderImpl::forward(const torch::Tensor& z) {
    return body->forward(z);
}

ConvVaeImpl::ConvVaeImpl(const ModelConfig& config) : VaeModelImpl(config) {
    if (config.architecture == Architecture::vit_vae) {
        throw ConfigError("ConvVae built with a vit-vae config");
    }
    encoder_ = register_module("encoder", ResNetEncoder(config));
    mean_head_ = register_module("mean_head", nn::Conv2d(nn::Conv2dOptions(encoder_->out_channels, config.z_channels, 1)));
    logvar_head_ =
        register_module("logvar_head", nn::Conv2d(nn::Conv2dOptions(encoder_->out_channels, config.z_channels, 1)));
    decoder_ = register_module("decoder", ConvDecoder(config));
}

LatentField ConvVaeImpl::encode(const torch::Tensor& images) {
    check_images(images);
    auto features = encoder_->forward(images);
    return {mean_head_->forward(features), logvar_head_->forward(features).clamp(kLogvarMin, kLogvarMax)};
}

torch::Tensor ConvVaeImpl::decode(const torch::Tensor& z) {
    const auto& c = config();
    if (z.dim() != 4 || z.size(1) != c.z_channels || z.size(2) != c.latent_spatial || z.size(3) != c.latent_spatial) {
        throw ShapeError("expected B x " + std::to_string(c.z_channels) + " x " + std::to_string(c.latent_spatial) +
                         " x " + std::to_string(c.latent_spatial) + " latent, got " + dims(z));
    }
    return decoder_->forward(z);
}

std::vector<int64_t> ConvVaeImpl::latent_shape() const {
    const auto& c = config();
    return {c.z_channels, c.latent_spatial, c.latent_spatial};
}

// ---------------------------------------------------------------------------
// ViT-VAE
// ---------------------------------------------------------------------------

torch::Tensor patchify(const torch::Tensor& images, int64_t patch_size) {
    const bool batched = images.dim() == 4;
    if (!batched && images.dim() != 3) {
        throw ShapeError("patchify expects C x H x W or B x C x H x W, got " + dims(images));
    }
    auto x = batched ? images : images.unsqueeze(0);
    const int64_t b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    if (patch_size < 1 || h % patch_size != 0 || w % patch_size != 0) {
        throw ShapeError(std::to_string(h) + "x" + std::to_string(w) + " is not divisible by patch size " +
                         std::to_string(patch_size));
    }
    const int64_t gh = h / patch_size, gw = w / patch_size;
    auto tokens = x.reshape({b, c, gh, patch_size, gw, patch_size})
                      .permute({0, 2, 4, 1, 3, 5})
                      .reshape({b, gh * gw, c * patch_size * patch_size});
    return batched ? tokens : tokens[0];
}

torch::Tensor unpatchify(const torch::Tensor& tokens, int64_t patch_size, int64_t channels, int64_t height,
                         int64_t width) {
    const bool batched = tokens.dim() == 3;
    auto t = batched ? tokens : tokens.unsqueeze(0);
    const int64_t gh = height / patch_size, gw = width / patch_size;
    if (height % patch_size != 0 || width % patch_size != 0 || t.size(1) != gh * gw ||
        t.size(2) != channels * patch_size * patch_size) {
        throw ShapeError("token tensor " + dims(tokens) + " does not match the requested image geometry");
    }
    auto images = t.reshape({t.size(0), gh, gw, channels, patch_size, patch_size})
                      .permute({0, 3, 1, 4, 2, 5})
                      .reshape({t.size(0), channels, height, width});
    return batched ? images : images[0];
}

MultiHeadSelfAttentionImpl::MultiHeadSelfAttentionImpl(int64_t embed_dim_, int64_t heads_)
    : embed_dim(embed_dim_), heads(heads_) {
    if (heads < 1 || embed_dim % heads != 0) {
        throw ShapeError("embed_dim " + std::to_string(embed_dim) + " is not divisible by " + std::to_string(heads) +
                         " heads");
    }
    qkv = register_module("qkv", nn::Linear(embed_dim, 3 * embed_dim));
    proj = register_module("proj", nn::Linear(embed_dim, embed_dim));
}

AttentionOutput MultiHeadSelfAttentionImpl::forward(const torch::Tensor& tokens) {
    const bool batched = tokens.dim() == 3;
    auto x = batched ? tokens : tokens.unsqueeze(0);
    if (x.dim() != 3 || x.size(2) != embed_dim) {
        throw ShapeError("attention expects ... x T x " + std::to_string(embed_dim) + ", got " + dims(tokens));
    }
    const int64_t b = x.size(0), t = x.size(1), head_dim = embed_dim / heads;

    auto qkv_heads = qkv->forward(x).reshape({b, t, 3, heads, head_dim}).permute({2, 0, 3, 1, 4});
    auto q = qkv_heads[0], k = qkv_heads[1], v = qkv_heads[2];
    auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim));
    auto weights = torch::softmax(scores, -1);
    auto mixed = torch::matmul(weights, v).permute({0, 2, 1, 3}).reshape({b, t, embed_dim});
    auto out = proj->forward(mixed);
    if (!batched) {
        return {out[0], weights[0]};
    }
    return {out, weights};
}

TransformerBlockImpl::TransformerBlockImpl(int64_t embed_dim, int64_t heads, int64_t mlp_hidden) {
    norm1 = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({embed_dim})));
    attention = register_module("attention", MultiHeadSelfAttention(embed_dim, heads));
    norm2 = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({embed_dim})));
    fc1 = register_module("fc1", nn::Linear(embed_dim, mlp_hidden));
    fc2 = register_module("fc2", nn::Linear(mlp_hidden, embed_dim));
}

AttentionOutput TransformerBlockImpl::forward_with_attention(const torch::Tensor& tokens) {
    auto attn = attention->forward(norm1->forward(tokens));
    auto x = tokens + attn.output;
    x = x + fc2->forward(torch::gelu(fc1->forward(norm2->forward(x))));
    return {x, attn.weights};
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& tokens) {
    return forward_with_attention(tokens).output;
}

LatentField TokenLatent::as_field() const {
    auto to_grid = [this](const torch::Tensor& t) {
        return t.transpose(1, 2).reshape({t.size(0), t.size(2), grid, grid});
    };
    return {to_grid(mean), to_grid(logvar)};
}

ViTVaeImpl::ViTVaeImpl(const ModelConfig& config) : VaeModelImpl(config) {
    if (config.architecture != Architecture::vit_vae) {
        throw ConfigError("ViTVae built with a convolutional config");
    }
    const ViTConfig& vc = config.vit;
    const int64_t d = vc.embed_dim;

    patch_embed = register_module("patch_embed", nn::Linear(vc.patch_dim(), d));
    pos_embed = register_parameter("pos_embed", torch::randn({1, vc.num_tokens(), d}) * 0.02);
    blocks = register_module("blocks", nn::ModuleList());
    for (int64_t i = 0; i < vc.depth; ++i) {
        blocks->push_back(TransformerBlock(d, vc.heads, vc.mlp_hidden()));
    }
    norm = register_module("norm", nn::LayerNorm(nn::LayerNormOptions({d})));
    mean_head = register_module("mean_head", nn::Linear(d, d));
    logvar_head = register_module("logvar_head", nn::Linear(d, d));

    up_stages = register_module("up_stages", nn::ModuleList());
    int64_t c = d;
    for (int64_t size = vc.token_grid(); size < vc.image_size; size *= 2) {
        const int64_t out = std::max<int64_t>(c / 2, 4);
        up_stages->push_back(nn::Sequential(
            nn::ConvTranspose2d(nn::ConvTranspose2dOptions(c, out, 4).stride(2).padding(1).bias(false)),
            nn::BatchNorm2d(out), nn::ReLU()));
        c = out;
    }
    to_image = register_module("to_image", nn::Conv2d(nn::Conv2dOptions(c, vc.channels, 3).padding(1)));
}

TokenLatent ViTVaeImpl::vit_encode(const torch::Tensor& images) {
    check_images(images);
    const ViTConfig& vc = config().vit;
    auto x = patch_embed->forward(patchify(images, vc.patch_size)) + pos_embed;
    for (const auto& block : *blocks) {
        x = block->as<TransformerBlock>()->forward(x);
    }
    x = norm->forward(x);
    return {mean_head->forward(x), logvar_head->forward(x).clamp(kLogvarMin, kLogvarMax), vc.token_grid()};
}

torch::Tensor ViTVaeImpl::vit_decode(const torch::Tensor& z_tokens) {
    const ViTConfig& vc = config().vit;
    const bool batched = z_tokens.dim() == 3;
    auto t = batched ? z_tokens : z_tokens.unsqueeze(0);
    if (t.dim() != 3 || t.size(1) != vc.num_tokens() || t.size(2) != vc.embed_dim) {
        throw ShapeError("expected " + std::to_string(vc.num_tokens()) + " x " + std::to_string(vc.embed_dim) +
                         " tokens, got " + dims(z_tokens));
    }
    const int64_t g = vc.token_grid();
    auto x = t.transpose(1, 2).reshape({t.size(0), vc.embed_dim, g, g});
    for (const auto& stage : *up_stages) {
        x = stage->as<nn::Sequential>()->forward(x);
    }
    auto images = torch::sigmoid(to_image->forward(x));
    return batched ? images : images[0];
}

LatentField ViTVaeImpl::encode(const torch::Tensor& images) {
    return vit_encode(images).as_field();
}

torch::Tensor ViTVaeImpl::decode(const torch::Tensor& z) {
    const ViTConfig& vc = config().vit;
    const int64_t g = vc.token_grid();
    if (z.dim() != 4 || z.size(1) != vc.embed_dim || z.size(2) != g || z.size(3) != g) {
        throw ShapeError("expected B x " + std::to_string(vc.embed_dim) + " x " + std::to_string(g) + " x " +
                         std::to_string(g) + " latent, got " + dims(z));
    }
    return vit_decode(z.flatten(2).transpose(1, 2));
}

std::vector<int64_t> ViTVaeImpl::latent_shape() const {
    const ViTConfig& vc = config().vit;
    return {vc.embed_dim, vc.token_grid(), vc.token_grid()};
}

int64_t ViTVaeImpl::encoder_parameter_count() const {
    int64_t total = pos_embed.numel();
    for (const nn::Module* m : {static_cast<const nn::Module*>(patch_embed.get()),
                                static_cast<const nn::Module*>(blocks.get()), static_cast<const nn::Module*>(norm.get()),
                                static_cast<const nn::Module*>(mean_head.get()),
                                static_cast<const nn::Module*>(logvar_head.get())}) {
        for (const auto& p : m->parameters()) total += p.numel();
    }
    return total;
}

std::vector<int64_t> ViTVaeImpl::decoder_stage_sizes(const torch::Tensor& z_tokens) {
    const ViTConfig& vc = config().vit;
    const int64_t g = vc.token_grid();
    auto x = z_tokens.transpose(1, 2).reshape({z_tokens.size(0), vc.embed_dim, g, g});
    std::vector<int64_t> sizes;
    for (const auto& stage : *up_stages) {
        x = stage->as<nn::Sequential>()->forward(x);
        sizes.push_back(x.size(2));
    }
    return sizes;
}

int64_t vit_encoder_parameter_formula(const ViTConfig& c) {
    const int64_t d = c.embed_dim, m = c.mlp_hidden(), p = c.patch_dim(), t = c.num_tokens();
    const int64_t patch = p * d + d;
    const int64_t pos = t * d;
    const int64_t block = 2 * d                // norm1
                          + (3 * d * d + 3 * d) // qkv
                          + (d * d + d)         // proj
                          + 2 * d               // norm2
                          + (d * m + m)         // fc1
                          + (m * d + d);        // fc2
    const int64_t final_norm = 2 * d;
    const int64_t heads = 2 * (d * d + d);
    return patch + pos + c.depth * block + final_norm + heads;
}

VaeModel make_model(const ModelConfig& config, uint64_t seed) {
    torch::manual_seed(seed);
    if (config.architecture == Architecture::vit_vae) {
        return std::make_shared<ViTVaeImpl>(config);
    }
    return std::make_shared<ConvVaeImpl>(config);
}

} // namespace vaead
