#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <torch/torch.h>

#include "vaead/latent.hpp"
#include "vaead/model_config.hpp"

namespace vaead {

namespace nn = torch::nn;

struct ForwardPass {
    LatentField latent;
    torch::Tensor z;
    torch::Tensor reconstruction;
};

// Common surface of the three VAE variants. encode() maps B x C x S x S images
// to a latent grid, decode() maps a latent grid back to images in [0,1].
class VaeModelImpl : public nn::Module {
public:
    explicit VaeModelImpl(ModelConfig config);

    const ModelConfig& config() const { return config_; }
    const Prior& prior() const { return prior_; }

    virtual LatentField encode(const torch::Tensor& images) = 0;
    virtual torch::Tensor decode(const torch::Tensor& z) = 0;

    // Shape of one sample's latent grid, C x h x w.
    virtual std::vector<int64_t> latent_shape() const = 0;

    // encode -> reparameterize with the given noise -> decode.
    ForwardPass forward(const torch::Tensor& images, const torch::Tensor& noise);

    // Posterior-mean reconstruction, no sampling.
    ForwardPass reconstruct(const torch::Tensor& images);

protected:
    void check_images(const torch::Tensor& images) const;

private:
    ModelConfig config_;
    Prior prior_;
};

using VaeModel = std::shared_ptr<VaeModelImpl>;

// Builds the model for config.architecture. Parameter initialisation draws
// from torch's global generator seeded with `seed`.
VaeModel make_model(const ModelConfig& config, uint64_t seed);

// ---------------------------------------------------------------------------
// Convolutional VAE (also the VAE-GRF body)
// ---------------------------------------------------------------------------

struct BasicBlockImpl : nn::Module {
    BasicBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride);
    torch::Tensor forward(const torch::Tensor& x);

    nn::Conv2d conv1{nullptr}, conv2{nullptr};
    nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
    nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(BasicBlock);

// ResNet-18 layout (stem + 4 stages x 2 basic blocks). The downsampling factor
// input_size / latent_spatial must be 2^k, 0 <= k <= 5; strides are taken
// from (stem, max-pool, stage2, stage3, stage4) in that order.
struct ResNetEncoderImpl : nn::Module {
    ResNetEncoderImpl(const ModelConfig& config);
    torch::Tensor forward(const torch::Tensor& x);

    int64_t out_channels = 0;
    nn::Sequential stem{nullptr};
    nn::Sequential stages{nullptr};
};
TORCH_MODULE(ResNetEncoder);

struct ConvDecoderImpl : nn::Module {
    ConvDecoderImpl(const ModelConfig& config);
    torch::Tensor forward(const torch::Tensor& z);

    nn::Sequential body{nullptr};
};
TORCH_MODULE(ConvDecoder);

// log2(input_size / latent_spatial); throws ShapeError if not a power of two in [0, 5].
int64_t conv_downsampling_steps(const ModelConfig& config);

class ConvVaeImpl : public VaeModelImpl {
public:
    explicit ConvVaeImpl(const ModelConfig& config);

    LatentField encode(const torch::Tensor& images) override;
    torch::Tensor decode(const torch::Tensor& z) override;
    std::vector<int64_t> latent_shape() const override;

private:
    ResNetEncoder encoder_{nullptr};
    nn::Conv2d mean_head_{nullptr}, logvar_head_{nullptr};
    ConvDecoder decoder_{nullptr};
};

// ---------------------------------------------------------------------------
// ViT-VAE
// ---------------------------------------------------------------------------

// C x H x W -> T x (C * p * p) or B x C x H x W -> B x T x (C * p * p).
// Patches are visited row-major; each patch vector is laid out (c, dy, dx).
// Throws ShapeError if H or W is not divisible by p.
torch::Tensor patchify(const torch::Tensor& images, int64_t patch_size);
torch::Tensor unpatchify(const torch::Tensor& tokens, int64_t patch_size, int64_t channels,
                         int64_t height, int64_t width);

struct AttentionOutput {
    torch::Tensor output;   // ... x T x d
    torch::Tensor weights;  // ... x heads x T x T, rows sum to 1
};

struct MultiHeadSelfAttentionImpl : nn::Module {
    MultiHeadSelfAttentionImpl(int64_t embed_dim, int64_t heads);
    AttentionOutput forward(const torch::Tensor& tokens);

    int64_t embed_dim, heads;
    nn::Linear qkv{nullptr}, proj{nullptr};
};
TORCH_MODULE(MultiHeadSelfAttention);

// Pre-norm transformer encoder layer:
//   x = x + MHSA(LN(x)); x = x + MLP(LN(x)).
struct TransformerBlockImpl : nn::Module {
    TransformerBlockImpl(int64_t embed_dim, int64_t heads, int64_t mlp_hidden);
    torch::Tensor forward(const torch::Tensor& tokens);
    AttentionOutput forward_with_attention(const torch::Tensor& tokens);

    nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    MultiHeadSelfAttention attention{nullptr};
    nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(TransformerBlock);

struct TokenLatent {
    torch::Tensor mean;    // B x T x d
    torch::Tensor logvar;  // B x T x d
    int64_t grid = 0;

    // B x d x g x g view usable by the vae-core loss functions.
    LatentField as_field() const;
};

class ViTVaeImpl : public VaeModelImpl {
public:
    explicit ViTVaeImpl(const ModelConfig& config);

    TokenLatent vit_encode(const torch::Tensor& images);
    // B x T x d tokens -> B x C x S x S images.
    torch::Tensor vit_decode(const torch::Tensor& z_tokens);

    LatentField encode(const torch::Tensor& images) override;
    torch::Tensor decode(const torch::Tensor& z) override;
    std::vector<int64_t> latent_shape() const override;

    // Parameters of the encoder path (patch embedding through the latent heads).
    int64_t encoder_parameter_count() const;
    // Spatial sizes after each decoder upsampling stage, e.g. 28, 56, 112, 224.
    std::vector<int64_t> decoder_stage_sizes(const torch::Tensor& z_tokens);

    nn::Linear patch_embed{nullptr};
    torch::Tensor pos_embed;
    nn::ModuleList blocks{nullptr};
    nn::LayerNorm norm{nullptr};
    nn::Linear mean_head{nullptr}, logvar_head{nullptr};
    nn::ModuleList up_stages{nullptr};
    nn::Conv2d to_image{nullptr};
};

// Closed-form count of ViT encoder parameters for the given configuration.
int64_t vit_encoder_parameter_formula(const ViTConfig& config);

} // namespace vaead
