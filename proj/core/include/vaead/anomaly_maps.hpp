#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "vaead/latent.hpp"

namespace vaead {

enum class MapSource { ssm, mad, fused };

std::string_view to_string(MapSource source);

struct Normalization {
    bool raw = true;
    double min = 0;  // values subtracted / divided when raw == false
    double max = 0;
};

// Per-pixel anomaly scores, row-major, higher = more anomalous.
struct AnomalyMap {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<double> scores;
    Normalization normalization;
    MapSource source = MapSource::ssm;

    double at(int64_t row, int64_t col) const { return scores[static_cast<std::size_t>(row * width + col)]; }
    std::size_t size() const { return scores.size(); }
};

struct SsmConfig {
    int64_t window = 11;
    double gaussian_sigma = 1.5;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;

    void validate() const;
};

// Normalised 1-D Gaussian taps of length cfg.window.
std::vector<double> gaussian_window(const SsmConfig& cfg);

// Index into [0, n) for a possibly out-of-range position using mirror
// reflection without repeating the edge sample (d c b | a b c d | c b a).
int64_t reflect_index(int64_t i, int64_t n);

// Per-pixel SSIM averaged over channels, C x H x W inputs (or H x W).
std::vector<double> ssim_image(const torch::Tensor& x, const torch::Tensor& y, const SsmConfig& cfg);

// 1 - SSIM clipped to [0,1], normalisation "raw". Throws ShapeError.
AnomalyMap ssm_map(const torch::Tensor& x, const torch::Tensor& x_hat, const SsmConfig& cfg = {});

// Latent-space deviation map. For one sample's latent (C x h x w), the score at
// each location is sum_c 1/2 (m^2 + v - 1 - ln v) of the prior-whitened
// posterior marginals (m, v), bilinearly upsampled to height x width.
// Throws PriorMismatch.
AnomalyMap mad_map(const LatentField& latent, const Prior& prior, int64_t height, int64_t width);

// Per-location scores before upsampling, h x w float64.
torch::Tensor mad_grid(const LatentField& latent, const Prior& prior);

// Min-max normalised copy; constant maps become all zeros.
AnomalyMap normalize_min_max(const AnomalyMap& map);

// Product of the two min-max normalised maps. Throws ShapeError.
AnomalyMap fuse_maps(const AnomalyMap& ssm, const AnomalyMap& mad);

// Bilinear resample to another resolution (keeps the normalisation record).
AnomalyMap resize_map(const AnomalyMap& map, int64_t height, int64_t width);

torch::Tensor to_tensor(const AnomalyMap& map);  // H x W float64

// 8-bit grayscale PNG of clamp(score, 0, 1) * 255, rounded.
void write_map_png(const std::filesystem::path& path, const AnomalyMap& map);

// Raw float32 export: "VAMP" magic, uint32 height, uint32 width (little
// endian), then height * width float32 scores, row-major.
void write_map_f32(const std::filesystem::path& path, const AnomalyMap& map);
AnomalyMap read_map_f32(const std::filesystem::path& path);

} // namespace vaead
