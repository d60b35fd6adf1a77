#pragma once

#include <cstdint>
#include <filesystem>

#include <torch/torch.h>

namespace vaead {

// 3 x H x W float32 in [0,1], RGB order. Grayscale files are replicated to
// three channels. Throws DecodeError.
torch::Tensor read_rgb_image(const std::filesystem::path& path);

// H x W float32 in [0,1] (single channel). Throws DecodeError.
torch::Tensor read_gray_image(const std::filesystem::path& path);

// Writes a C x H x W (C = 1 or 3) or H x W tensor with values in [0,1] as an
// 8-bit PNG, value * 255 rounded.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

// Bilinear resize (half-pixel centers) of a C x H x W or H x W tensor.
torch::Tensor resize_bilinear(const torch::Tensor& image, int64_t height, int64_t width);

// Nearest-neighbour resize of an H x W tensor.
torch::Tensor resize_nearest(const torch::Tensor& image, int64_t height, int64_t width);

} // namespace vaead
