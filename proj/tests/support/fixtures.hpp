#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace vaead::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

// Writes a solid-colour RGB PNG (value in [0,1]) of the given size.
void write_solid_png(const std::filesystem::path& path, int64_t height, int64_t width, double value);

// Binary mask PNG from an H x W tensor.
void write_mask_png(const std::filesystem::path& path, const torch::Tensor& mask);

std::string read_file(const std::filesystem::path& path);

// Relative error |a - b| / max(|b|, tiny).
double rel_err(double a, double b);

} // namespace vaead::testing
