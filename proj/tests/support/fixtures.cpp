#include "fixtures.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vaead/image_io.hpp"

namespace vaead::testing {

TempDir::TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "vaead-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

void write_solid_png(const std::filesystem::path& path, int64_t height, int64_t width, double value) {
    write_png(path, torch::full({3, height, width}, value, torch::kFloat64));
}

void write_mask_png(const std::filesystem::path& path, const torch::Tensor& mask) {
    write_png(path, mask.to(torch::kFloat64));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

} // namespace vaead::testing
