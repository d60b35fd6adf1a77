#include "vaead/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "vaead/errors.hpp"

namespace vaead {

namespace {

cv::Mat read_8bit(const std::filesystem::path& path, int flags) {
    cv::Mat mat;
    try {
        mat = cv::imread(path.string(), flags);
    } catch (const cv::Exception& e) {
        throw DecodeError(path.string() + ": " + e.what());
    }
    if (mat.empty()) {
        throw DecodeError("cannot decode image " + path.string());
    }
    if (mat.depth() != CV_8U) {
        mat.convertTo(mat, CV_8U, 1.0 / 257.0);
    }
    return mat;
}

} // namespace

torch::Tensor read_rgb_image(const std::filesystem::path& path) {
    cv::Mat bgr = read_8bit(path, cv::IMREAD_COLOR);
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    auto hwc = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
    return hwc.permute({2, 0, 1}).contiguous().to(torch::kFloat32).div_(255.0f);
}

torch::Tensor read_gray_image(const std::filesystem::path& path) {
    cv::Mat gray = read_8bit(path, cv::IMREAD_GRAYSCALE);
    auto hw = torch::from_blob(gray.data, {gray.rows, gray.cols}, torch::kUInt8).clone();
    return hw.to(torch::kFloat32).div_(255.0f);
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
    torch::Tensor t = image.detach().to(torch::kCPU).to(torch::kFloat64);
    if (t.dim() == 3 && t.size(0) == 1) {
        t = t[0];
    }
    t = t.clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);

    cv::Mat out;
    if (t.dim() == 2) {
        t = t.contiguous();
        out = cv::Mat(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC1, t.data_ptr()).clone();
    } else if (t.dim() == 3 && t.size(0) == 3) {
        auto hwc = t.permute({1, 2, 0}).contiguous();
        cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr());
        cv::cvtColor(rgb, out, cv::COLOR_RGB2BGR);
    } else {
        throw ShapeError("write_png expects H x W, 1 x H x W or 3 x H x W");
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    if (!cv::imwrite(path.string(), out)) {
        throw Error("cannot write " + path.string());
    }
}

torch::Tensor resize_bilinear(const torch::Tensor& image, int64_t height, int64_t width) {
    namespace F = torch::nn::functional;
    const bool planar = image.dim() == 2;
    auto x = planar ? image.unsqueeze(0).unsqueeze(0) : image.unsqueeze(0);
    if (x.size(2) == height && x.size(3) == width) {
        return image.clone();
    }
    auto y = F::interpolate(x, F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{height, width})
                                   .mode(torch::kBilinear)
                                   .align_corners(false));
    return planar ? y[0][0] : y[0];
}

torch::Tensor resize_nearest(const torch::Tensor& image, int64_t height, int64_t width) {
    namespace F = torch::nn::functional;
    if (image.dim() != 2) {
        throw ShapeError("resize_nearest expects an H x W tensor");
    }
    if (image.size(0) == height && image.size(1) == width) {
        return image.clone();
    }
    auto y = F::interpolate(image.unsqueeze(0).unsqueeze(0),
                            F::InterpolateFuncOptions()
                                .size(std::vector<int64_t>{height, width})
                                .mode(torch::kNearest));
    return y[0][0];
}

} // namespace vaead
