#include "vaead/anomaly_maps.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "vaead/errors.hpp"
#include "vaead/image_io.hpp"

namespace vaead {

std::string_view to_string(MapSource source) {
    switch (source) {
        case MapSource::ssm: return "ssm";
        case MapSource::mad: return "mad";
        case MapSource::fused: return "fused";
    }
    return "ssm";
}

void SsmConfig::validate() const {
    if (window < 3 || window % 2 == 0) throw ParameterError("SSIM window must be odd and >= 3");
    if (!(gaussian_sigma > 0)) throw ParameterError("SSIM gaussian_sigma must be positive");
    if (!(c1 > 0) || !(c2 > 0)) throw ParameterError("SSIM constants must be positive");
}

std::vector<double> gaussian_window(const SsmConfig& cfg) {
    cfg.validate();
    const int64_t radius = cfg.window / 2;
    std::vector<double> taps(static_cast<std::size_t>(cfg.window));
    double sum = 0;
    for (int64_t k = 0; k < cfg.window; ++k) {
        const double d = static_cast<double>(k - radius);
        taps[static_cast<std::size_t>(k)] = std::exp(-d * d / (2.0 * cfg.gaussian_sigma * cfg.gaussian_sigma));
        sum += taps[static_cast<std::size_t>(k)];
    }
    for (auto& t : taps) t /= sum;
    return taps;
}

int64_t reflect_index(int64_t i, int64_t n) {
    if (n == 1) return 0;
    const int64_t period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

namespace {

using Plane = std::vector<double>;

// Separable Gaussian filter with reflect boundaries.
Plane blur(const Plane& in, int64_t h, int64_t w, const std::vector<double>& taps) {
    const auto radius = static_cast<int64_t>(taps.size() / 2);
    Plane tmp(in.size()), out(in.size());
    for (int64_t r = 0; r < h; ++r) {
        for (int64_t c = 0; c < w; ++c) {
            double acc = 0;
            for (int64_t k = -radius; k <= radius; ++k) {
                acc += taps[static_cast<std::size_t>(k + radius)] *
                       in[static_cast<std::size_t>(r * w + reflect_index(c + k, w))];
            }
            tmp[static_cast<std::size_t>(r * w + c)] = acc;
        }
    }
    for (int64_t r = 0; r < h; ++r) {
        for (int64_t c = 0; c < w; ++c) {
            double acc = 0;
            for (int64_t k = -radius; k <= radius; ++k) {
                acc += taps[static_cast<std::size_t>(k + radius)] *
                       tmp[static_cast<std::size_t>(reflect_index(r + k, h) * w + c)];
            }
            out[static_cast<std::size_t>(r * w + c)] = acc;
        }
    }
    return out;
}

torch::Tensor as_chw(const torch::Tensor& t) {
    auto d = t.detach().to(torch::kCPU).to(torch::kFloat64);
    if (d.dim() == 2) d = d.unsqueeze(0);
    if (d.dim() == 4 && d.size(0) == 1) d = d[0];
    if (d.dim() != 3) throw ShapeError("expected an H x W or C x H x W image");
    return d.contiguous();
}

AnomalyMap from_tensor(const torch::Tensor& hw, MapSource source) {
    auto t = hw.to(torch::kFloat64).contiguous();
    AnomalyMap map;
    map.height = t.size(0);
    map.width = t.size(1);
    map.scores.assign(t.data_ptr<double>(), t.data_ptr<double>() + t.numel());
    map.source = source;
    return map;
}

torch::Tensor bilinear(const torch::Tensor& hw, int64_t height, int64_t width) {
    namespace F = torch::nn::functional;
    if (hw.size(0) == height && hw.size(1) == width) return hw;
    return F::interpolate(hw.unsqueeze(0).unsqueeze(0), F::InterpolateFuncOptions()
                                                           .size(std::vector<int64_t>{height, width})
                                                           .mode(torch::kBilinear)
                                                           .align_corners(false))[0][0];
}

} // namespace

std::vector<double> ssim_image(const torch::Tensor& x, const torch::Tensor& y, const SsmConfig& cfg) {
    auto a = as_chw(x);
    auto b = as_chw(y);
    if (!a.sizes().equals(b.sizes())) {
        throw ShapeError("SSIM inputs differ in shape");
    }
    const auto taps = gaussian_window(cfg);
    const int64_t channels = a.size(0), h = a.size(1), w = a.size(2);
    const auto n = static_cast<std::size_t>(h * w);
    std::vector<double> ssim(n, 0.0);

    for (int64_t c = 0; c < channels; ++c) {
        const double* pa = a[c].data_ptr<double>();
        const double* pb = b[c].data_ptr<double>();
        Plane xa(pa, pa + n), xb(pb, pb + n), xaa(n), xbb(n), xab(n);
        for (std::size_t i = 0; i < n; ++i) {
            xaa[i] = xa[i] * xa[i];
            xbb[i] = xb[i] * xb[i];
            xab[i] = xa[i] * xb[i];
        }
        const Plane mu_a = blur(xa, h, w, taps), mu_b = blur(xb, h, w, taps);
        const Plane e_aa = blur(xaa, h, w, taps), e_bb = blur(xbb, h, w, taps), e_ab = blur(xab, h, w, taps);
        for (std::size_t i = 0; i < n; ++i) {
            const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
            const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
            const double cov = e_ab[i] - mu_a[i] * mu_b[i];
            const double num = (2 * mu_a[i] * mu_b[i] + cfg.c1) * (2 * cov + cfg.c2);
            const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + cfg.c1) * (var_a + var_b + cfg.c2);
            ssim[i] += num / den;
        }
    }
    for (auto& s : ssim) s /= static_cast<double>(channels);
    return ssim;
}

AnomalyMap ssm_map(const torch::Tensor& x, const torch::Tensor& x_hat, const SsmConfig& cfg) {
    if (!x.sizes().equals(x_hat.sizes())) {
        throw ShapeError("ssm_map inputs differ in shape");
    }
    auto chw = as_chw(x);
    AnomalyMap map;
    map.height = chw.size(1);
    map.width = chw.size(2);
    map.scores = ssim_image(x, x_hat, cfg);
    for (auto& s : map.scores) s = std::clamp(1.0 - s, 0.0, 1.0);
    map.source = MapSource::ssm;
    return map;
}

torch::Tensor mad_grid(const LatentField& latent, const Prior& prior) {
    auto mean = latent.mean.detach().to(torch::kCPU).to(torch::kFloat64);
    auto logvar = latent.logvar.detach().to(torch::kCPU).to(torch::kFloat64);
    if (mean.dim() == 4 && mean.size(0) == 1) {
        mean = mean[0];
        logvar = logvar[0];
    }
    if (mean.dim() != 3 || !mean.sizes().equals(logvar.sizes())) {
        throw ShapeError("mad_map expects one sample's C x h x w latent");
    }

    torch::Tensor m, log_v;
    if (const auto* grf = std::get_if<std::shared_ptr<const GrfPrior>>(&prior)) {
        const Lattice& lattice = (*grf)->lattice();
        if (mean.size(1) != lattice.height || mean.size(2) != lattice.width) {
            throw PriorMismatch("latent grid " + std::to_string(mean.size(1)) + "x" + std::to_string(mean.size(2)) +
                                " does not match the prior lattice");
        }
        auto whitened = torch::fft::ifft2(torch::fft::fft2(mean) / (*grf)->spectrum().sqrt());
        m = torch::real(whitened);
        log_v = logvar + std::log((*grf)->precision_diagonal());
    } else {
        m = mean;
        log_v = logvar;
    }
    return (0.5 * (m.pow(2) + torch::exp(log_v) - 1.0 - log_v)).sum(0);
}

AnomalyMap mad_map(const LatentField& latent, const Prior& prior, int64_t height, int64_t width) {
    return from_tensor(bilinear(mad_grid(latent, prior), height, width), MapSource::mad);
}

AnomalyMap normalize_min_max(const AnomalyMap& map) {
    AnomalyMap out = map;
    if (map.scores.empty()) return out;
    const auto [lo, hi] = std::minmax_element(map.scores.begin(), map.scores.end());
    const double min = *lo, max = *hi;
    out.normalization = {false, min, max};
    if (!(max > min)) {
        std::fill(out.scores.begin(), out.scores.end(), 0.0);
        return out;
    }
    for (auto& s : out.scores) s = (s - min) / (max - min);
    return out;
}

AnomalyMap fuse_maps(const AnomalyMap& ssm, const AnomalyMap& mad) {
    if (ssm.height != mad.height || ssm.width != mad.width) {
        throw ShapeError("cannot fuse " + std::to_string(ssm.height) + "x" + std::to_string(ssm.width) + " with " +
                         std::to_string(mad.height) + "x" + std::to_string(mad.width));
    }
    if (!ssm.normalization.raw || !mad.normalization.raw) {
        throw ParameterError("fuse_maps expects raw maps");
    }
    const AnomalyMap a = normalize_min_max(ssm);
    const AnomalyMap b = normalize_min_max(mad);
    AnomalyMap fused;
    fused.height = ssm.height;
    fused.width = ssm.width;
    fused.scores.resize(a.scores.size());
    for (std::size_t i = 0; i < fused.scores.size(); ++i) fused.scores[i] = a.scores[i] * b.scores[i];
    fused.normalization = {false, 0.0, 1.0};
    fused.source = MapSource::fused;
    return fused;
}

AnomalyMap resize_map(const AnomalyMap& map, int64_t height, int64_t width) {
    AnomalyMap out = from_tensor(bilinear(to_tensor(map), height, width), map.source);
    out.normalization = map.normalization;
    return out;
}

torch::Tensor to_tensor(const AnomalyMap& map) {
    return torch::tensor(map.scores, torch::kFloat64).reshape({map.height, map.width});
}

void write_map_png(const std::filesystem::path& path, const AnomalyMap& map) {
    write_png(path, to_tensor(map));
}

namespace {

constexpr std::array<char, 4> kMapMagic{'V', 'A', 'M', 'P'};

void put_u32(std::ostream& os, uint32_t v) {
    const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                         static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b.data()), 4);
}

uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    is.read(reinterpret_cast<char*>(b.data()), 4);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 | static_cast<uint32_t>(b[2]) << 16 |
           static_cast<uint32_t>(b[3]) << 24;
}

} // namespace

void write_map_f32(const std::filesystem::path& path, const AnomalyMap& map) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os.write(kMapMagic.data(), kMapMagic.size());
    put_u32(os, static_cast<uint32_t>(map.height));
    put_u32(os, static_cast<uint32_t>(map.width));
    for (double s : map.scores) {
        const auto f = static_cast<float>(s);
        uint32_t bits;
        std::memcpy(&bits, &f, sizeof bits);
        put_u32(os, bits);
    }
}

AnomalyMap read_map_f32(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DecodeError("cannot open " + path.string());
    std::array<char, 4> magic{};
    is.read(magic.data(), magic.size());
    if (magic != kMapMagic) throw DecodeError(path.string() + " is not a VAMP map file");
    AnomalyMap map;
    map.height = get_u32(is);
    map.width = get_u32(is);
    map.scores.resize(static_cast<std::size_t>(map.height * map.width));
    for (auto& s : map.scores) {
        const uint32_t bits = get_u32(is);
        float f;
        std::memcpy(&f, &bits, sizeof f);
        s = f;
    }
    if (!is) throw DecodeError(path.string() + " is truncated");
    map.source = MapSource::fused;
    map.normalization = {false, 0.0, 1.0};
    return map;
}

} // namespace vaead
