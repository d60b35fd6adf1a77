#include "vaead/grf_prior.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vaead/errors.hpp"

namespace vaead {

std::string_view to_string(CorrelationKind kind) {
    switch (kind) {
        case CorrelationKind::identity: return "identity";
        case CorrelationKind::exponential: return "exponential";
        case CorrelationKind::matern: return "matern";
    }
    return "identity";
}

CorrelationKind correlation_kind_from_string(std::string_view name) {
    if (name == "identity") return CorrelationKind::identity;
    if (name == "exponential") return CorrelationKind::exponential;
    if (name == "matern") return CorrelationKind::matern;
    throw ConfigError("unknown correlation kind '" + std::string(name) + "'");
}

double correlation(CorrelationKind kind, double distance, double range, double smoothness) {
    if (distance == 0.0) return 1.0;
    const double x = distance / range;
    switch (kind) {
        case CorrelationKind::identity:
            return 0.0;
        case CorrelationKind::exponential:
            return std::exp(-x);
        case CorrelationKind::matern: {
            if (smoothness == 0.5) return std::exp(-x);
            if (smoothness == 1.5) {
                const double t = std::sqrt(3.0) * x;
                return (1.0 + t) * std::exp(-t);
            }
            if (smoothness == 2.5) {
                const double t = std::sqrt(5.0) * x;
                return (1.0 + t + t * t / 3.0) * std::exp(-t);
            }
            const double t = std::sqrt(2.0 * smoothness) * x;
            if (t > 700.0) return 0.0;
            const double log_scale = (1.0 - smoothness) * std::log(2.0) - std::lgamma(smoothness);
            return std::exp(log_scale + smoothness * std::log(t)) * std::cyl_bessel_k(smoothness, t);
        }
    }
    return 0.0;
}

namespace {

void validate(const GrfParams& p) {
    if (!(p.range > 0.0) || !std::isfinite(p.range)) {
        throw ParameterError("range must be positive, got " + std::to_string(p.range));
    }
    if (!(p.variance > 0.0) || !std::isfinite(p.variance)) {
        throw ParameterError("variance must be positive, got " + std::to_string(p.variance));
    }
    if (p.kind == CorrelationKind::matern && !(p.smoothness > 0.0)) {
        throw ParameterError("matern smoothness must be positive");
    }
    if (p.lattice.height < 1 || p.lattice.width < 1) {
        throw ParameterError("lattice dims must be >= 1");
    }
}

void check_lattice(const torch::Tensor& t, const Lattice& lattice, const char* what) {
    if (t.dim() < 2 || t.size(-2) != lattice.height || t.size(-1) != lattice.width) {
        throw PriorMismatch(std::string(what) + " grid does not match the " + std::to_string(lattice.height) +
                            "x" + std::to_string(lattice.width) + " prior lattice");
    }
}

} // namespace

torch::Tensor correlation_kernel(const GrfParams& params) {
    validate(params);
    const int64_t h = params.lattice.height;
    const int64_t w = params.lattice.width;
    auto kernel = torch::empty({h, w}, torch::kFloat64);
    auto acc = kernel.accessor<double, 2>();
    for (int64_t u = 0; u < h; ++u) {
        const double du = static_cast<double>(std::min(u, h - u));
        for (int64_t v = 0; v < w; ++v) {
            const double dv = static_cast<double>(std::min(v, w - v));
            const double d = std::sqrt(du * du + dv * dv);
            acc[u][v] = params.variance * correlation(params.kind, d, params.range, params.smoothness);
        }
    }
    return kernel;
}

SpectralDensity spectral_density(const torch::Tensor& kernel) {
    if (kernel.dim() != 2) {
        throw ShapeError("kernel must be 2-D");
    }
    auto k = kernel.to(torch::kFloat64);
    auto dft = torch::fft::fft2(k);
    SpectralDensity out;
    out.imag_residue = torch::imag(dft).abs().max().item<double>();
    const double scale = std::max(1.0, k.abs().max().item<double>());
    if (out.imag_residue > kSymmetryTolerance * scale) {
        throw SymmetryError("kernel is not toroidally symmetric (imaginary residue " +
                            std::to_string(out.imag_residue) + ")");
    }
    auto spectrum = torch::real(dft).contiguous();
    out.clamped = spectrum.lt(kSpectrumFloor).sum().item<int64_t>();
    out.spectrum = spectrum.clamp_min(kSpectrumFloor);
    return out;
}

GrfPrior::GrfPrior(const GrfParams& params) : params_(params) {
    kernel_ = correlation_kernel(params_);
    SpectralDensity sd = spectral_density(kernel_);
    spectrum_ = sd.spectrum;
    clamped_ = sd.clamped;
    precision_diag_ = spectrum_.reciprocal().mean().item<double>();
    log_det_ = spectrum_.log().sum().item<double>();
}

torch::Tensor kl_grf(const torch::Tensor& mean, const torch::Tensor& logvar, const GrfPrior& prior) {
    check_lattice(mean, prior.lattice(), "posterior mean");
    if (!mean.sizes().equals(logvar.sizes())) {
        throw ShapeError("mean and logvar shapes differ");
    }
    if (!torch::isfinite(mean).all().item<bool>() || !torch::isfinite(logvar).all().item<bool>()) {
        throw NumericError("non-finite posterior parameters");
    }
    const auto n = static_cast<double>(prior.lattice().size());
    const auto fields = static_cast<double>(mean.numel()) / n;
    auto spectrum = prior.spectrum().to(mean.dtype());

    auto trace = prior.precision_diagonal() * torch::exp(logvar).sum();
    auto mean_hat = torch::fft::fft2(mean);
    auto power = torch::view_as_real(mean_hat).pow(2).sum(-1);
    auto quadratic = (power / spectrum).sum() / n;
    auto log_det_ratio = fields * prior.log_det() - logvar.sum();
    return 0.5 * (trace + quadratic - fields * n + log_det_ratio);
}

torch::Tensor spectral_synthesis(const GrfPrior& prior, const torch::Tensor& white_noise) {
    check_lattice(white_noise, prior.lattice(), "white noise");
    auto xi = torch::fft::fft2(white_noise.to(torch::kFloat64));
    return torch::fft::ifft2(prior.spectrum().sqrt() * xi);
}

torch::Tensor sample_grf(const GrfPrior& prior, const torch::Tensor& white_noise) {
    return torch::real(spectral_synthesis(prior, white_noise)).contiguous();
}

torch::Tensor sample_grf(const GrfPrior& prior, int64_t count, at::Generator& generator) {
    auto white = torch::randn({count, prior.lattice().height, prior.lattice().width}, generator,
                              torch::TensorOptions().dtype(torch::kFloat64));
    return sample_grf(prior, white);
}

torch::Tensor dense_covariance(const GrfPrior& prior) {
    const int64_t h = prior.lattice().height;
    const int64_t w = prior.lattice().width;
    const int64_t n = h * w;
    if (n > kDenseOracleMaxSize) {
        throw OracleTooLarge("lattice has " + std::to_string(n) + " sites; the dense oracle allows " +
                             std::to_string(kDenseOracleMaxSize));
    }
    auto kernel = prior.kernel().accessor<double, 2>();
    auto sigma = torch::empty({n, n}, torch::kFloat64);
    auto acc = sigma.accessor<double, 2>();
    for (int64_t u = 0; u < h; ++u) {
        for (int64_t v = 0; v < w; ++v) {
            for (int64_t u2 = 0; u2 < h; ++u2) {
                for (int64_t v2 = 0; v2 < w; ++v2) {
                    acc[u * w + v][u2 * w + v2] = kernel[((u - u2) % h + h) % h][((v - v2) % w + w) % w];
                }
            }
        }
    }
    return sigma;
}

} // namespace vaead
