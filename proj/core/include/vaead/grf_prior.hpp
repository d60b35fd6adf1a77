#pragma once

#include <cstdint>
#include <string_view>

#include <torch/torch.h>

namespace vaead {

// Stationary, zero-mean, toroidal Gaussian random field over an h x w lattice.
// The covariance is block-circulant, so the 2-D DFT diagonalises it: every
// operation below works on the spectrum and costs O(N log N), N = h * w.
//
// DFT convention throughout: unnormalised forward transform, 1/N inverse.

enum class CorrelationKind { identity, exponential, matern };

std::string_view to_string(CorrelationKind kind);
CorrelationKind correlation_kind_from_string(std::string_view name);

struct Lattice {
    int64_t height = 0;
    int64_t width = 0;

    int64_t size() const { return height * width; }
    friend bool operator==(const Lattice&, const Lattice&) = default;
};

struct GrfParams {
    CorrelationKind kind = CorrelationKind::identity;
    double range = 1.0;      // lattice units
    double variance = 1.0;
    double smoothness = 1.5; // Matern nu; ignored for other kinds
    Lattice lattice;
};

inline constexpr double kSpectrumFloor = 1e-8;
inline constexpr double kSymmetryTolerance = 1e-6;

// Correlation function rho(d) with rho(0) = 1. Matern uses the closed forms for
// nu in {0.5, 1.5, 2.5} and the modified Bessel function otherwise.
double correlation(CorrelationKind kind, double distance, double range, double smoothness);

// kernel[u, v] = variance * rho(toroidal distance of (u, v) from the origin).
// float64 tensor of shape h x w. Throws ParameterError.
torch::Tensor correlation_kernel(const GrfParams& params);

struct SpectralDensity {
    torch::Tensor spectrum;  // float64, h x w, entries >= kSpectrumFloor
    int64_t clamped = 0;     // entries raised to the floor
    double imag_residue = 0; // max |Im DFT(kernel)| before it was discarded
};

// Real part of the 2-D DFT of a toroidally symmetric kernel. Throws SymmetryError.
SpectralDensity spectral_density(const torch::Tensor& kernel);

class GrfPrior {
public:
    // Validates parameters and caches the spectrum. Throws ParameterError, SymmetryError.
    explicit GrfPrior(const GrfParams& params);

    const GrfParams& params() const { return params_; }
    const Lattice& lattice() const { return params_.lattice; }
    const torch::Tensor& kernel() const { return kernel_; }
    const torch::Tensor& spectrum() const { return spectrum_; }
    int64_t clamped_count() const { return clamped_; }

    // Constant diagonal of the precision matrix, (1/N) * sum_k 1/s_k.
    double precision_diagonal() const { return precision_diag_; }
    // log det of the covariance, sum_k ln s_k.
    double log_det() const { return log_det_; }

private:
    GrfParams params_;
    torch::Tensor kernel_;
    torch::Tensor spectrum_;
    int64_t clamped_ = 0;
    double precision_diag_ = 0;
    double log_det_ = 0;
};

// KL( N(mean, diag(exp(logvar))) || N(0, Sigma) ) for every field in the
// leading dimensions of mean/logvar (shape ... x h x w), summed. Differentiable.
// Throws PriorMismatch when the trailing dims differ from the prior lattice.
torch::Tensor kl_grf(const torch::Tensor& mean, const torch::Tensor& logvar, const GrfPrior& prior);

// Spectral synthesis from real white noise (shape ... x h x w): returns the
// complex field IDFT(sqrt(s) * DFT(noise)). Its imaginary part is zero up to
// rounding because DFT(noise) is Hermitian-symmetric.
torch::Tensor spectral_synthesis(const GrfPrior& prior, const torch::Tensor& white_noise);

// Real fields with covariance Sigma, one per leading index of white_noise.
torch::Tensor sample_grf(const GrfPrior& prior, const torch::Tensor& white_noise);

// count fields of shape h x w drawn with the given generator (float64).
torch::Tensor sample_grf(const GrfPrior& prior, int64_t count, at::Generator& generator);

inline constexpr int64_t kDenseOracleMaxSize = 4096;

// Explicit N x N covariance, Sigma[(u,v),(u',v')] = kernel[(u-u') mod h, (v-v') mod w].
// Intended as a test oracle. Throws OracleTooLarge for N > 4096.
torch::Tensor dense_covariance(const GrfPrior& prior);

} // namespace vaead
