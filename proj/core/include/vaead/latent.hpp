#pragma once

#include <memory>
#include <variant>

#include <torch/torch.h>

#include "vaead/grf_prior.hpp"

namespace vaead {

// Diagonal Gaussian posterior over a latent grid. Shapes are C x h x w for one
// sample or B x C x h x w for a batch; mean and logvar always match.
struct LatentField {
    torch::Tensor mean;
    torch::Tensor logvar;

    torch::Tensor stddev() const { return torch::exp(0.5 * logvar); }
    LatentField select(int64_t index) const { return {mean[index], logvar[index]}; }
};

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

// z = mean + exp(logvar / 2) * noise.
torch::Tensor reparameterize(const LatentField& latent, const torch::Tensor& noise);

// sum_i 1/2 (mu_i^2 + sigma_i^2 - 1 - ln sigma_i^2) over every entry.
// Throws NumericError on non-finite input.
torch::Tensor kl_standard_normal(const LatentField& latent);

// Sum of squared differences, averaged over the batch dimension when the
// inputs are 4-D. Throws ShapeError.
torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_hat);

struct StandardNormalPrior {};

// Either N(0, I) per latent entry or a GRF over each latent channel.
using Prior = std::variant<StandardNormalPrior, std::shared_ptr<const GrfPrior>>;

// KL term of the ELBO for the given prior, summed over every latent entry.
// Throws PriorMismatch if a GRF lattice does not match the latent grid.
torch::Tensor kl_divergence(const LatentField& latent, const Prior& prior);

struct LossBreakdown {
    double reconstruction = 0;
    double kl = 0;
    double beta = 1;
    double total = 0;
};

struct ElboTerms {
    torch::Tensor reconstruction;
    torch::Tensor kl;
    torch::Tensor total;  // reconstruction + beta * kl, differentiable
    LossBreakdown breakdown;
};

// beta-ELBO loss; both terms are per-sample averages over the batch when the
// inputs are batched.
ElboTerms elbo_loss(const torch::Tensor& x, const torch::Tensor& x_hat, const LatentField& latent,
                    double beta, const Prior& prior);

} // namespace vaead
