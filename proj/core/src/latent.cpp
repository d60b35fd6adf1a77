#include "vaead/latent.hpp"

#include "vaead/errors.hpp"

namespace vaead {

namespace {

void check_latent(const LatentField& latent) {
    if (!latent.mean.defined() || !latent.logvar.defined()) {
        throw ShapeError("latent field is empty");
    }
    if (!latent.mean.sizes().equals(latent.logvar.sizes())) {
        throw ShapeError("mean and logvar shapes differ");
    }
}

std::string shape_string(const torch::Tensor& t) {
    std::string s = "[";
    for (int64_t i = 0; i < t.dim(); ++i) {
        s += (i ? "," : "") + std::to_string(t.size(i));
    }
    return s + "]";
}

} // namespace

torch::Tensor reparameterize(const LatentField& latent, const torch::Tensor& noise) {
    return latent.mean + torch::exp(0.5 * latent.logvar) * noise;
}

torch::Tensor kl_standard_normal(const LatentField& latent) {
    check_latent(latent);
    if (!torch::isfinite(latent.mean).all().item<bool>() || !torch::isfinite(latent.logvar).all().item<bool>()) {
        throw NumericError("non-finite posterior parameters");
    }
    return 0.5 * (latent.mean.pow(2) + torch::exp(latent.logvar) - 1.0 - latent.logvar).sum();
}

torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_hat) {
    if (!x.sizes().equals(x_hat.sizes())) {
        throw ShapeError("reconstruction shape " + shape_string(x_hat) + " != input shape " + shape_string(x));
    }
    auto sse = (x - x_hat).pow(2).sum();
    return x.dim() == 4 ? sse / static_cast<double>(x.size(0)) : sse;
}

torch::Tensor kl_divergence(const LatentField& latent, const Prior& prior) {
    if (const auto* grf = std::get_if<std::shared_ptr<const GrfPrior>>(&prior)) {
        check_latent(latent);
        return kl_grf(latent.mean, latent.logvar, **grf);
    }
    return kl_standard_normal(latent);
}

ElboTerms elbo_loss(const torch::Tensor& x, const torch::Tensor& x_hat, const LatentField& latent,
                    double beta, const Prior& prior) {
    if (beta < 0) {
        throw ParameterError("beta must be >= 0");
    }
    ElboTerms terms;
    terms.reconstruction = reconstruction_loss(x, x_hat);
    auto kl = kl_divergence(latent, prior);
    if (x.dim() == 4) {
        kl = kl / static_cast<double>(x.size(0));
    }
    terms.kl = kl;
    terms.total = terms.reconstruction + beta * terms.kl;

    terms.breakdown.reconstruction = terms.reconstruction.item<double>();
    terms.breakdown.kl = terms.kl.item<double>();
    terms.breakdown.beta = beta;
    terms.breakdown.total = terms.breakdown.reconstruction + beta * terms.breakdown.kl;
    return terms;
}

} // namespace vaead
