#include <random>
#include <vector>

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "vaead/anomaly_maps.hpp"
#include "vaead/evaluation.hpp"
#include "vaead/grf_prior.hpp"
#include "vaead/latent.hpp"
#include "vaead/models.hpp"
#include "vaead/synthetic.hpp"

using namespace vaead;

namespace {

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

GrfPrior exponential_prior(int64_t side) {
    GrfParams p;
    p.kind = CorrelationKind::exponential;
    p.range = 1.0;
    p.lattice = {side, side};
    return GrfPrior(p);
}

void BM_KlGrfSpectral(benchmark::State& state) {
    const int64_t side = state.range(0);
    const GrfPrior prior = exponential_prior(side);
    const auto mean = torch::randn({32, side, side}, kF64);
    const auto logvar = 0.3 * torch::randn({32, side, side}, kF64);
    for (auto _ : state) benchmark::DoNotOptimize(kl_grf(mean, logvar, prior).item<double>());
    state.SetComplexityN(side * side);
}
BENCHMARK(BM_KlGrfSpectral)->RangeMultiplier(2)->Range(4, 64)->Complexity();

// Same KL through an explicit Cholesky of the N x N covariance, for scale.
void BM_KlGrfDense(benchmark::State& state) {
    const int64_t side = state.range(0), n = side * side;
    const GrfPrior prior = exponential_prior(side);
    const auto sigma = dense_covariance(prior);
    const auto mean = torch::randn({32, n}, kF64);
    const auto logvar = 0.3 * torch::randn({32, n}, kF64);
    for (auto _ : state) {
        const auto l = torch::linalg_cholesky(sigma);
        const auto inv = torch::cholesky_inverse(l);
        const double log_det = 2 * l.diagonal().log().sum().item<double>();
        const auto quad = (torch::matmul(mean, inv) * mean).sum(1);
        const auto trace = torch::matmul(logvar.exp(), inv.diagonal());
        const auto kl = 0.5 * (trace + quad - n - logvar.sum(1) + log_det);
        benchmark::DoNotOptimize(kl.sum().item<double>());
    }
    state.SetComplexityN(n);
}
BENCHMARK(BM_KlGrfDense)->RangeMultiplier(2)->Range(4, 32)->Complexity();

void BM_RocAuc(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u;
    std::vector<double> scores(n);
    std::vector<uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = u(rng) < 0.1;
        scores[i] = u(rng) + (labels[i] ? 0.3 : 0.0);
    }
    labels[0] = 1;
    labels[1] = 0;
    for (auto _ : state) benchmark::DoNotOptimize(roc_auc(scores, labels));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RocAuc)->RangeMultiplier(8)->Range(1 << 10, 1 << 18)->Complexity(benchmark::oNLogN);

void BM_SsmMap(benchmark::State& state) {
    const int64_t side = state.range(0);
    const auto x = torch::rand({3, side, side}, kF64), y = torch::rand({3, side, side}, kF64);
    for (auto _ : state) benchmark::DoNotOptimize(ssm_map(x, y).scores.data());
}
BENCHMARK(BM_SsmMap)->Arg(64)->Arg(224)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_MadMap(benchmark::State& state) {
    const GrfPrior grf = exponential_prior(32);
    const Prior prior = std::make_shared<const GrfPrior>(grf);
    const LatentField z{torch::randn({256, 32, 32}, kF64), 0.3 * torch::randn({256, 32, 32}, kF64)};
    for (auto _ : state) benchmark::DoNotOptimize(mad_map(z, prior, 256, 256).scores.data());
}
BENCHMARK(BM_MadMap)->Unit(benchmark::kMillisecond);

// One optimisation step of each desk-scale model on a batch of 8 at 64 px.
void BM_TrainStep(benchmark::State& state) {
    const auto arch = static_cast<Architecture>(state.range(0));
    torch::manual_seed(0);
    VaeModel model = make_model(smoke_model_config(arch), 0);
    model->train();
    torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(1e-3));
    const auto x = torch::rand({8, 3, 64, 64});
    const auto shape = model->latent_shape();
    const auto noise = torch::randn({8, shape[0], shape[1], shape[2]});
    for (auto _ : state) {
        opt.zero_grad();
        const ForwardPass pass = model->forward(x, noise);
        auto loss = elbo_loss(x, pass.reconstruction, pass.latent, 1.0, model->prior()).total;
        loss.backward();
        opt.step();
    }
    state.SetLabel(std::string(to_string(arch)));
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(Architecture::vae))
    ->Arg(static_cast<int>(Architecture::vae_grf))
    ->Arg(static_cast<int>(Architecture::vit_vae))
    ->Unit(benchmark::kMillisecond);

void BM_VitEncodeDefault(benchmark::State& state) {
    auto model = std::dynamic_pointer_cast<ViTVaeImpl>(make_model(default_model_config(Architecture::vit_vae), 0));
    model->eval();
    torch::NoGradGuard guard;
    const auto x = torch::rand({1, 3, 224, 224});
    for (auto _ : state) benchmark::DoNotOptimize(model->vit_encode(x).mean.data_ptr());
}
BENCHMARK(BM_VitEncodeDefault)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
