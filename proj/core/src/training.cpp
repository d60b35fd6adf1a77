#include "vaead/training.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <chrono>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "vaead/errors.hpp"

namespace vaead {

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

uint64_t epoch_seed(uint64_t seed, int64_t epoch) {
    return splitmix64(seed ^ splitmix64(static_cast<uint64_t>(epoch)));
}

struct EpochAccumulator {
    double reconstruction = 0, kl = 0, total = 0;
    int64_t samples = 0;

    void add(const LossBreakdown& b, int64_t n) {
        reconstruction += b.reconstruction * static_cast<double>(n);
        kl += b.kl * static_cast<double>(n);
        total += b.total * static_cast<double>(n);
        samples += n;
    }

    LossBreakdown mean(double beta) const {
        const auto n = static_cast<double>(samples);
        return {reconstruction / n, kl / n, beta, total / n};
    }
};

// Runs the optimisation; `for_each_batch(epoch, fn)` must call fn once per
// batch of images for that epoch.
template <typename BatchSource>
TrainStats run_training(VaeModelImpl& model, const TrainConfig& config, const EpochCallback& on_epoch,
                        BatchSource&& for_each_batch) {
    if (config.batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (!(config.learning_rate > 0)) throw ParameterError("learning_rate must be positive");

    TrainStats stats;
    stats.seed = config.seed;
    const auto start = std::chrono::steady_clock::now();
    if (config.epochs <= 0) {
        model.eval();
        return stats;
    }

    at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/true);
    auto generator = at::make_generator<at::CPUGeneratorImpl>(config.seed);
    torch::optim::Adam optimizer(model.parameters(), torch::optim::AdamOptions(config.learning_rate));
    const double beta = model.config().beta;
    const auto latent_shape = model.latent_shape();

    model.train();
    for (int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
        EpochAccumulator acc;
        int64_t batch_no = 0;
        for_each_batch(epoch, [&](const torch::Tensor& images) {
            ++batch_no;
            std::vector<int64_t> noise_shape{images.size(0)};
            noise_shape.insert(noise_shape.end(), latent_shape.begin(), latent_shape.end());
            auto noise = torch::randn(noise_shape, generator, torch::TensorOptions().dtype(images.dtype()));

            optimizer.zero_grad();
            const auto diverged = [&] {
                return DivergedError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_no));
            };
            ForwardPass pass = model.forward(images, noise);
            ElboTerms loss;
            try {
                loss = elbo_loss(images, pass.reconstruction, pass.latent, beta, model.prior());
            } catch (const NumericError&) {
                throw diverged();
            }
            if (!std::isfinite(loss.breakdown.total)) throw diverged();
            loss.total.backward();
            optimizer.step();
            acc.add(loss.breakdown, images.size(0));
        });
        stats.epoch_losses.push_back(acc.mean(beta));
        stats.epochs_completed = epoch;
        if (on_epoch) on_epoch({epoch, stats.epoch_losses.back()});
    }
    model.eval();
    stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return stats;
}

} // namespace

TrainStats train(VaeModelImpl& model, const DatasetIndex& index, const TrainConfig& config,
                 const EpochCallback& on_epoch) {
    if (index.train_entries.empty()) {
        throw EmptySplit(index.category + " train split is empty");
    }
    if (index.target_image_size != model.config().image_size()) {
        throw ShapeError("dataset is loaded at " + std::to_string(index.target_image_size) + " px but the model expects " +
                         std::to_string(model.config().image_size()));
    }
    return run_training(model, config, on_epoch, [&](int64_t epoch, const auto& fn) {
        BatchIterator batches(index, Split::train, config.batch_size, /*shuffle=*/true, epoch_seed(config.seed, epoch));
        while (auto batch = batches.next()) {
            fn(batch->pixels);
        }
    });
}

TrainStats train(VaeModelImpl& model, const torch::Tensor& images, const TrainConfig& config,
                 const EpochCallback& on_epoch) {
    if (images.dim() != 4 || images.size(0) == 0) {
        throw EmptySplit("training tensor must be a non-empty N x C x S x S batch");
    }
    const auto n = static_cast<std::size_t>(images.size(0));
    return run_training(model, config, on_epoch, [&](int64_t epoch, const auto& fn) {
        const auto order = seeded_permutation(n, epoch_seed(config.seed, epoch));
        const auto b = static_cast<std::size_t>(config.batch_size);
        for (std::size_t start = 0; start < n; start += b) {
            const std::size_t end = std::min(n, start + b);
            std::vector<int64_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
            fn(images.index_select(0, torch::tensor(idx, torch::kInt64)));
        }
    });
}

std::string loss_csv(const TrainStats& stats) {
    std::string out = "epoch,reconstruction,kl,beta,total\n";
    char line[256];
    for (std::size_t i = 0; i < stats.epoch_losses.size(); ++i) {
        const auto& l = stats.epoch_losses[i];
        std::snprintf(line, sizeof(line), "%zu,%.10g,%.10g,%.10g,%.10g\n", i + 1, l.reconstruction, l.kl, l.beta,
                      l.total);
        out += line;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

nlohmann::json meta_to_json(const CheckpointMeta& meta) {
    return nlohmann::json{{"format", "vaead-checkpoint-1"},
                          {"config", meta.config},
                          {"seed", meta.seed},
                          {"category", meta.category},
                          {"dataset_root", meta.dataset_root},
                          {"dataset_kind", meta.dataset_kind}};
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, VaeModelImpl& model, const CheckpointMeta& meta) {
    torch::serialize::OutputArchive archive;
    archive.write("meta", c10::IValue(meta_to_json(meta).dump()));
    for (const auto& p : model.named_parameters()) {
        archive.write("param/" + p.key(), p.value());
    }
    for (const auto& b : model.named_buffers()) {
        archive.write("buffer/" + b.key(), b.value(), /*is_buffer=*/true);
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    archive.save_to(path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) {
        throw ConfigError("checkpoint not found: " + path.string());
    }
    torch::serialize::InputArchive archive;
    LoadedCheckpoint out;
    try {
        archive.load_from(path.string());
        c10::IValue meta_value;
        archive.read("meta", meta_value);
        const auto j = nlohmann::json::parse(meta_value.toStringRef());
        out.meta.config = j.at("config").get<ModelConfig>();
        out.meta.seed = j.at("seed").get<uint64_t>();
        out.meta.category = j.value("category", "");
        out.meta.dataset_root = j.value("dataset_root", "");
        out.meta.dataset_kind = j.value("dataset_kind", "");
    } catch (const c10::Error& e) {
        throw ConfigError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("corrupt checkpoint metadata in " + path.string() + ": " + e.what());
    }

    out.model = make_model(out.meta.config, out.meta.seed);
    torch::NoGradGuard no_grad;
    try {
        for (auto& p : out.model->named_parameters()) {
            torch::Tensor stored;
            archive.read("param/" + p.key(), stored);
            if (!stored.sizes().equals(p.value().sizes())) {
                throw ConfigError("checkpoint tensor " + p.key() + " does not match the configured architecture");
            }
            p.value().copy_(stored);
        }
        for (auto& b : out.model->named_buffers()) {
            torch::Tensor stored;
            archive.read("buffer/" + b.key(), stored, /*is_buffer=*/true);
            if (!stored.sizes().equals(b.value().sizes())) {
                throw ConfigError("checkpoint buffer " + b.key() + " does not match the configured architecture");
            }
            b.value().copy_(stored);
        }
    } catch (const c10::Error& e) {
        throw ConfigError("checkpoint " + path.string() + " does not match its architecture: " +
                          e.what_without_backtrace());
    }
    out.model->eval();
    return out;
}

} // namespace vaead
