#include "vaead/synthetic.hpp"

#include <cmath>
#include <random>
#include <string>

#include <torch/torch.h>

#include "vaead/image_io.hpp"

namespace vaead {

namespace {

constexpr double kBackground = 0.30;
constexpr double kSquareLevel = 0.55;
constexpr double kStripeAmplitude = 0.02;
constexpr double kBlobLevel = 1.0;

// Flat background plus one square carrying a faint stripe texture. The stripe
// phase is tied to image coordinates, so the texture is the same in every image.
torch::Tensor textured_square(int64_t size, std::mt19937_64& rng) {
    auto image = torch::full({3, size, size}, kBackground, torch::kFloat64);
    auto acc = image.accessor<double, 3>();
    std::uniform_int_distribution<int64_t> side_dist(size * 5 / 16, size * 7 / 16);
    const int64_t side = side_dist(rng);
    std::uniform_int_distribution<int64_t> pos_dist(size / 16, size - side - size / 16);
    const int64_t top = pos_dist(rng), left = pos_dist(rng);
    const double tint[3] = {1.0, 0.92, 0.85};
    for (int64_t r = top; r < top + side; ++r) {
        for (int64_t c = left; c < left + side; ++c) {
            const double stripe = kStripeAmplitude * std::sin(2.0 * M_PI * static_cast<double>(r + c) / 8.0);
            for (int64_t ch = 0; ch < 3; ++ch) acc[ch][r][c] = kSquareLevel * tint[ch] + stripe;
        }
    }
    return image;
}

torch::Tensor insert_blob(torch::Tensor& image, std::mt19937_64& rng) {
    const int64_t size = image.size(1);
    auto mask = torch::zeros({size, size}, torch::kFloat64);
    std::uniform_real_distribution<double> radius_dist(static_cast<double>(size) * 0.08,
                                                       static_cast<double>(size) * 0.14);
    const double radius = radius_dist(rng);
    std::uniform_real_distribution<double> center_dist(radius + 1, static_cast<double>(size) - radius - 1);
    const double cy = center_dist(rng), cx = center_dist(rng);
    auto img = image.accessor<double, 3>();
    auto m = mask.accessor<double, 2>();
    for (int64_t r = 0; r < size; ++r) {
        for (int64_t c = 0; c < size; ++c) {
            const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
            if (dy * dy + dx * dx <= radius * radius) {
                m[r][c] = 1.0;
                for (int64_t ch = 0; ch < 3; ++ch) img[ch][r][c] = kBlobLevel;
            }
        }
    }
    return mask;
}

std::string numbered(int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%03lld", static_cast<long long>(i));
    return buf;
}

} // namespace

void write_synthetic_dataset(const std::filesystem::path& root, const SyntheticSpec& spec) {
    namespace fs = std::filesystem;
    const fs::path dir = root / spec.category;
    std::mt19937_64 rng(spec.seed);

    for (int64_t i = 0; i < spec.train_images; ++i) {
        write_png(dir / "train" / "good" / (numbered(i) + ".png"), textured_square(spec.image_size, rng));
    }
    for (int64_t i = 0; i < spec.test_good; ++i) {
        write_png(dir / "test" / "good" / (numbered(i) + ".png"), textured_square(spec.image_size, rng));
    }
    for (int64_t i = 0; i < spec.test_anomalous; ++i) {
        auto image = textured_square(spec.image_size, rng);
        auto mask = insert_blob(image, rng);
        write_png(dir / "test" / "blob" / (numbered(i) + ".png"), image);
        write_png(dir / "ground_truth" / "blob" / (numbered(i) + "_mask.png"), mask);
    }
}

ModelConfig smoke_model_config(Architecture arch) {
    ModelConfig c = default_model_config(arch);
    if (arch == Architecture::vit_vae) {
        c.vit.image_size = 64;
        c.vit.patch_size = 8;
        c.vit.embed_dim = 64;
        c.vit.depth = 2;
        c.vit.heads = 4;
        c.input_size = 64;
        c.z_channels = 64;
        c.latent_spatial = 8;
    } else {
        c.input_size = 64;
        c.latent_spatial = 8;
        c.z_channels = 32;
        c.base_width = 16;
        if (arch == Architecture::vae_grf) {
            c.prior.grf.kind = CorrelationKind::exponential;
            c.prior.grf.range = 1.0;
        }
    }
    return c;
}

TrainConfig smoke_train_config(uint64_t seed) {
    TrainConfig t;
    t.epochs = 5;
    t.batch_size = 8;
    t.learning_rate = 1e-3;
    t.seed = seed;
    return t;
}

} // namespace vaead
