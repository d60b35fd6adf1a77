#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vaead/errors.hpp"
#include "vaead/evaluation.hpp"
#include "vaead/synthetic.hpp"

using namespace vaead;
using vaead::testing::TempDir;

namespace {

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

double auc(std::vector<double> s, std::vector<uint8_t> l) { return roc_auc(s, l); }

EvalResult result(std::string category, std::string model, double mean, double std) {
    EvalResult r;
    r.category = std::move(category);
    r.model_id = std::move(model);
    r.mean = mean;
    r.std = std;
    r.images_evaluated = 3;
    return r;
}

// Synthetic category loaded at its native 64 px.
DatasetIndex synthetic_index(const fs::path& root, int64_t anomalous = 12) {
    SyntheticSpec spec;
    spec.train_images = 2;
    spec.test_anomalous = anomalous;
    write_synthetic_dataset(root, spec);
    return scan_dataset(root, DatasetKind::mvtec, spec.category, spec.image_size);
}

AnomalyMap map_from(const torch::Tensor& hw) {
    AnomalyMap m;
    m.height = hw.size(0);
    m.width = hw.size(1);
    auto c = hw.to(torch::kFloat64).contiguous();
    m.scores.assign(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
    m.source = MapSource::fused;
    m.normalization = {false, 0, 1};
    return m;
}

// Returns the ground-truth mask itself, or zeros for defect-free images.
AnomalyMap mask_producer(const ImageSample& s) {
    const int64_t side = s.pixels.size(1);
    return map_from(s.mask ? *s.mask : torch::zeros({side, side}));
}

} // namespace

// ---------------------------------------------------------------------------
// ROC AUC
// ---------------------------------------------------------------------------

TEST(RocAuc, HandWorkedCases) {
    EXPECT_DOUBLE_EQ(auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75);
    EXPECT_DOUBLE_EQ(auc({0.1, 0.2, 0.3, 0.4}, {0, 0, 1, 1}), 1.0);
    EXPECT_DOUBLE_EQ(auc({0.4, 0.3, 0.2, 0.1}, {0, 0, 1, 1}), 0.0);
    EXPECT_DOUBLE_EQ(auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.5);
    EXPECT_DOUBLE_EQ(auc({0.1, 0.5, 0.5, 0.9}, {0, 0, 1, 1}), 0.875);
}

TEST(RocAuc, AgreesWithPairCountingUnderHeavyTies) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> level(0, 6);
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 20 + static_cast<std::size_t>(trial) * 7;
        std::vector<double> s(n);
        std::vector<uint8_t> l(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = level(rng) * 0.25;
            l[i] = coin(rng);
        }
        l[0] = 1;
        l[1] = 0;
        EXPECT_NEAR(roc_auc(s, l), oracle::pairwise_auc(s, l), 1e-12);
    }
}

TEST(RocAuc, InvariantUnderStrictlyIncreasingMaps) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g;
    std::vector<double> s(300), e(300), a(300);
    std::vector<uint8_t> l(300);
    for (std::size_t i = 0; i < s.size(); ++i) {
        l[i] = i % 3 == 0;
        s[i] = g(rng) + (l[i] ? 0.7 : 0.0);
        e[i] = std::exp(s[i]);
        a[i] = 3.5 * s[i] - 2.0;
    }
    const double base = roc_auc(s, l);
    EXPECT_DOUBLE_EQ(roc_auc(e, l), base);
    EXPECT_DOUBLE_EQ(roc_auc(a, l), base);
}

TEST(RocAuc, FlippingLabelsOrScoresGivesTheComplement) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> s(64), neg(64);
        std::vector<uint8_t> l(64), flipped(64);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = std::round(u(rng) * 10) / 10;  // ties included
            neg[i] = -s[i];
            l[i] = u(rng) < 0.4;
            flipped[i] = !l[i];
        }
        l[0] = 1;
        l[1] = 0;
        flipped[0] = 0;
        flipped[1] = 1;
        const double a = roc_auc(s, l);
        EXPECT_DOUBLE_EQ(roc_auc(s, flipped), 1.0 - a);
        EXPECT_DOUBLE_EQ(roc_auc(neg, l), 1.0 - a);
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
}

TEST(RocAuc, RejectsDegenerateInput) {
    EXPECT_THROW(auc({0.1, 0.2}, {1, 1}), DegenerateLabels);
    EXPECT_THROW(auc({0.1, 0.2}, {0, 0}), DegenerateLabels);
    EXPECT_THROW(auc({0.1, 0.2}, {0}), ShapeError);
    EXPECT_THROW(auc({0.1, std::nan("")}, {0, 1}), NumericError);
}

TEST(PixelAuc, MaskIsThresholdedAtHalf) {
    const AnomalyMap m = map_from(torch::tensor({{0.1, 0.9}, {0.2, 0.8}}, kF64));
    EXPECT_DOUBLE_EQ(pixel_rocauc(m, torch::tensor({{0.0, 1.0}, {0.4, 0.6}})), 1.0);
    EXPECT_DOUBLE_EQ(pixel_rocauc(m, torch::tensor({{1.0, 0.0}, {1.0, 0.0}})), 0.0);
    EXPECT_THROW(pixel_rocauc(m, torch::zeros({2, 3})), ShapeError);
    EXPECT_THROW(pixel_rocauc(m, torch::ones({2, 2})), DegenerateLabels);
}

TEST(PixelAuc, ShiftedGaussianMatchesTheNormalCdf) {
    // Positives ~ N(1, 1), negatives ~ N(0, 1): AUC = Phi(1 / sqrt 2) ~ 0.760.
    torch::manual_seed(14);
    auto mask = torch::zeros({200, 200});
    mask.slice(0, 0, 100).fill_(1.0);
    const auto scores = torch::randn({200, 200}, kF64) + mask.to(torch::kFloat64);
    const double expected = 0.5 * std::erfc(-0.5);
    EXPECT_NEAR(expected, 0.76, 0.001);
    EXPECT_NEAR(pixel_rocauc(map_from(scores), mask), 0.76, 0.02);
}

TEST(PopulationMeanStd, DividesByN) {
    const std::vector<double> v{0.8, 1.0};
    const MeanStd ms = population_mean_std(v);
    EXPECT_NEAR(ms.mean, 0.9, 1e-15);
    EXPECT_NEAR(ms.std, 0.1, 1e-15);
    const std::vector<double> one{0.7};
    EXPECT_EQ(population_mean_std(one).std, 0.0);
}

// ---------------------------------------------------------------------------
// Category evaluation
// ---------------------------------------------------------------------------

TEST(EvaluateCategory, GroundTruthProducerScoresPerfectly) {
    TempDir tmp;
    const DatasetIndex index = synthetic_index(tmp.path());
    const EvalResult r = evaluate_category(mask_producer, index, ScorerConfig{}, "oracle");
    EXPECT_EQ(r.images_evaluated, 12);
    EXPECT_EQ(r.images_skipped, 4);
    ASSERT_EQ(r.per_image_auc.size(), 12u);
    for (double a : r.per_image_auc) EXPECT_EQ(a, 1.0);
    EXPECT_EQ(r.mean, 1.0);
    EXPECT_EQ(r.std, 0.0);
    EXPECT_EQ(format_cell(r.mean, r.std), "1.00 ± 0.00");
}

TEST(EvaluateCategory, InvertedProducerScoresZero) {
    TempDir tmp;
    const DatasetIndex index = synthetic_index(tmp.path(), 3);
    const MapProducer inverted = [](const ImageSample& s) {
        AnomalyMap m = mask_producer(s);
        for (double& v : m.scores) v = 1.0 - v;
        return m;
    };
    const EvalResult r = evaluate_category(inverted, index, ScorerConfig{}, "inverted");
    EXPECT_EQ(r.mean, 0.0);
}

TEST(EvaluateCategory, PooledModeScoresAllPixelsTogether) {
    TempDir tmp;
    const DatasetIndex index = synthetic_index(tmp.path(), 3);
    ScorerConfig cfg;
    cfg.mode = AucMode::pooled;
    const EvalResult r = evaluate_category(mask_producer, index, cfg, "oracle");
    ASSERT_EQ(r.per_image_auc.size(), 1u);
    EXPECT_EQ(r.mean, 1.0);
    EXPECT_EQ(r.std, 0.0);
    EXPECT_EQ(r.mode, AucMode::pooled);
}

TEST(EvaluateCategory, ExportedMapsReproduceTheMetric) {
    TempDir tmp;
    const DatasetIndex index = synthetic_index(tmp.path() / "data", 5);
    torch::manual_seed(15);
    const MapProducer noisy = [](const ImageSample& s) {
        const int64_t side = s.pixels.size(1);
        auto base = s.mask ? s.mask->to(torch::kFloat64) : torch::zeros({side, side}, kF64);
        return map_from(base + 1.5 * torch::rand({side, side}, kF64));
    };
    ScorerConfig cfg;
    cfg.export_dir = tmp.path() / "maps";
    const EvalResult live = evaluate_category(noisy, index, cfg, "noisy");
    EXPECT_LT(live.mean, 1.0);
    const EvalResult again = evaluate_exported_maps(tmp.path() / "maps", index.category, "noisy");
    ASSERT_EQ(again.per_image_auc.size(), live.per_image_auc.size());
    EXPECT_NEAR(again.mean, live.mean, 1e-6);
    EXPECT_NEAR(again.std, live.std, 1e-6);
}

TEST(EvaluateCategory, NoAnomalousImagesIsEmptyEvaluation) {
    TempDir tmp;
    const DatasetIndex index = synthetic_index(tmp.path(), 0);
    EXPECT_THROW(evaluate_category(mask_producer, index, ScorerConfig{}, "oracle"), EmptyEvaluation);
    std::filesystem::create_directories(tmp / "empty");
    EXPECT_THROW(evaluate_exported_maps(tmp / "empty", "x", "y"), EmptyEvaluation);
}

TEST(ScoreImage, FusedMapIsTheProductOfItsParts) {
    auto model = make_model(smoke_model_config(Architecture::vae_grf), 3);
    model->eval();
    const auto x = torch::rand({3, 64, 64});
    const ScoredImage s = score_image(*model, x, SsmConfig{});
    EXPECT_EQ(s.ssm.height, 64);
    EXPECT_EQ(s.mad.width, 64);
    EXPECT_EQ(s.reconstruction.sizes(), x.sizes());
    const AnomalyMap want = fuse_maps(s.ssm, s.mad);
    EXPECT_EQ(s.fused.scores, want.scores);
    torch::NoGradGuard guard;
    EXPECT_TRUE(torch::equal(s.reconstruction, model->reconstruct(x.unsqueeze(0)).reconstruction[0]));
}

TEST(EvaluateCategory, ModelResolutionMustMatchTheIndex) {
    TempDir tmp;
    const DatasetIndex index = synthetic_index(tmp.path(), 1);
    auto model = make_model(default_model_config(Architecture::vae), 0);
    EXPECT_THROW(evaluate_category(*model, index, ScorerConfig{}, "vae"), ShapeError);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

TEST(Report, CellFormatting) {
    EXPECT_EQ(format_cell(0.8765, 0.1289), "0.88 ± 0.13");
    EXPECT_EQ(format_cell(1.0, 0.0), "1.00 ± 0.00");
}

TEST(Report, CategoryGroups) {
    for (const char* c : {"carpet", "grid", "leather", "tile", "wood", "hazelnut"})
        EXPECT_EQ(category_group(DatasetKind::mvtec, c), ReportGroup::texture) << c;
    for (const char* c : {"bottle", "cable", "screw", "zipper"})
        EXPECT_EQ(category_group(DatasetKind::mvtec, c), ReportGroup::non_texture) << c;
    EXPECT_EQ(category_group(DatasetKind::miad, "wind_turbine"), ReportGroup::structure);
}

TEST(Report, GroupAveragesAndMissingCells) {
    const auto rendered = render_report({result("carpet", "vae", 0.8, 0.1), result("wood", "vae", 0.9, 0.3),
                                         result("bottle", "vae", 0.7, 0.2), result("carpet", "vit-vae", 0.95, 0.05)},
                                        DatasetKind::mvtec);
    const ReportTable& t = rendered.table;
    EXPECT_EQ(t.models, (std::vector<std::string>{"vae", "vit-vae"}));
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(t.rows[0].category, "carpet");
    EXPECT_EQ(t.rows[2].group, ReportGroup::non_texture);
    ASSERT_EQ(t.averages.size(), 2u);
    EXPECT_NEAR(t.averages[0].cells.at("vae").mean, 0.85, 1e-12);
    EXPECT_NEAR(t.averages[0].cells.at("vae").std, 0.2, 1e-12);
    EXPECT_EQ(ReportTable::best_model(t.rows[0].cells), "vit-vae");

    EXPECT_NE(rendered.text.find(std::string(kEmptyCell)), std::string::npos);
    EXPECT_NE(rendered.text.find("0.85 ± 0.20"), std::string::npos);
    EXPECT_NE(rendered.text.find("0.95 ± 0.05 *"), std::string::npos);
    EXPECT_NE(rendered.text.find("population std"), std::string::npos);
}

TEST(Report, CsvHasOneRowPerResult) {
    const auto rendered =
        render_report({result("carpet", "vae", 0.8, 0.1), result("bottle", "vae", 0.7, 0.2)}, DatasetKind::mvtec);
    EXPECT_EQ(rendered.csv,
              "group,category,model,mean,std,n_images,n_skipped\n"
              "texture,carpet,vae,0.800000,0.100000,3,0\n"
              "non_texture,bottle,vae,0.700000,0.200000,3,0\n");
}

TEST(Report, RejectsDuplicatesAndEmptyInput) {
    EXPECT_THROW(render_report({result("carpet", "vae", 0.8, 0.1), result("carpet", "vae", 0.7, 0.1)}, DatasetKind::mvtec),
                 DuplicateResult);
    EXPECT_THROW(render_report({}, DatasetKind::mvtec), EmptyEvaluation);
}
