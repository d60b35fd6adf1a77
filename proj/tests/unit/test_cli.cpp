#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "vaead/anomaly_maps.hpp"
#include "vaead/cli.hpp"
#include "vaead/errors.hpp"
#include "vaead/evaluation.hpp"
#include "vaead/image_io.hpp"
#include "vaead/run.hpp"
#include "vaead/synthetic.hpp"

using namespace vaead;
using nlohmann::json;
using vaead::testing::read_file;
using vaead::testing::TempDir;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome vaead_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// Two small synthetic categories and a desk-scale config pointing at them.
class CliTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        tmp_ = new TempDir();
        for (const char* name : {"squares", "tiles"}) {
            SyntheticSpec spec;
            spec.category = name;
            spec.train_images = 16;
            spec.test_good = 2;
            spec.test_anomalous = 3;
            spec.seed = name[0];
            write_synthetic_dataset(root(), spec);
        }
        RunConfig cfg = default_run_config();
        cfg.model = smoke_model_config(Architecture::vae);
        cfg.dataset.root = root().string();
        cfg.dataset.categories = {"squares"};
        cfg.train.epochs = 2;
        cfg.seed = 5;
        std::ofstream(config()) << json(cfg).dump(2);

        const Outcome o = vaead_cli({"train", "--config", config().string(), "--out", run().string()});
        ASSERT_EQ(o.code, 0) << o.err;
    }
    static void TearDownTestSuite() {
        delete tmp_;
        tmp_ = nullptr;
    }

    static fs::path root() { return tmp_->path() / "data"; }
    static fs::path config() { return tmp_->path() / "config.json"; }
    static fs::path run() { return tmp_->path() / "run"; }
    static fs::path checkpoint() { return run() / "squares" / "model.pt"; }

    static TempDir* tmp_;
};

TempDir* CliTest::tmp_ = nullptr;

} // namespace

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

TEST_F(CliTest, TrainWritesCheckpointManifestAndLossCsv) {
    EXPECT_TRUE(fs::exists(checkpoint()));
    EXPECT_TRUE(fs::exists(run() / "squares" / "loss.csv"));
    const RunManifest m = read_manifest(run() / "manifest.json");
    ASSERT_EQ(m.categories.size(), 1u);
    EXPECT_EQ(m.categories[0].train_entries, 16);
    EXPECT_EQ(m.categories[0].test_entries, 5);
    EXPECT_EQ(m.seed, 5u);
    EXPECT_EQ(m.config_hash, content_hash(m.config.dump()));
    EXPECT_FALSE(m.mad_definition.empty());
    EXPECT_EQ(m.tool_version, kToolVersion);

    const std::string csv = read_file(run() / "squares" / "loss.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);  // header + 2 epochs
}

TEST_F(CliTest, RerunWithSameSeedGivesByteIdenticalLossCsv) {
    TempDir out;
    const Outcome o = vaead_cli({"train", "--config", config().string(), "--out", out.path().string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(read_file(out / "squares/loss.csv"), read_file(run() / "squares" / "loss.csv"));
}

TEST_F(CliTest, ManifestsAreWriteOnce) {
    const Outcome o = vaead_cli({"train", "--config", config().string(), "--out", run().string()});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("already exists"), std::string::npos);
}

TEST_F(CliTest, FlagsOverrideTheConfigFile) {
    TempDir out;
    const Outcome o = vaead_cli({"train", "--config", config().string(), "--out", out.path().string(), "--epochs",
                                 "1", "--seed", "8", "--category", "tiles"});
    ASSERT_EQ(o.code, 0) << o.err;
    const RunManifest m = read_manifest(out / "manifest.json");
    EXPECT_EQ(m.seed, 8u);
    ASSERT_EQ(m.categories.size(), 1u);
    EXPECT_EQ(m.categories[0].name, "tiles");
    EXPECT_EQ(run_config_from_json(m.config).train.epochs, 1);
}

TEST_F(CliTest, OutputDirectoryFallsBackToTheEnvironment) {
    TempDir out;
    ::setenv(std::string(kOutputDirEnv).c_str(), out.path().c_str(), 1);
    const Outcome o = vaead_cli({"train", "--config", config().string(), "--epochs", "0"});
    ::unsetenv(std::string(kOutputDirEnv).c_str());
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_TRUE(fs::exists(out / "manifest.json"));
}

TEST_F(CliTest, MissingDatasetRootIsAUsageError) {
    TempDir out;
    const std::string missing = (out.path() / "no-such-root").string();
    const Outcome o = vaead_cli({"train", "--dataset-root", missing, "--out", out.path().string()});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find(missing), std::string::npos);
}

TEST_F(CliTest, BadConfigFieldIsAUsageErrorNamingTheField) {
    TempDir out;
    std::ofstream(out / "bad.json") << R"({"train": {"epochs": 2, "lr": 0.1}})";
    const Outcome o = vaead_cli({"train", "--config", (out / "bad.json").string(), "--out", out.path().string()});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("train.lr"), std::string::npos);
    EXPECT_EQ(vaead_cli({"train", "--arch", "resnet"}).code, 2);
    EXPECT_EQ(vaead_cli({"frobnicate"}).code, 2);
    EXPECT_EQ(vaead_cli({"--help"}).code, 0);
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

TEST_F(CliTest, EvaluateMatchesTheLibraryPipeline) {
    TempDir out;
    const Outcome o = vaead_cli({"evaluate", "--checkpoint", checkpoint().string(), "--out", out.path().string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_TRUE(fs::exists(out / "report.csv"));
    EXPECT_TRUE(fs::exists(out / "report.txt"));
    const json results = json::parse(read_file(out / "results.json"));
    ASSERT_EQ(results.size(), 1u);

    LoadedCheckpoint ckpt = load_checkpoint(checkpoint());
    const DatasetIndex index = scan_dataset(root(), DatasetKind::mvtec, "squares", 64);
    const EvalResult lib = evaluate_category(*ckpt.model, index, ScorerConfig{}, "vae");
    EXPECT_EQ(results[0]["mean"].get<double>(), lib.mean);
    EXPECT_EQ(results[0]["std"].get<double>(), lib.std);
    EXPECT_EQ(results[0]["per_image_auc"].get<std::vector<double>>(), lib.per_image_auc);
    EXPECT_NE(o.out.find(format_cell(lib.mean, lib.std)), std::string::npos);
}

TEST_F(CliTest, EvaluateFromManifestReproducesCheckpointRun) {
    TempDir a, b;
    ASSERT_EQ(vaead_cli({"evaluate", "--manifest", (run() / "manifest.json").string(), "--out", a.path().string()}).code, 0);
    ASSERT_EQ(vaead_cli({"evaluate", "--checkpoint", checkpoint().string(), "--out", b.path().string()}).code, 0);
    EXPECT_EQ(read_file(a / "results.json"), read_file(b / "results.json"));
    EXPECT_EQ(read_file(a / "report.csv"), read_file(b / "report.csv"));
}

TEST_F(CliTest, EvaluatingTwoCategoriesGivesTwoCsvRows) {
    TempDir out;
    const Outcome o = vaead_cli({"evaluate", "--checkpoint", checkpoint().string(), "--category", "squares",
                                 "--category", "tiles", "--out", out.path().string()});
    ASSERT_EQ(o.code, 0) << o.err;
    const std::string csv = read_file(out / "report.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_NE(csv.find(",squares,vae,"), std::string::npos);
    EXPECT_NE(csv.find(",tiles,vae,"), std::string::npos);
}

TEST_F(CliTest, PooledFlagSwitchesTheMetric) {
    TempDir out;
    ASSERT_EQ(vaead_cli({"evaluate", "--checkpoint", checkpoint().string(), "--pooled-auc", "--out",
                         out.path().string()})
                  .code,
              0);
    const json results = json::parse(read_file(out / "results.json"));
    EXPECT_EQ(results[0]["mode"], "pooled");
    EXPECT_EQ(results[0]["per_image_auc"].size(), 1u);
}

TEST_F(CliTest, ArchitectureMismatchIsAUsageError) {
    TempDir out;
    const Outcome o = vaead_cli(
        {"evaluate", "--checkpoint", checkpoint().string(), "--arch", "vit-vae", "--out", out.path().string()});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("vit-vae"), std::string::npos);
    EXPECT_EQ(vaead_cli({"evaluate", "--out", out.path().string()}).code, 2);
}

// ---------------------------------------------------------------------------
// score, list-datasets
// ---------------------------------------------------------------------------

TEST_F(CliTest, ScoreWritesMapsAtTheInputResolution) {
    TempDir out;
    const fs::path image = out / "probe.png";
    write_png(image, torch::rand({3, 50, 80}, torch::kFloat64));
    const Outcome o = vaead_cli(
        {"score", "--checkpoint", checkpoint().string(), "--image", image.string(), "--out", out.path().string()});
    ASSERT_EQ(o.code, 0) << o.err;
    for (const char* suffix : {"_ssm.png", "_mad.png", "_fused.png"}) {
        const auto map = read_gray_image(out / ("probe" + std::string(suffix)));
        EXPECT_EQ(map.sizes(), (std::vector<int64_t>{50, 80})) << suffix;
    }
    EXPECT_EQ(read_rgb_image(out / "probe_recon.png").sizes(), (std::vector<int64_t>{3, 50, 80}));

    const AnomalyMap f32 = read_map_f32(out / "probe_fused.f32");
    ASSERT_EQ(f32.height, 50);
    ASSERT_EQ(f32.width, 80);
    const auto png = read_gray_image(out / "probe_fused.png").to(torch::kFloat64).contiguous();
    const double* p = png.data_ptr<double>();
    for (std::size_t i = 0; i < f32.size(); ++i) EXPECT_LE(std::abs(p[i] - f32.scores[i]), 1.0 / 255) << i;
}

TEST_F(CliTest, UndecodableImageIsAUsageError) {
    TempDir out;
    std::ofstream(out / "junk.png") << "definitely not a png";
    const Outcome o = vaead_cli({"score", "--checkpoint", checkpoint().string(), "--image", (out / "junk.png").string(),
                                 "--out", out.path().string()});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("junk.png"), std::string::npos);
}

TEST_F(CliTest, ListDatasetsReportsCounts) {
    const Outcome o = vaead_cli({"list-datasets", "--dataset-root", root().string()});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_NE(o.out.find("squares [non_texture] train 16, test 5 (3 anomalous)"), std::string::npos) << o.out;
    EXPECT_NE(o.out.find("tiles"), std::string::npos);
}

TEST(CliScore, OverfitModelLeavesATrainingImageNearlyClean) {
    TempDir tmp;
    SyntheticSpec spec;
    spec.train_images = 1;
    spec.test_good = 0;
    spec.test_anomalous = 0;
    write_synthetic_dataset(tmp / "data", spec);
    RunConfig cfg = default_run_config();
    cfg.model = smoke_model_config(Architecture::vae);
    cfg.dataset.root = (tmp / "data").string();
    cfg.train.epochs = 300;
    std::ofstream(tmp / "c.json") << json(cfg).dump();
    ASSERT_EQ(vaead_cli({"train", "--config", (tmp / "c.json").string(), "--out", (tmp / "run").string()}).code, 0);

    const fs::path image = *fs::directory_iterator(tmp / "data/squares/train/good");
    const Outcome o = vaead_cli({"score", "--checkpoint", (tmp / "run/squares/model.pt").string(), "--image",
                                 image.string(), "--out", (tmp / "maps").string()});
    ASSERT_EQ(o.code, 0) << o.err;
    const AnomalyMap fused = read_map_f32(tmp / "maps" / (image.stem().string() + "_fused.f32"));
    double mean = 0;
    for (double v : fused.scores) mean += v / static_cast<double>(fused.size());
    EXPECT_LT(mean, 0.1) << o.out;
}

TEST(CliMisc, MakeSyntheticWritesAScannableDataset) {
    TempDir tmp;
    const Outcome o = vaead_cli({"make-synthetic", "--out", tmp.path().string(), "--train-images", "3"});
    ASSERT_EQ(o.code, 0) << o.err;
    const DatasetIndex index = scan_dataset(tmp.path(), DatasetKind::mvtec, "squares", 64);
    EXPECT_EQ(index.train_entries.size(), 3u);
}
