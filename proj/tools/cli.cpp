#include "vaead/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vaead/anomaly_maps.hpp"
#include "vaead/dataset.hpp"
#include "vaead/errors.hpp"
#include "vaead/evaluation.hpp"
#include "vaead/image_io.hpp"
#include "vaead/run.hpp"
#include "vaead/synthetic.hpp"
#include "vaead/training.hpp"

namespace vaead::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Bad flags, missing paths and other problems the caller can fix: exit 2.
class UsageError : public Error {
public:
    using Error::Error;
};

constexpr std::string_view kMadDefinition =
    "sum over channels of 1/2 (m^2 + v - 1 - ln v) for the prior-whitened posterior marginals (m, v) "
    "at each latent location, bilinearly upsampled";

constexpr const char* kManifestFile = "manifest.json";

fs::path resolve_output(const std::string& flag, const fs::path& fallback) {
    if (!flag.empty()) return flag;
    const std::string var(kOutputDirEnv);
    if (const char* env = std::getenv(var.c_str()); env && *env) return env;
    return fallback;
}

void write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << content;
}

void require_directory(const std::string& root) {
    if (root.empty()) throw UsageError("no dataset root given (--dataset-root or dataset.root)");
    if (!fs::is_directory(root)) throw UsageError("dataset root does not exist: " + root);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainFlags {
    std::string config, dataset_root, kind, arch, out;
    std::vector<std::string> categories;
    uint64_t seed = 0;
    int64_t epochs = 0, batch_size = 0;
    CLI::Option *seed_opt = nullptr, *epochs_opt = nullptr, *batch_opt = nullptr;
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
    RunConfig cfg = f.config.empty() ? default_run_config() : load_run_config(f.config);
    if (!f.arch.empty()) {
        const Architecture arch = architecture_from_string(f.arch);
        if (arch != cfg.model.architecture) cfg.model = default_model_config(arch);
    }
    if (!f.dataset_root.empty()) cfg.dataset.root = f.dataset_root;
    if (!f.kind.empty()) cfg.dataset.kind = dataset_kind_from_string(f.kind);
    if (!f.categories.empty()) cfg.dataset.categories = f.categories;
    if (f.seed_opt->count()) cfg.seed = f.seed;
    if (f.epochs_opt->count()) cfg.train.epochs = f.epochs;
    if (f.batch_opt->count()) cfg.train.batch_size = f.batch_size;
    cfg.train.seed = cfg.seed;
    cfg.output_dir = resolve_output(f.out, cfg.output_dir).string();
    cfg.validate();

    require_directory(cfg.dataset.root);
    std::vector<std::string> categories = cfg.dataset.categories;
    if (categories.empty()) categories = list_categories(cfg.dataset.root, cfg.dataset.kind);
    if (categories.empty()) throw UsageError("no categories found under " + cfg.dataset.root);

    const fs::path run_dir = cfg.output_dir;
    if (fs::exists(run_dir / kManifestFile)) {
        throw UsageError((run_dir / kManifestFile).string() + " already exists; choose another --out");
    }

    RunManifest manifest;
    manifest.config = json(cfg);
    manifest.seed = cfg.seed;
    manifest.dataset_root = cfg.dataset.root;
    manifest.dataset_kind = std::string(to_string(cfg.dataset.kind));
    manifest.config_hash = content_hash(manifest.config.dump());
    manifest.started_at = utc_timestamp();
    manifest.mad_definition = std::string(kMadDefinition);

    const std::string arch_name(to_string(cfg.model.architecture));
    for (const std::string& category : categories) {
        const DatasetIndex index =
            scan_dataset(cfg.dataset.root, cfg.dataset.kind, category, cfg.model.image_size());
        VaeModel model = make_model(cfg.model, cfg.seed);
        const TrainStats stats = train(*model, index, cfg.train, [&](const EpochReport& r) {
            out << category << " " << arch_name << " epoch " << r.epoch << "/" << cfg.train.epochs
                << " loss " << r.mean_loss.total << " (rec " << r.mean_loss.reconstruction << ", kl "
                << r.mean_loss.kl << ")\n";
        });

        CategoryRecord record;
        record.name = category;
        record.train_entries = static_cast<int64_t>(index.train_entries.size());
        record.test_entries = static_cast<int64_t>(index.test_entries.size());
        record.checkpoint = category + "/model.pt";
        record.loss_csv = category + "/loss.csv";

        save_checkpoint(run_dir / record.checkpoint, *model,
                        {cfg.model, cfg.seed, category, cfg.dataset.root, manifest.dataset_kind});
        write_text(run_dir / record.loss_csv, loss_csv(stats));
        manifest.metric_outputs.push_back(record.loss_csv);
        manifest.categories.push_back(record);
    }
    manifest.finished_at = utc_timestamp();
    write_manifest(run_dir / kManifestFile, manifest);
    out << "wrote " << (run_dir / kManifestFile).string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateFlags {
    std::vector<std::string> checkpoints, categories;
    std::string manifest, dataset_root, kind, arch, out, config;
    bool pooled = false;
};

struct EvalJob {
    fs::path checkpoint;
    std::string category;
    std::string dataset_root;
    DatasetKind kind = DatasetKind::mvtec;
};

json results_json(const std::vector<EvalResult>& results) {
    json arr = json::array();
    for (const auto& r : results) {
        arr.push_back({{"category", r.category},
                       {"model", r.model_id},
                       {"mode", std::string(to_string(r.mode))},
                       {"mean", r.mean},
                       {"std", r.std},
                       {"per_image_auc", r.per_image_auc},
                       {"images_evaluated", r.images_evaluated},
                       {"images_skipped", r.images_skipped}});
    }
    return arr;
}

int cmd_evaluate(const EvaluateFlags& f, std::ostream& out) {
    if (f.manifest.empty() == f.checkpoints.empty()) {
        throw UsageError("give either --manifest or at least one --checkpoint");
    }
    EvalConfig eval_cfg;
    fs::path default_out = "runs";
    if (!f.config.empty()) {
        const RunConfig cfg = load_run_config(f.config);
        eval_cfg = cfg.eval;
        default_out = cfg.output_dir;
    }

    std::vector<EvalJob> jobs;
    if (!f.manifest.empty()) {
        const RunManifest m = read_manifest(f.manifest);
        const fs::path dir = fs::path(f.manifest).parent_path();
        if (f.config.empty()) eval_cfg = run_config_from_json(m.config).eval;
        default_out = dir;
        const std::string root = f.dataset_root.empty() ? m.dataset_root : f.dataset_root;
        const DatasetKind kind = dataset_kind_from_string(f.kind.empty() ? m.dataset_kind : f.kind);
        for (const auto& record : m.categories) {
            if (!f.categories.empty() &&
                std::find(f.categories.begin(), f.categories.end(), record.name) == f.categories.end()) {
                continue;
            }
            jobs.push_back({dir / record.checkpoint, record.name, root, kind});
        }
    } else {
        for (const auto& path : f.checkpoints) {
            const LoadedCheckpoint ckpt = load_checkpoint(path);
            const std::string root = f.dataset_root.empty() ? ckpt.meta.dataset_root : f.dataset_root;
            const std::string kind_name = !f.kind.empty()                    ? f.kind
                                          : !ckpt.meta.dataset_kind.empty() ? ckpt.meta.dataset_kind
                                                                            : "mvtec";
            std::vector<std::string> cats = f.categories;
            if (cats.empty() && !ckpt.meta.category.empty()) cats.push_back(ckpt.meta.category);
            if (cats.empty()) throw UsageError(path + " names no category; pass --category");
            for (const auto& c : cats) jobs.push_back({path, c, root, dataset_kind_from_string(kind_name)});
        }
    }
    if (jobs.empty()) throw UsageError("nothing to evaluate");
    if (f.pooled) eval_cfg.mode = AucMode::pooled;

    ScorerConfig scorer;
    scorer.ssm = eval_cfg.ssm;
    scorer.mode = eval_cfg.mode;

    std::vector<EvalResult> results;
    for (const EvalJob& job : jobs) {
        LoadedCheckpoint ckpt = load_checkpoint(job.checkpoint);
        const Architecture arch = ckpt.model->config().architecture;
        if (!f.arch.empty() && architecture_from_string(f.arch) != arch) {
            throw UsageError(job.checkpoint.string() + " holds a " + std::string(to_string(arch)) +
                             " model, expected " + f.arch);
        }
        require_directory(job.dataset_root);
        const DatasetIndex index =
            scan_dataset(job.dataset_root, job.kind, job.category, ckpt.model->config().image_size());
        results.push_back(evaluate_category(*ckpt.model, index, scorer, std::string(to_string(arch))));
        out << job.category << " " << to_string(arch) << " " << format_cell(results.back().mean, results.back().std)
            << " (" << results.back().images_evaluated << " images)\n";
    }

    const RenderedReport report = render_report(results, jobs.front().kind);
    const fs::path out_dir = resolve_output(f.out, default_out);
    write_text(out_dir / "report.csv", report.csv);
    write_text(out_dir / "report.txt", report.text);
    write_text(out_dir / "results.json", results_json(results).dump(2) + "\n");
    out << report.text;
    out << "wrote " << (out_dir / "report.csv").string() << " and " << (out_dir / "report.txt").string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreFlags {
    std::string checkpoint, image, out, config;
};

int cmd_score(const ScoreFlags& f, std::ostream& out) {
    SsmConfig ssm;
    if (!f.config.empty()) ssm = load_run_config(f.config).eval.ssm;
    LoadedCheckpoint ckpt = load_checkpoint(f.checkpoint);
    VaeModelImpl& model = *ckpt.model;
    model.eval();

    const torch::Tensor original = read_rgb_image(f.image);
    const int64_t height = original.size(1), width = original.size(2);
    const int64_t side = model.config().image_size();
    const torch::Tensor pixels = resize_bilinear(original, side, side).clamp(0.0, 1.0);
    const ScoredImage scored = score_image(model, pixels, ssm);

    const fs::path out_dir = resolve_output(f.out, ".");
    const std::string stem = fs::path(f.image).stem().string();
    const auto back = [&](const AnomalyMap& m) { return resize_map(m, height, width); };

    // PNGs show each map on its own [0,1] scale; the f32 file keeps the fused scores.
    const AnomalyMap fused = back(scored.fused);
    write_map_png(out_dir / (stem + "_ssm.png"), back(normalize_min_max(scored.ssm)));
    write_map_png(out_dir / (stem + "_mad.png"), back(normalize_min_max(scored.mad)));
    write_map_png(out_dir / (stem + "_fused.png"), fused);
    write_map_f32(out_dir / (stem + "_fused.f32"), fused);
    write_png(out_dir / (stem + "_recon.png"),
              resize_bilinear(scored.reconstruction.to(torch::kFloat64), height, width).clamp(0.0, 1.0));

    double total = 0, peak = 0;
    for (double v : fused.scores) {
        total += v;
        peak = std::max(peak, v);
    }
    out << stem << ": fused mean " << total / static_cast<double>(fused.size()) << ", max " << peak << "\n";
    out << "wrote " << (out_dir / (stem + "_{ssm,mad,fused,recon}.png")).string() << " and "
        << (out_dir / (stem + "_fused.f32")).string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// list-datasets, make-synthetic
// ---------------------------------------------------------------------------

int cmd_list(const std::string& root, const std::string& kind_name, std::ostream& out) {
    require_directory(root);
    const DatasetKind kind = dataset_kind_from_string(kind_name);
    const auto categories = list_categories(root, kind);
    if (categories.empty()) out << "no " << to_string(kind) << " categories under " << root << "\n";
    for (const auto& category : categories) {
        const DatasetIndex index = scan_dataset(root, kind, category);
        int64_t anomalous = 0;
        for (const auto& e : index.test_entries) anomalous += e.mask_path.has_value();
        out << category << " [" << to_string(category_group(kind, category)) << "] train "
            << index.train_entries.size() << ", test " << index.test_entries.size() << " (" << anomalous
            << " anomalous)\n";
    }
    return kOk;
}

int cmd_make_synthetic(const std::string& out_dir, const SyntheticSpec& spec, std::ostream& out) {
    if (out_dir.empty()) throw UsageError("--out is required");
    write_synthetic_dataset(out_dir, spec);
    out << "wrote " << (fs::path(out_dir) / spec.category).string() << "\n";
    return kOk;
}

template <typename... Ts>
bool is_any(const std::exception& e) {
    return (... || (dynamic_cast<const Ts*>(&e) != nullptr));
}

int exit_code_for(const std::exception& e) {
    if (is_any<UsageError, ConfigError, CategoryNotFound, MaskMissing, DecodeError, LayoutError, EmptySplit,
               ShapeError, PriorMismatch, DuplicateResult>(e)) {
        return kUsage;
    }
    return kRuntime;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Train and evaluate VAE anomaly detectors (vae, vae-grf, vit-vae)", "vaead"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    const auto arch_check = CLI::IsMember({"vae", "vae-grf", "vit-vae"});
    const auto kind_check = CLI::IsMember({"mvtec", "miad"});

    TrainFlags tf;
    auto* train_cmd = app.add_subcommand("train", "Train one model per category and write a run manifest");
    train_cmd->add_option("--config", tf.config, "JSON run configuration")->check(CLI::ExistingFile);
    train_cmd->add_option("--dataset-root", tf.dataset_root, "Dataset root directory");
    train_cmd->add_option("--kind", tf.kind, "Dataset layout")->check(kind_check);
    train_cmd->add_option("--category", tf.categories, "Category to train (repeatable; default: all)");
    train_cmd->add_option("--arch", tf.arch, "Model architecture")->check(arch_check);
    tf.seed_opt = train_cmd->add_option("--seed", tf.seed, "Root random seed");
    tf.epochs_opt = train_cmd->add_option("--epochs", tf.epochs, "Training epochs");
    tf.batch_opt = train_cmd->add_option("--batch-size", tf.batch_size, "Batch size");
    train_cmd->add_option("--out", tf.out, "Run directory (overrides $" + std::string(kOutputDirEnv) + ")");

    EvaluateFlags ef;
    auto* eval_cmd = app.add_subcommand("evaluate", "Pixel ROCAUC per category; writes report.csv and report.txt");
    eval_cmd->add_option("--checkpoint", ef.checkpoints, "Checkpoint file (repeatable)");
    eval_cmd->add_option("--manifest", ef.manifest, "Run manifest written by train")->check(CLI::ExistingFile);
    eval_cmd->add_option("--config", ef.config, "JSON run configuration (eval section)")->check(CLI::ExistingFile);
    eval_cmd->add_option("--dataset-root", ef.dataset_root, "Dataset root (default: from checkpoint)");
    eval_cmd->add_option("--kind", ef.kind, "Dataset layout")->check(kind_check);
    eval_cmd->add_option("--category", ef.categories, "Category (repeatable)");
    eval_cmd->add_option("--arch", ef.arch, "Expected architecture")->check(arch_check);
    eval_cmd->add_option("--out", ef.out, "Report directory");
    eval_cmd->add_flag("--pooled-auc", ef.pooled, "One AUC over all test pixels instead of per-image mean ± std");

    ScoreFlags sf;
    auto* score_cmd = app.add_subcommand("score", "Write SSM, MAD and fused anomaly maps for one image");
    score_cmd->add_option("--checkpoint", sf.checkpoint, "Checkpoint file")->required();
    score_cmd->add_option("--image", sf.image, "Image to score")->required();
    score_cmd->add_option("--config", sf.config, "JSON run configuration (eval.ssm section)")
        ->check(CLI::ExistingFile);
    score_cmd->add_option("--out", sf.out, "Output directory");

    std::string list_root, list_kind = "mvtec";
    auto* list_cmd = app.add_subcommand("list-datasets", "List categories found under a dataset root");
    list_cmd->add_option("--dataset-root", list_root, "Dataset root directory")->required();
    list_cmd->add_option("--kind", list_kind, "Dataset layout")->check(kind_check);

    SyntheticSpec spec;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("make-synthetic", "Generate the textured-squares fixture dataset");
    synth_cmd->add_option("--out", synth_out, "Dataset root to create")->required();
    synth_cmd->add_option("--category", spec.category, "Category name");
    synth_cmd->add_option("--seed", spec.seed, "Generator seed");
    synth_cmd->add_option("--image-size", spec.image_size, "Image side in pixels");
    synth_cmd->add_option("--train-images", spec.train_images, "Defect-free training images");

    std::vector<const char*> argv{"vaead"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*train_cmd) return cmd_train(tf, out);
        if (*eval_cmd) return cmd_evaluate(ef, out);
        if (*score_cmd) return cmd_score(sf, out);
        if (*list_cmd) return cmd_list(list_root, list_kind, out);
        if (*synth_cmd) return cmd_make_synthetic(synth_out, spec, out);
    } catch (const std::exception& e) {
        err << "vaead: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kUsage;
}

} // namespace vaead::cli
