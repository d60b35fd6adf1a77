#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vaead/anomaly_maps.hpp"
#include "vaead/dataset.hpp"
#include "vaead/evaluation.hpp"
#include "vaead/model_config.hpp"
#include "vaead/training.hpp"

namespace vaead {

inline constexpr std::string_view kToolVersion = "0.3.0";
inline constexpr std::string_view kOutputDirEnv = "VAEAD_OUTPUT_DIR";

struct DatasetConfig {
    std::string root;
    DatasetKind kind = DatasetKind::mvtec;
    std::vector<std::string> categories;
};

struct EvalConfig {
    AucMode mode = AucMode::per_image;
    SsmConfig ssm;
};

// Everything a run needs. Every default matches the reference benchmark
// setup: 100 epochs, batch 8, lr 1e-4, beta 1, z 256 at 32 x 32, ViT 384 at 14 x 14,
// identity correlation.
struct RunConfig {
    uint64_t seed = 0;
    DatasetConfig dataset;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
    std::string output_dir = "runs";

    void validate() const;
};

RunConfig default_run_config(Architecture arch = Architecture::vae);

void to_json(nlohmann::json& j, const RunConfig& c);
// Missing keys keep their defaults; model defaults follow model.arch when given.
// Throws ConfigError naming the offending field.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// git-style blob hash: sha1("blob <len>\0" + content), hex.
std::string content_hash(const std::string& content);

struct CategoryRecord {
    std::string name;
    int64_t train_entries = 0;
    int64_t test_entries = 0;
    std::string checkpoint;  // relative to the manifest directory
    std::string loss_csv;

    friend bool operator==(const CategoryRecord&, const CategoryRecord&) = default;
};

struct RunManifest {
    nlohmann::json config;  // full RunConfig snapshot
    uint64_t seed = 0;
    std::string dataset_root;
    std::string dataset_kind;
    std::vector<CategoryRecord> categories;
    std::string config_hash;
    std::string started_at;
    std::string finished_at;
    std::vector<std::string> metric_outputs;
    std::string tool_version{kToolVersion};
    std::string mad_definition;

    friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

void to_json(nlohmann::json& j, const CategoryRecord& r);
void from_json(const nlohmann::json& j, CategoryRecord& r);
void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

std::string utc_timestamp();

} // namespace vaead
