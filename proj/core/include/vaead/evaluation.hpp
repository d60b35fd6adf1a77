#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "vaead/anomaly_maps.hpp"
#include "vaead/dataset.hpp"
#include "vaead/models.hpp"

namespace vaead {

// Mann-Whitney estimate of the ROC AUC: P(pos > neg) + 1/2 P(tie), one sort,
// midranks for ties. Throws DegenerateLabels if either class is absent and
// ShapeError on a length mismatch.
double roc_auc(std::span<const double> scores, std::span<const uint8_t> labels);

// roc_auc over every pixel, labels taken from the mask (> 0.5 is positive).
double pixel_rocauc(const AnomalyMap& map, const torch::Tensor& mask);

enum class AucMode { per_image, pooled };

std::string_view to_string(AucMode mode);

struct EvalResult {
    std::string category;
    std::string model_id;
    std::vector<double> per_image_auc;
    double mean = 0;
    double std = 0;  // population (divide-by-N)
    int64_t images_evaluated = 0;
    int64_t images_skipped = 0;
    AucMode mode = AucMode::per_image;
};

struct MeanStd {
    double mean = 0;
    double std = 0;
};

MeanStd population_mean_std(std::span<const double> values);

struct ScorerConfig {
    SsmConfig ssm;
    AucMode mode = AucMode::per_image;
    // When set, every anomalous image's fused map is written here as
    // <defect>_<stem>.f32 next to a <defect>_<stem>_mask.png copy.
    std::optional<std::filesystem::path> export_dir;
};

struct ScoredImage {
    AnomalyMap ssm;
    AnomalyMap mad;
    AnomalyMap fused;
    torch::Tensor reconstruction;  // C x S x S
};

// Encode, decode the posterior mean, and build SSM, MAD and fused maps for
// one loaded image. The model is used as-is (callers put it in eval mode).
ScoredImage score_image(VaeModelImpl& model, const torch::Tensor& pixels, const SsmConfig& cfg);

// Anything that turns a loaded sample into a fused anomaly map.
using MapProducer = std::function<AnomalyMap(const ImageSample&)>;

// Per-image pixel AUC over the anomalous test images (defect-free ones are
// counted in images_skipped). Throws EmptyEvaluation.
EvalResult evaluate_category(const MapProducer& producer, const DatasetIndex& index,
                             const ScorerConfig& cfg, const std::string& model_id);

EvalResult evaluate_category(VaeModelImpl& model, const DatasetIndex& index, const ScorerConfig& cfg,
                             const std::string& model_id);

// Recomputes an EvalResult from the files written through ScorerConfig::export_dir.
EvalResult evaluate_exported_maps(const std::filesystem::path& export_dir, const std::string& category,
                                  const std::string& model_id);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class ReportGroup { texture, non_texture, structure };

std::string_view to_string(ReportGroup group);

// MVTec: texture = carpet, grid, leather, tile, wood, hazelnut; everything else
// non_texture. MiAD: structure.
ReportGroup category_group(DatasetKind layout, std::string_view category);

struct ReportCell {
    double mean = 0;
    double std = 0;
    int64_t n_images = 0;
    int64_t n_skipped = 0;
};

struct ReportRow {
    ReportGroup group;
    std::string category;
    std::map<std::string, ReportCell> cells;  // by model id
};

struct GroupAverage {
    ReportGroup group;
    // Mean of member-category means and mean of member-category stds.
    std::map<std::string, MeanStd> cells;
};

struct ReportTable {
    DatasetKind layout = DatasetKind::mvtec;
    std::vector<std::string> models;  // column order
    std::vector<ReportRow> rows;       // grouped, then by category order of first appearance
    std::vector<GroupAverage> averages;
    AucMode mode = AucMode::per_image;

    // Highest-mean model of a row, if any cell is present.
    static std::optional<std::string> best_model(const std::map<std::string, ReportCell>& cells);
    static std::optional<std::string> best_model(const std::map<std::string, MeanStd>& cells);
};

struct RenderedReport {
    ReportTable table;
    std::string csv;   // group,category,model,mean,std,n_images,n_skipped
    std::string text;  // aligned table, best cell per row marked with '*'
};

// "m.mm ± s.ss"
std::string format_cell(double mean, double std);
inline constexpr std::string_view kEmptyCell = "—";

// Throws DuplicateResult, EmptyEvaluation (no results).
RenderedReport render_report(const std::vector<EvalResult>& results, DatasetKind layout);

} // namespace vaead
