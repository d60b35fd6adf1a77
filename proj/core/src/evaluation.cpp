#include "vaead/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "vaead/errors.hpp"
#include "vaead/image_io.hpp"

namespace vaead {

double roc_auc(std::span<const double> scores, std::span<const uint8_t> labels) {
    if (scores.size() != labels.size()) {
        throw ShapeError("roc_auc: " + std::to_string(scores.size()) + " scores but " + std::to_string(labels.size()) +
                         " labels");
    }
    const std::size_t n = scores.size();
    int64_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::isnan(scores[i])) throw NumericError("roc_auc: NaN score at index " + std::to_string(i));
        positives += labels[i] ? 1 : 0;
    }
    const int64_t negatives = static_cast<int64_t>(n) - positives;
    if (positives == 0 || negatives == 0) {
        throw DegenerateLabels("roc_auc needs both classes (" + std::to_string(positives) + " positive, " +
                               std::to_string(negatives) + " negative)");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the positive rank sum, with tied groups sharing their midrank.
    int64_t rank_sum_x2 = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const auto midrank_x2 = static_cast<int64_t>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) rank_sum_x2 += midrank_x2;
        }
        i = j;
    }
    const int64_t u_x2 = rank_sum_x2 - positives * (positives + 1);
    return static_cast<double>(u_x2) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double pixel_rocauc(const AnomalyMap& map, const torch::Tensor& mask) {
    if (mask.dim() != 2 || mask.size(0) != map.height || mask.size(1) != map.width) {
        throw ShapeError("mask does not match the " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                         " anomaly map");
    }
    auto binary = mask.detach().to(torch::kCPU).gt(0.5).to(torch::kUInt8).contiguous();
    std::span<const uint8_t> labels(binary.data_ptr<uint8_t>(), static_cast<std::size_t>(binary.numel()));
    return roc_auc(map.scores, labels);
}

std::string_view to_string(AucMode mode) {
    return mode == AucMode::per_image ? "per_image" : "pooled";
}

MeanStd population_mean_std(std::span<const double> values) {
    if (values.empty()) return {};
    const auto n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / n)};
}

ScoredImage score_image(VaeModelImpl& model, const torch::Tensor& pixels, const SsmConfig& cfg) {
    torch::NoGradGuard no_grad;
    auto dtype = model.parameters().empty() ? torch::kFloat32 : model.parameters().front().scalar_type();
    auto x = pixels.to(dtype).unsqueeze(0);
    ForwardPass pass = model.reconstruct(x);
    auto recon = pass.reconstruction[0];

    ScoredImage out;
    out.reconstruction = recon;
    out.ssm = ssm_map(pixels, recon, cfg);
    out.mad = mad_map(pass.latent.select(0), model.prior(), pixels.size(1), pixels.size(2));
    out.fused = fuse_maps(out.ssm, out.mad);
    return out;
}

namespace {

std::string export_stem(const DatasetEntry& entry) {
    return entry.defect_type + "_" + entry.image_path.stem().string();
}

} // namespace

EvalResult evaluate_category(const MapProducer& producer, const DatasetIndex& index, const ScorerConfig& cfg,
                             const std::string& model_id) {
    EvalResult result;
    result.category = index.category;
    result.model_id = model_id;
    result.mode = cfg.mode;

    std::vector<double> pooled_scores;
    std::vector<uint8_t> pooled_labels;

    for (const DatasetEntry& entry : index.test_entries) {
        const ImageSample sample = load_sample(entry, index.target_image_size);
        if (cfg.mode == AucMode::pooled) {
            const AnomalyMap map = producer(sample);
            pooled_scores.insert(pooled_scores.end(), map.scores.begin(), map.scores.end());
            if (sample.mask) {
                auto m = sample.mask->gt(0.5).to(torch::kUInt8).contiguous();
                pooled_labels.insert(pooled_labels.end(), m.data_ptr<uint8_t>(), m.data_ptr<uint8_t>() + m.numel());
            } else {
                pooled_labels.insert(pooled_labels.end(), map.scores.size(), 0);
            }
            ++result.images_evaluated;
            continue;
        }
        if (sample.label != Label::anomalous) {
            ++result.images_skipped;
            continue;
        }
        const AnomalyMap map = producer(sample);
        double auc = 0;
        try {
            auc = pixel_rocauc(map, *sample.mask);
        } catch (const DegenerateLabels&) {
            ++result.images_skipped;  // mask covers the whole image
            continue;
        }
        if (cfg.export_dir) {
            write_map_f32(*cfg.export_dir / (export_stem(entry) + ".f32"), map);
            write_png(*cfg.export_dir / (export_stem(entry) + "_mask.png"), *sample.mask);
        }
        result.per_image_auc.push_back(auc);
        ++result.images_evaluated;
    }

    if (cfg.mode == AucMode::pooled) {
        if (pooled_scores.empty()) throw EmptyEvaluation(index.category + ": no test images");
        try {
            result.per_image_auc = {roc_auc(pooled_scores, pooled_labels)};
        } catch (const DegenerateLabels& e) {
            throw EmptyEvaluation(index.category + ": pooled pixels have a single class");
        }
        result.mean = result.per_image_auc.front();
        result.std = 0;
        result.images_evaluated = 1;
        return result;
    }

    if (result.per_image_auc.empty()) {
        throw EmptyEvaluation(index.category + ": no anomalous test image with a usable mask");
    }
    const MeanStd ms = population_mean_std(result.per_image_auc);
    result.mean = ms.mean;
    result.std = ms.std;
    return result;
}

EvalResult evaluate_category(VaeModelImpl& model, const DatasetIndex& index, const ScorerConfig& cfg,
                             const std::string& model_id) {
    if (index.target_image_size != model.config().image_size()) {
        throw ShapeError("dataset is loaded at " + std::to_string(index.target_image_size) +
                         " px but the model expects " + std::to_string(model.config().image_size()));
    }
    model.eval();
    MapProducer producer = [&](const ImageSample& sample) { return score_image(model, sample.pixels, cfg.ssm).fused; };
    return evaluate_category(producer, index, cfg, model_id);
}

EvalResult evaluate_exported_maps(const std::filesystem::path& export_dir, const std::string& category,
                                  const std::string& model_id) {
    std::vector<std::filesystem::path> maps;
    for (const auto& entry : std::filesystem::directory_iterator(export_dir)) {
        if (entry.path().extension() == ".f32") maps.push_back(entry.path());
    }
    std::sort(maps.begin(), maps.end());

    EvalResult result;
    result.category = category;
    result.model_id = model_id;
    for (const auto& path : maps) {
        const AnomalyMap map = read_map_f32(path);
        const auto mask_path = export_dir / (path.stem().string() + "_mask.png");
        const torch::Tensor mask = read_gray_image(mask_path);
        result.per_image_auc.push_back(pixel_rocauc(map, mask));
    }
    if (result.per_image_auc.empty()) throw EmptyEvaluation(export_dir.string() + " has no exported maps");
    result.images_evaluated = static_cast<int64_t>(result.per_image_auc.size());
    const MeanStd ms = population_mean_std(result.per_image_auc);
    result.mean = ms.mean;
    result.std = ms.std;
    return result;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string_view to_string(ReportGroup group) {
    switch (group) {
        case ReportGroup::texture: return "texture";
        case ReportGroup::non_texture: return "non_texture";
        case ReportGroup::structure: return "structure";
    }
    return "texture";
}

ReportGroup category_group(DatasetKind layout, std::string_view category) {
    if (layout == DatasetKind::miad) return ReportGroup::structure;
    static const std::set<std::string, std::less<>> texture{"carpet", "grid", "leather", "tile", "wood", "hazelnut"};
    return texture.count(category) ? ReportGroup::texture : ReportGroup::non_texture;
}

std::optional<std::string> ReportTable::best_model(const std::map<std::string, ReportCell>& cells) {
    std::optional<std::string> best;
    double best_mean = -1;
    for (const auto& [model, cell] : cells) {
        if (cell.mean > best_mean) {
            best_mean = cell.mean;
            best = model;
        }
    }
    return best;
}

std::optional<std::string> ReportTable::best_model(const std::map<std::string, MeanStd>& cells) {
    std::optional<std::string> best;
    double best_mean = -1;
    for (const auto& [model, cell] : cells) {
        if (cell.mean > best_mean) {
            best_mean = cell.mean;
            best = model;
        }
    }
    return best;
}

std::string format_cell(double mean, double std) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", mean, std);
    return buf;
}

namespace {

std::size_t display_width(const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++w;
    }
    return w;
}

std::string pad(const std::string& s, std::size_t width) {
    const std::size_t w = display_width(s);
    return w >= width ? s : s + std::string(width - w, ' ');
}

std::string group_title(ReportGroup g) {
    switch (g) {
        case ReportGroup::texture: return "Texture";
        case ReportGroup::non_texture: return "Non-Texture";
        case ReportGroup::structure: return "Structure";
    }
    return "";
}

} // namespace

RenderedReport render_report(const std::vector<EvalResult>& results, DatasetKind layout) {
    if (results.empty()) throw EmptyEvaluation("render_report needs at least one result");

    RenderedReport out;
    ReportTable& table = out.table;
    table.layout = layout;
    table.mode = results.front().mode;

    std::set<std::pair<std::string, std::string>> seen;
    std::vector<std::string> category_order;
    for (const EvalResult& r : results) {
        if (!seen.emplace(r.category, r.model_id).second) {
            throw DuplicateResult(r.category + " / " + r.model_id);
        }
        if (std::find(table.models.begin(), table.models.end(), r.model_id) == table.models.end()) {
            table.models.push_back(r.model_id);
        }
        if (std::find(category_order.begin(), category_order.end(), r.category) == category_order.end()) {
            category_order.push_back(r.category);
        }
    }

    for (ReportGroup group : {ReportGroup::texture, ReportGroup::non_texture, ReportGroup::structure}) {
        std::map<std::string, std::vector<double>> means, stds;
        bool any = false;
        for (const std::string& category : category_order) {
            if (category_group(layout, category) != group) continue;
            ReportRow row{group, category, {}};
            for (const EvalResult& r : results) {
                if (r.category != category) continue;
                row.cells[r.model_id] = {r.mean, r.std, r.images_evaluated, r.images_skipped};
                means[r.model_id].push_back(r.mean);
                stds[r.model_id].push_back(r.std);
            }
            table.rows.push_back(std::move(row));
            any = true;
        }
        if (!any) continue;
        GroupAverage avg{group, {}};
        for (const auto& [model, m] : means) {
            avg.cells[model] = {population_mean_std(m).mean, population_mean_std(stds[model]).mean};
        }
        table.averages.push_back(std::move(avg));
    }

    // CSV
    out.csv = "group,category,model,mean,std,n_images,n_skipped\n";
    char line[512];
    for (const ReportRow& row : table.rows) {
        for (const std::string& model : table.models) {
            auto it = row.cells.find(model);
            if (it == row.cells.end()) continue;
            std::snprintf(line, sizeof(line), "%s,%s,%s,%.6f,%.6f,%lld,%lld\n", std::string(to_string(row.group)).c_str(),
                          row.category.c_str(), model.c_str(), it->second.mean, it->second.std,
                          static_cast<long long>(it->second.n_images), static_cast<long long>(it->second.n_skipped));
            out.csv += line;
        }
    }

    // Aligned text table
    std::vector<std::vector<std::string>> lines;
    lines.push_back({"Category"});
    for (const auto& m : table.models) lines.back().push_back(m);

    auto cell_text = [](const auto& cells, const std::string& model, const std::optional<std::string>& best) {
        auto it = cells.find(model);
        if (it == cells.end()) return std::string(kEmptyCell);
        std::string s = format_cell(it->second.mean, it->second.std);
        if (best && *best == model) s += " *";
        return s;
    };

    std::vector<std::size_t> separators;
    for (const GroupAverage& avg : table.averages) {
        separators.push_back(lines.size());
        lines.push_back({group_title(avg.group)});
        for (const ReportRow& row : table.rows) {
            if (row.group != avg.group) continue;
            const auto best = ReportTable::best_model(row.cells);
            lines.push_back({row.category});
            for (const auto& m : table.models) lines.back().push_back(cell_text(row.cells, m, best));
        }
        const auto best = ReportTable::best_model(avg.cells);
        lines.push_back({"Average"});
        for (const auto& m : table.models) lines.back().push_back(cell_text(avg.cells, m, best));
    }

    std::vector<std::size_t> widths(table.models.size() + 1, 0);
    for (const auto& l : lines) {
        if (l.size() == 1 && &l != &lines.front()) continue;
        for (std::size_t c = 0; c < l.size(); ++c) widths[c] = std::max(widths[c], display_width(l[c]));
    }
    std::size_t total_width = 0;
    for (auto w : widths) total_width += w + 3;

    const std::string rule(total_width, '-');
    out.text = rule + "\n";
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& l = lines[i];
        if (std::find(separators.begin(), separators.end(), i) != separators.end()) {
            out.text += rule + "\n" + l[0] + "\n";
            continue;
        }
        std::string s;
        for (std::size_t c = 0; c < l.size(); ++c) s += pad(l[c], widths[c]) + (c + 1 < l.size() ? " | " : "");
        while (!s.empty() && s.back() == ' ') s.pop_back();
        out.text += s + "\n";
    }
    out.text += rule + "\n";
    out.text += "# metric: MAD * SSM pixel ROCAUC (" + std::string(to_string(table.mode)) +
                "); spread: population std (divide by N); * marks the best model per row\n";
    return out;
}

} // namespace vaead
