#include "vaead/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <random>

#include "vaead/errors.hpp"
#include "vaead/image_io.hpp"

namespace vaead {

std::string_view to_string(DatasetKind kind) {
    return kind == DatasetKind::mvtec ? "mvtec" : "miad";
}

DatasetKind dataset_kind_from_string(std::string_view name) {
    if (name == "mvtec") return DatasetKind::mvtec;
    if (name == "miad") return DatasetKind::miad;
    throw ConfigError("unknown dataset kind '" + std::string(name) + "' (expected mvtec or miad)");
}

const std::vector<std::string>& miad_surface_categories() {
    static const std::vector<std::string> names{
        "electrical_insulator", "metal_welding", "photovoltaic_module", "wind_turbine"};
    return names;
}

namespace {

bool is_image_file(const fs::directory_entry& entry) {
    if (!entry.is_regular_file()) return false;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (is_image_file(entry)) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory()) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool is_allowed_category(DatasetKind kind, const std::string& category) {
    if (kind == DatasetKind::mvtec) return true;
    const auto& allowed = miad_surface_categories();
    return std::find(allowed.begin(), allowed.end(), category) != allowed.end();
}

} // namespace

DatasetIndex scan_dataset(const fs::path& root, DatasetKind kind, const std::string& category,
                          int64_t target_image_size) {
    if (target_image_size <= 0) {
        throw ParameterError("target_image_size must be positive");
    }
    const fs::path category_dir = root / category;
    if (!fs::is_directory(category_dir)) {
        throw CategoryNotFound(category_dir.string());
    }
    if (!is_allowed_category(kind, category)) {
        throw CategoryNotFound(category + " is not one of the MiAD surface-anomaly classes");
    }

    DatasetIndex index;
    index.kind = kind;
    index.root = root;
    index.category = category;
    index.target_image_size = target_image_size;

    for (auto& path : sorted_images(category_dir / "train" / "good")) {
        index.train_entries.push_back({std::move(path), std::string(kGoodDefect), std::nullopt});
    }

    for (const auto& defect_dir : sorted_subdirs(category_dir / "test")) {
        const std::string defect = defect_dir.filename().string();
        for (auto& path : sorted_images(defect_dir)) {
            DatasetEntry entry{path, defect, std::nullopt};
            if (defect != kGoodDefect) {
                fs::path mask = category_dir / "ground_truth" / defect / (path.stem().string() + "_mask.png");
                if (!fs::is_regular_file(mask)) {
                    throw MaskMissing(path.string() + " has no mask at " + mask.string());
                }
                entry.mask_path = std::move(mask);
            }
            index.test_entries.push_back(std::move(entry));
        }
    }
    std::sort(index.test_entries.begin(), index.test_entries.end(),
              [](const DatasetEntry& a, const DatasetEntry& b) { return a.image_path < b.image_path; });
    return index;
}

std::vector<std::string> list_categories(const fs::path& root, DatasetKind kind) {
    std::vector<std::string> out;
    for (const auto& dir : sorted_subdirs(root)) {
        std::string name = dir.filename().string();
        if (fs::is_directory(dir / "train" / "good") && is_allowed_category(kind, name)) {
            out.push_back(std::move(name));
        }
    }
    return out;
}

ImageSample load_sample(const DatasetEntry& entry, int64_t target_image_size) {
    if (target_image_size <= 0) {
        throw ParameterError("target_image_size must be positive");
    }
    torch::Tensor image = read_rgb_image(entry.image_path);

    ImageSample sample;
    sample.source_path = entry.image_path.string();
    if (entry.mask_path) {
        torch::Tensor mask = read_gray_image(*entry.mask_path);
        if (mask.size(0) != image.size(1) || mask.size(1) != image.size(2)) {
            throw LayoutError(entry.mask_path->string() + " is " + std::to_string(mask.size(1)) + "x" +
                              std::to_string(mask.size(0)) + " but the image is " +
                              std::to_string(image.size(2)) + "x" + std::to_string(image.size(1)));
        }
        mask = resize_nearest(mask, target_image_size, target_image_size).gt(0.5).to(torch::kFloat32);
        if (mask.sum().item<double>() > 0) {
            sample.label = Label::anomalous;
        }
        sample.mask = std::move(mask);
    }
    sample.pixels = resize_bilinear(image, target_image_size, target_image_size).clamp_(0.0, 1.0);
    return sample;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 gen(seed);
    for (std::size_t i = n; i > 1; --i) {
        // Unbiased draw from [0, i) by rejection.
        const uint64_t bound = i;
        const uint64_t limit = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % bound;
        uint64_t r;
        do {
            r = gen();
        } while (r >= limit);
        std::swap(order[i - 1], order[static_cast<std::size_t>(r % bound)]);
    }
    return order;
}

BatchIterator::BatchIterator(const DatasetIndex& index, Split split, int64_t batch_size, bool shuffle,
                             uint64_t seed)
    : index_(&index), split_(split), batch_size_(batch_size) {
    if (batch_size < 1) {
        throw ParameterError("batch_size must be >= 1");
    }
    const std::size_t n = index.entries(split).size();
    if (n == 0) {
        throw EmptySplit(index.category + (split == Split::train ? " train" : " test") + " split is empty");
    }
    if (shuffle) {
        order_ = seeded_permutation(n, seed);
    } else {
        order_.resize(n);
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    }
}

std::size_t BatchIterator::num_batches() const {
    const auto b = static_cast<std::size_t>(batch_size_);
    return (order_.size() + b - 1) / b;
}

std::optional<Batch> BatchIterator::next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
    const auto& entries = index_->entries(split_);

    Batch batch;
    std::vector<torch::Tensor> pixels;
    pixels.reserve(end - cursor_);
    for (std::size_t i = cursor_; i < end; ++i) {
        ImageSample sample = load_sample(entries[order_[i]], index_->target_image_size);
        pixels.push_back(std::move(sample.pixels));
        batch.samples.push_back({sample.label, std::move(sample.mask), std::move(sample.source_path)});
    }
    batch.pixels = torch::stack(pixels);
    cursor_ = end;
    return batch;
}

} // namespace vaead
