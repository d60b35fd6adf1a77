#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

namespace vaead {

namespace fs = std::filesystem;

enum class DatasetKind { mvtec, miad };

std::string_view to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(std::string_view name);

// The four MiAD surface-anomaly classes; the logical-anomaly classes are not indexed.
const std::vector<std::string>& miad_surface_categories();

enum class Split { train, test };

inline constexpr std::string_view kGoodDefect = "good";

struct DatasetEntry {
    fs::path image_path;
    std::string defect_type{kGoodDefect};
    std::optional<fs::path> mask_path;
};

// Immutable view of one category directory.
//
//   <root>/<category>/train/good/*.png
//   <root>/<category>/test/<defect>/*.png
//   <root>/<category>/ground_truth/<defect>/<stem>_mask.png
struct DatasetIndex {
    DatasetKind kind = DatasetKind::mvtec;
    fs::path root;
    std::string category;
    std::vector<DatasetEntry> train_entries;
    std::vector<DatasetEntry> test_entries;
    int64_t target_image_size = 224;

    const std::vector<DatasetEntry>& entries(Split split) const {
        return split == Split::train ? train_entries : test_entries;
    }
};

// Builds the index with entries sorted lexicographically by path.
// Throws CategoryNotFound, MaskMissing.
DatasetIndex scan_dataset(const fs::path& root, DatasetKind kind, const std::string& category,
                          int64_t target_image_size = 224);

// Category directories under root that look like datasets of the given kind
// (have a train/good subtree), sorted.
std::vector<std::string> list_categories(const fs::path& root, DatasetKind kind);

enum class Label { normal, anomalous };

struct ImageSample {
    torch::Tensor pixels;               // float32, 3 x S x S, values in [0,1]
    std::optional<torch::Tensor> mask;  // float32, S x S, values in {0,1}
    Label label = Label::normal;
    std::string source_path;
};

// Decodes, resizes (bilinear for pixels, nearest + 0.5 threshold for masks).
// Throws DecodeError, LayoutError.
ImageSample load_sample(const DatasetEntry& entry, int64_t target_image_size);

struct SampleMeta {
    Label label = Label::normal;
    std::optional<torch::Tensor> mask;
    std::string source_path;
};

struct Batch {
    torch::Tensor pixels;  // B x 3 x S x S
    std::vector<SampleMeta> samples;

    int64_t size() const { return static_cast<int64_t>(samples.size()); }
};

// Seed-determined Fisher-Yates permutation of [0, n). Independent of the
// standard library's distribution implementations.
std::vector<std::size_t> seeded_permutation(std::size_t n, uint64_t seed);

// Streams ceil(N / batch_size) batches over one split. The visit order is a pure
// function of (shuffle, seed); loading happens lazily in next().
class BatchIterator {
public:
    BatchIterator(const DatasetIndex& index, Split split, int64_t batch_size, bool shuffle,
                  uint64_t seed);

    std::optional<Batch> next();

    std::size_t num_batches() const;
    const std::vector<std::size_t>& order() const { return order_; }

private:
    const DatasetIndex* index_;
    Split split_;
    int64_t batch_size_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

} // namespace vaead
