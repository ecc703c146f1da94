// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "geotune/models/decoders.hpp"
#include "geotune/random.hpp"

namespace geotune::data {

namespace fs = std::filesystem;

enum class LabelKind { None, ClassIndex, Mask, Target };

/// One example: image (T, C, H, W) float32 plus an optional label that is a
/// scalar class index, an int64 mask (H, W) or a float target (H, W).
struct RasterSample {
    torch::Tensor image;
    torch::Tensor label;
    LabelKind label_kind = LabelKind::None;
    std::vector<std::string> bands;
    std::string id;
};

struct AugmentFlags {
    bool hflip = false;
    bool vflip = false;
    bool rot90 = false;

    bool any() const { return hflip || vflip || rot90; }
    bool operator==(const AugmentFlags&) const = default;
};

/// Band layout of stored rasters and what to emit from them.
struct BandConfig {
    /// Names of the bands of one time frame, in file order.
    std::vector<std::string> dataset_bands;
    /// Bands to emit, in order; empty means all dataset bands.
    std::vector<std::string> output_bands;
    /// Expected frame count; 0 infers it from the stored band count.
    int64_t num_frames = 0;
    /// Per output band; empty disables normalization.
    std::vector<double> means;
    std::vector<double> stds;

    void validate() const;
    const std::vector<std::string>& emitted_bands() const {
        return output_bands.empty() ? dataset_bands : output_bands;
    }
};

struct PixelwiseDataConfig {
    fs::path images_dir;
    /// Empty when labels are stored next to the images.
    fs::path labels_dir;
    std::string image_grep = "*_img.bsq";
    std::string label_grep = "*_mask.bsq";
    /// Optional per-split id lists; splits without one use `<dir>/<split>/`.
    std::map<std::string, fs::path> split_files;
    BandConfig bands;
    LabelKind label_kind = LabelKind::Mask;
    int64_t ignore_index = -1;
    /// When positive, mask values outside [0, num_classes) u {ignore_index} are rejected.
    int64_t num_classes = 0;
};

/// Text matched by the single '*' of `pattern` in `filename`, if it matches.
std::optional<std::string> match_grep(const std::string& pattern, const std::string& filename);

struct ClassificationIndex {
    /// split -> (path, class index), sorted by class then file name.
    std::map<std::string, std::vector<std::pair<fs::path, int64_t>>> splits;
    std::vector<std::string> class_names;
    std::vector<std::string> warnings;
};

/// Indexes root/{train,val,test}/<class>/*. Class indices come from the
/// sorted union of train and val class folders; a test class outside that
/// union is an error. Empty class folders are kept and reported as warnings.
ClassificationIndex index_classification_folder(const fs::path& root);

/// (image, label) pairs for `split`, matched on the id captured by each grep
/// pattern's wildcard and sorted by id.
std::vector<std::pair<fs::path, fs::path>> pair_pixelwise(const PixelwiseDataConfig& cfg, const std::string& split);

/// Reads ids from a split file (one per line, blank lines ignored).
std::vector<std::string> read_split_file(const fs::path& path);

/// Loads a raster of T*|dataset_bands| bands as (T, C_out, H, W), frame-major,
/// reorders to the emitted bands and normalizes per band.
torch::Tensor load_image(const fs::path& path, const BandConfig& bands);

/// Inverse of the unstacking: (T, C, H, W) -> (T*C, H, W), frame-major.
torch::Tensor stack_frames(const torch::Tensor& image);

RasterSample load_sample(const fs::path& image_path, const PixelwiseDataConfig& cfg,
                         const std::optional<fs::path>& label_path = std::nullopt);

/// Independent hflip (p=.5), vflip (p=.5) and rot90 k~U{0..3}, applied
/// identically to the image and any pixel-wise label.
RasterSample augment(RasterSample sample, const AugmentFlags& flags, Rng& rng);

class Dataset {
public:
    virtual ~Dataset() = default;
    virtual std::size_t size() const = 0;
    virtual RasterSample get(std::size_t index) const = 0;
};

/// Fully materialized dataset; samples are loaded once at construction.
class InMemoryDataset : public Dataset {
public:
    explicit InMemoryDataset(std::vector<RasterSample> samples) : samples_(std::move(samples)) {}

    std::size_t size() const override { return samples_.size(); }
    RasterSample get(std::size_t index) const override { return samples_.at(index); }

private:
    std::vector<RasterSample> samples_;
};

std::shared_ptr<Dataset> make_pixelwise_dataset(const PixelwiseDataConfig& cfg, const std::string& split);
std::shared_ptr<Dataset> make_classification_dataset(const ClassificationIndex& index, const std::string& split,
                                                     const BandConfig& bands);

struct Batch {
    torch::Tensor images;  // (B, T, C, H, W)
    torch::Tensor labels;  // (B, H, W) int64 | (B, H, W) float | (B) int64
    std::vector<std::string> ids;
};

Batch collate(const std::vector<RasterSample>& samples);

/// Split datasets plus batching. Training batches are shuffled and augmented
/// with streams seeded by seed + worker_index + epoch.
class DataModule {
public:
    DataModule(std::map<std::string, std::shared_ptr<Dataset>> splits, int64_t batch_size, AugmentFlags augment,
               uint64_t seed);

    bool has_split(const std::string& split) const;
    std::size_t split_size(const std::string& split) const;
    const Dataset& dataset(const std::string& split) const;

    std::vector<Batch> train_batches(int64_t epoch, int64_t worker_index = 0) const;
    std::vector<Batch> eval_batches(const std::string& split) const;

    int64_t batch_size() const noexcept { return batch_size_; }
    uint64_t seed() const noexcept { return seed_; }
    void set_seed(uint64_t seed) { seed_ = seed; }

private:
    std::map<std::string, std::shared_ptr<Dataset>> splits_;
    int64_t batch_size_;
    AugmentFlags augment_;
    uint64_t seed_;
};

enum class DatasetKind { Pixelwise, ClassificationFolder };

/// Everything the data section of a run config describes.
struct DataConfig {
    DatasetKind kind = DatasetKind::Pixelwise;
    /// ImageFolder root (classification).
    fs::path root;
    PixelwiseDataConfig pixelwise;
    /// Optional folder of images (matched with image_grep) for predict.
    fs::path predict_dir;
    AugmentFlags augment;
    int64_t batch_size = 8;
};

/// Builds the train/val/test datasets a config describes (missing optional
/// splits are skipped; train and val are required).
DataModule make_data_module(const DataConfig& cfg, models::TaskKind task, int64_t num_classes,
                            int64_t ignore_index, uint64_t seed);

/// Image paths to run inference on: predict_dir when set, else the test split.
std::vector<fs::path> predict_inputs(const DataConfig& cfg);

/// Sample identifier of an image file (grep wildcard capture or file stem).
std::string sample_id(const fs::path& image_path, const std::string& image_grep);

}  // namespace geotune::data
