// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/data/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "geotune/data/raster.hpp"
#include "geotune/error.hpp"
#include "geotune/strings.hpp"

namespace geotune::data {

void BandConfig::validate() const {
    if (dataset_bands.empty()) {
        fail(ErrorCode::InvalidArgument, "dataset_bands must name at least one band");
    }
    std::set<std::string> seen;
    for (const auto& b : dataset_bands) {
        if (!seen.insert(b).second) {
            fail(ErrorCode::DuplicateBand, "band '" + b + "' is declared twice in dataset_bands");
        }
    }
    std::set<std::string> out_seen;
    for (const auto& b : output_bands) {
        if (!seen.count(b)) {
            auto hint = nearest_names(b, dataset_bands, 1);
            fail(ErrorCode::UnknownOutputBand, "output band '" + b + "' is not in dataset_bands" +
                                                   (hint.empty() ? "" : " (did you mean '" + hint.front() + "'?)"));
        }
        if (!out_seen.insert(b).second) {
            fail(ErrorCode::DuplicateBand, "band '" + b + "' is listed twice in output_bands");
        }
    }
    const auto n = emitted_bands().size();
    if (means.size() != stds.size() || (!means.empty() && means.size() != n)) {
        fail(ErrorCode::LengthMismatch, "means and stds need one entry per output band (" + std::to_string(n) + ")");
    }
    for (double s : stds) {
        if (!(s > 0.0)) {
            fail(ErrorCode::InvalidArgument, "normalization stds must be positive");
        }
    }
    if (num_frames < 0) {
        fail(ErrorCode::InvalidArgument, "num_frames must be >= 0");
    }
}

std::optional<std::string> match_grep(const std::string& pattern, const std::string& filename) {
    const auto star = pattern.find('*');
    if (star == std::string::npos || pattern.find('*', star + 1) != std::string::npos) {
        fail(ErrorCode::InvalidPattern, "pattern '" + pattern + "' must contain exactly one '*'");
    }
    const auto prefix = std::string_view(pattern).substr(0, star);
    const auto suffix = std::string_view(pattern).substr(star + 1);
    if (filename.size() < prefix.size() + suffix.size() || !filename.starts_with(prefix) ||
        !filename.ends_with(suffix)) {
        return std::nullopt;
    }
    return filename.substr(prefix.size(), filename.size() - prefix.size() - suffix.size());
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (directories ? e.is_directory() : e.is_regular_file()) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

// id -> path for every file under `dir` (recursive) matching `pattern`.
std::map<std::string, fs::path> collect_ids(const fs::path& dir, const std::string& pattern) {
    std::map<std::string, fs::path> out;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto id = match_grep(pattern, f.filename().string());
        if (!id) {
            continue;
        }
        auto [it, inserted] = out.emplace(*id, f);
        if (!inserted) {
            fail(ErrorCode::DuplicateId, "id '" + *id + "' matches both " + it->second.string() + " and " + f.string());
        }
    }
    return out;
}

}  // namespace

ClassificationIndex index_classification_folder(const fs::path& root) {
    ClassificationIndex index;
    const std::vector<std::string> split_names{"train", "val", "test"};
    std::map<std::string, std::vector<fs::path>> class_dirs;
    for (const auto& split : split_names) {
        const auto dir = root / split;
        if (!fs::is_directory(dir)) {
            fail(ErrorCode::MissingSplit, "classification root " + root.string() + " has no '" + split + "' folder");
        }
        class_dirs[split] = sorted_entries(dir, true);
    }
    std::set<std::string> known;
    for (const auto& split : {"train", "val"}) {
        for (const auto& d : class_dirs[split]) {
            known.insert(d.filename().string());
        }
    }
    std::vector<std::string> unknown;
    for (const auto& d : class_dirs["test"]) {
        if (!known.count(d.filename().string())) {
            unknown.push_back(d.filename().string());
        }
    }
    if (!unknown.empty()) {
        fail(ErrorCode::ClassMismatchAcrossSplits,
             "test split has classes absent from train/val: " + join(unknown, ", "));
    }
    index.class_names.assign(known.begin(), known.end());
    std::map<std::string, int64_t> class_index;
    for (std::size_t i = 0; i < index.class_names.size(); ++i) {
        class_index[index.class_names[i]] = static_cast<int64_t>(i);
    }
    for (const auto& split : split_names) {
        auto& items = index.splits[split];
        for (const auto& d : class_dirs[split]) {
            const auto name = d.filename().string();
            std::size_t count = 0;
            for (const auto& f : sorted_entries(d, false)) {
                if (can_read_raster(f)) {
                    items.emplace_back(f, class_index.at(name));
                    ++count;
                }
            }
            if (count == 0) {
                index.warnings.push_back("class '" + name + "' is empty in split '" + split + "'");
            }
        }
    }
    return index;
}

std::vector<std::string> read_split_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::MissingSplit, "cannot open split file " + path.string());
    }
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            ids.push_back(line);
        }
    }
    return ids;
}

std::vector<std::pair<fs::path, fs::path>> pair_pixelwise(const PixelwiseDataConfig& cfg, const std::string& split) {
    match_grep(cfg.image_grep, "");
    match_grep(cfg.label_grep, "");
    const auto labels_root = cfg.labels_dir.empty() ? cfg.images_dir : cfg.labels_dir;
    const auto split_file = cfg.split_files.find(split);
    const bool by_file = split_file != cfg.split_files.end();
    const auto image_dir = by_file ? cfg.images_dir : cfg.images_dir / split;
    const auto label_dir = by_file ? labels_root : labels_root / split;
    for (const auto& dir : {image_dir, label_dir}) {
        if (!fs::is_directory(dir)) {
            fail(ErrorCode::MissingSplit, "no folder " + dir.string() + " for split '" + split + "'");
        }
    }
    auto images = collect_ids(image_dir, cfg.image_grep);
    auto labels = collect_ids(label_dir, cfg.label_grep);
    if (images.empty()) {
        fail(ErrorCode::DataEmpty, "'" + cfg.image_grep + "' matches no file under " + image_dir.string());
    }
    if (labels.empty()) {
        fail(ErrorCode::DataEmpty, "'" + cfg.label_grep + "' matches no file under " + label_dir.string());
    }

    std::vector<std::string> ids;
    if (by_file) {
        auto listed = read_split_file(split_file->second);
        std::set<std::string> uniq;
        std::vector<std::string> missing;
        for (const auto& id : listed) {
            if (!uniq.insert(id).second) {
                fail(ErrorCode::DuplicateId, "id '" + id + "' is listed twice in " + split_file->second.string());
            }
            if (!images.count(id)) {
                missing.push_back(id);
            }
        }
        if (!missing.empty()) {
            fail(ErrorCode::UnpairedImage, "split file " + split_file->second.string() +
                                               " lists ids without an image: " + join(missing, ", "));
        }
        ids.assign(uniq.begin(), uniq.end());
    } else {
        for (const auto& [id, _] : images) {
            ids.push_back(id);
        }
    }

    std::vector<std::string> unpaired;
    std::vector<std::pair<fs::path, fs::path>> out;
    for (const auto& id : ids) {
        auto label = labels.find(id);
        if (label == labels.end()) {
            unpaired.push_back(id);
        } else {
            out.emplace_back(images.at(id), label->second);
        }
    }
    if (!unpaired.empty()) {
        fail(ErrorCode::UnpairedImage, "images without a label in split '" + split + "': " + join(unpaired, ", "));
    }
    return out;
}

torch::Tensor load_image(const fs::path& path, const BandConfig& bands) {
    auto raw = read_raster(path).to(torch::kFloat32);
    const auto stored = raw.size(0);
    const auto per_frame = static_cast<int64_t>(bands.dataset_bands.size());
    if (per_frame == 0 || stored % per_frame != 0) {
        fail(ErrorCode::BandCountIndivisible, path.string() + " stores " + std::to_string(stored) +
                                                  " bands, not a multiple of the " + std::to_string(per_frame) +
                                                  " declared dataset bands");
    }
    const auto frames = stored / per_frame;
    if (bands.num_frames > 0 && frames != bands.num_frames) {
        fail(ErrorCode::BandCountIndivisible, path.string() + " holds " + std::to_string(frames) +
                                                  " frames, expected " + std::to_string(bands.num_frames));
    }
    auto image = raw.view({frames, per_frame, raw.size(1), raw.size(2)});
    if (!bands.output_bands.empty()) {
        std::vector<int64_t> order;
        for (const auto& b : bands.output_bands) {
            auto it = std::find(bands.dataset_bands.begin(), bands.dataset_bands.end(), b);
            if (it == bands.dataset_bands.end()) {
                fail(ErrorCode::UnknownOutputBand, "output band '" + b + "' is not in dataset_bands");
            }
            order.push_back(it - bands.dataset_bands.begin());
        }
        image = image.index_select(1, torch::tensor(order, torch::kLong));
    }
    image = image.contiguous();
    if (!bands.means.empty()) {
        auto mean = torch::tensor(bands.means, torch::kFloat64).to(torch::kFloat32).view({1, -1, 1, 1});
        auto std = torch::tensor(bands.stds, torch::kFloat64).to(torch::kFloat32).view({1, -1, 1, 1});
        image = (image - mean) / std;
    }
    return image;
}

torch::Tensor stack_frames(const torch::Tensor& image) {
    if (image.dim() != 4) {
        fail(ErrorCode::ShapeMismatch, "expected (T, C, H, W), got " + std::to_string(image.dim()) + " dims");
    }
    return image.reshape({image.size(0) * image.size(1), image.size(2), image.size(3)});
}

RasterSample load_sample(const fs::path& image_path, const PixelwiseDataConfig& cfg,
                         const std::optional<fs::path>& label_path) {
    RasterSample s;
    s.image = load_image(image_path, cfg.bands);
    s.bands = cfg.bands.emitted_bands();
    s.id = sample_id(image_path, cfg.image_grep);
    if (!label_path || cfg.label_kind == LabelKind::None) {
        return s;
    }
    auto raw = read_raster(*label_path);
    if (raw.size(0) != 1 || raw.size(1) != s.image.size(2) || raw.size(2) != s.image.size(3)) {
        fail(ErrorCode::ShapeMismatch, "label " + label_path->string() + " must be a single band of the image size");
    }
    if (cfg.label_kind == LabelKind::Mask) {
        s.label = raw[0].to(torch::kLong);
        if (cfg.num_classes > 0) {
            auto bad = ((s.label < 0) | (s.label >= cfg.num_classes)) & (s.label != cfg.ignore_index);
            if (bad.any().item<bool>()) {
                fail(ErrorCode::InvalidMaskValue, label_path->string() + " has values outside [0, " +
                                                      std::to_string(cfg.num_classes) + ") and ignore_index " +
                                                      std::to_string(cfg.ignore_index));
            }
        }
    } else {
        s.label = raw[0].to(torch::kFloat32);
    }
    s.label_kind = cfg.label_kind;
    return s;
}

RasterSample augment(RasterSample sample, const AugmentFlags& flags, Rng& rng) {
    const bool pixel_label = sample.label.defined() && sample.label.dim() == 2;
    auto apply = [&](auto&& op) {
        sample.image = op(sample.image);
        if (pixel_label) {
            sample.label = op(sample.label);
        }
    };
    if (flags.hflip && rng.below(2) == 1) {
        apply([](const torch::Tensor& t) { return t.flip({-1}); });
    }
    if (flags.vflip && rng.below(2) == 1) {
        apply([](const torch::Tensor& t) { return t.flip({-2}); });
    }
    if (flags.rot90) {
        // Non-square rasters only take half turns so batch shapes stay fixed.
        const bool square = sample.image.size(-1) == sample.image.size(-2);
        const auto k = square ? static_cast<int64_t>(rng.below(4)) : 2 * static_cast<int64_t>(rng.below(2));
        if (k != 0) {
            apply([k](const torch::Tensor& t) { return torch::rot90(t, k, {-2, -1}).contiguous(); });
        }
    }
    return sample;
}

std::shared_ptr<Dataset> make_pixelwise_dataset(const PixelwiseDataConfig& cfg, const std::string& split) {
    cfg.bands.validate();
    std::vector<RasterSample> samples;
    for (const auto& [image, label] : pair_pixelwise(cfg, split)) {
        samples.push_back(load_sample(image, cfg, label));
    }
    return std::make_shared<InMemoryDataset>(std::move(samples));
}

std::shared_ptr<Dataset> make_classification_dataset(const ClassificationIndex& index, const std::string& split,
                                                     const BandConfig& bands) {
    bands.validate();
    auto it = index.splits.find(split);
    if (it == index.splits.end()) {
        fail(ErrorCode::MissingSplit, "no split '" + split + "' in classification index");
    }
    std::vector<RasterSample> samples;
    for (const auto& [path, cls] : it->second) {
        RasterSample s;
        s.image = load_image(path, bands);
        s.label = torch::tensor(cls, torch::kLong);
        s.label_kind = LabelKind::ClassIndex;
        s.bands = bands.emitted_bands();
        s.id = path.stem().string();
        samples.push_back(std::move(s));
    }
    return std::make_shared<InMemoryDataset>(std::move(samples));
}

Batch collate(const std::vector<RasterSample>& samples) {
    if (samples.empty()) {
        fail(ErrorCode::DataEmpty, "cannot collate an empty batch");
    }
    std::vector<torch::Tensor> images;
    std::vector<torch::Tensor> labels;
    Batch batch;
    for (const auto& s : samples) {
        if (!images.empty() && s.image.sizes() != images.front().sizes()) {
            fail(ErrorCode::ShapeMismatch, "sample '" + s.id + "' differs in shape from the rest of its batch");
        }
        images.push_back(s.image);
        if (s.label.defined()) {
            labels.push_back(s.label);
        }
        batch.ids.push_back(s.id);
    }
    batch.images = torch::stack(images);
    if (labels.size() == samples.size()) {
        batch.labels = torch::stack(labels);
    }
    return batch;
}

DataModule::DataModule(std::map<std::string, std::shared_ptr<Dataset>> splits, int64_t batch_size,
                       AugmentFlags augment, uint64_t seed)
    : splits_(std::move(splits)), batch_size_(batch_size), augment_(augment), seed_(seed) {
    if (batch_size_ < 1) {
        fail(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    }
}

bool DataModule::has_split(const std::string& split) const { return splits_.count(split) > 0; }

std::size_t DataModule::split_size(const std::string& split) const {
    return has_split(split) ? splits_.at(split)->size() : 0;
}

const Dataset& DataModule::dataset(const std::string& split) const {
    auto it = splits_.find(split);
    if (it == splits_.end()) {
        fail(ErrorCode::MissingSplit, "data module has no '" + split + "' split");
    }
    return *it->second;
}

std::vector<Batch> DataModule::train_batches(int64_t epoch, int64_t worker_index) const {
    const auto& ds = dataset("train");
    const auto stream = seed_ + static_cast<uint64_t>(worker_index) + static_cast<uint64_t>(epoch);
    Rng shuffle(derive_seed(stream, "shuffle"));
    Rng aug(derive_seed(stream, "augment"));
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    std::vector<Batch> out;
    std::vector<RasterSample> pending;
    for (auto idx : order) {
        auto s = ds.get(idx);
        pending.push_back(augment_.any() ? augment(std::move(s), augment_, aug) : std::move(s));
        if (static_cast<int64_t>(pending.size()) == batch_size_) {
            out.push_back(collate(pending));
            pending.clear();
        }
    }
    if (!pending.empty()) {
        out.push_back(collate(pending));
    }
    return out;
}

std::vector<Batch> DataModule::eval_batches(const std::string& split) const {
    const auto& ds = dataset(split);
    std::vector<Batch> out;
    std::vector<RasterSample> pending;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        pending.push_back(ds.get(i));
        if (static_cast<int64_t>(pending.size()) == batch_size_) {
            out.push_back(collate(pending));
            pending.clear();
        }
    }
    if (!pending.empty()) {
        out.push_back(collate(pending));
    }
    return out;
}

DataModule make_data_module(const DataConfig& cfg, models::TaskKind task, int64_t num_classes, int64_t ignore_index,
                            uint64_t seed) {
    std::map<std::string, std::shared_ptr<Dataset>> splits;
    if (cfg.kind == DatasetKind::ClassificationFolder) {
        auto index = index_classification_folder(cfg.root);
        if (num_classes > 0 && static_cast<int64_t>(index.class_names.size()) != num_classes) {
            fail(ErrorCode::ClassMismatchAcrossSplits, "folder has " + std::to_string(index.class_names.size()) +
                                                           " classes, config declares " + std::to_string(num_classes));
        }
        for (const auto& split : {"train", "val", "test"}) {
            splits[split] = make_classification_dataset(index, split, cfg.pixelwise.bands);
        }
    } else {
        auto px = cfg.pixelwise;
        px.label_kind = task == models::TaskKind::Regression ? LabelKind::Target : LabelKind::Mask;
        px.num_classes = task == models::TaskKind::Segmentation ? num_classes : 0;
        px.ignore_index = ignore_index;
        for (const auto& split : {"train", "val", "test"}) {
            const bool optional = std::string(split) == "test";
            const bool present = px.split_files.count(split) || fs::is_directory(px.images_dir / split);
            if (optional && !present) {
                continue;
            }
            splits[split] = make_pixelwise_dataset(px, split);
        }
    }
    for (const auto& [name, ds] : splits) {
        if (name != "test" && ds->size() == 0) {
            fail(ErrorCode::DataEmpty, "split '" + name + "' has no samples");
        }
    }
    return DataModule(std::move(splits), cfg.batch_size, cfg.augment, seed);
}

std::vector<fs::path> predict_inputs(const DataConfig& cfg) {
    std::vector<fs::path> out;
    if (!cfg.predict_dir.empty()) {
        for (const auto& [id, path] : collect_ids(cfg.predict_dir, cfg.pixelwise.image_grep)) {
            out.push_back(path);
        }
        if (out.empty()) {
            fail(ErrorCode::DataEmpty, "'" + cfg.pixelwise.image_grep + "' matches no file under " +
                                           cfg.predict_dir.string());
        }
        return out;
    }
    if (cfg.kind == DatasetKind::ClassificationFolder) {
        for (const auto& [path, _] : index_classification_folder(cfg.root).splits.at("test")) {
            out.push_back(path);
        }
    } else {
        for (const auto& [image, _] : pair_pixelwise(cfg.pixelwise, "test")) {
            out.push_back(image);
        }
    }
    return out;
}

std::string sample_id(const fs::path& image_path, const std::string& image_grep) {
    const auto name = image_path.filename().string();
    if (image_grep.find('*') != std::string::npos) {
        if (auto id = match_grep(image_grep, name)) {
            return *id;
        }
    }
    return image_path.stem().string();
}

}  // namespace geotune::data
