// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace geotune::testing {

TempDir::TempDir(const std::string& tag) {
    std::string pattern = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (::mkdtemp(pattern.data()) == nullptr) {
        throw std::runtime_error("mkdtemp failed for " + pattern);
    }
    path_ = pattern;
}

TempDir::~TempDir() {
    if (std::getenv("GEOTUNE_KEEP_TMP") == nullptr) {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

data::BlobFixtureOptions small_blob_options() {
    data::BlobFixtureOptions o;
    o.count = 40;
    o.size = 32;
    o.train = 24;
    o.val = 8;
    o.seed = 11;
    return o;
}

std::string blob_config_text(const fs::path& fixture_dir, int64_t img_size, int64_t max_epochs, uint64_t seed) {
    std::ostringstream o;
    o << "task: {kind: segmentation, num_classes: 2, ignore_index: -1}\n"
      << "model:\n"
      << "  backbone: {name: toy_conv_pyramid, args: {stage_channels: [8, 16, 16, 16], img_size: " << img_size
      << "}}\n"
      << "  decoder: {name: pyramid_fusion, args: {channels: 16, pool_sizes: [1]}}\n"
      << "data:\n"
      << "  kind: pixelwise\n"
      << "  images_dir: " << (fixture_dir / "data").string() << "\n"
      << "  split_files:\n"
      << "    train: " << (fixture_dir / "splits/train.txt").string() << "\n"
      << "    val: " << (fixture_dir / "splits/val.txt").string() << "\n"
      << "    test: " << (fixture_dir / "splits/test.txt").string() << "\n"
      << "  dataset_bands: [blue, green, red, nir, swir1, swir2]\n"
      << "  means: [0.09, 0.11, 0.12, 0.24, 0.19, 0.13]\n"
      << "  stds: [0.09, 0.09, 0.09, 0.13, 0.13, 0.11]\n"
      << "  augment: {hflip: true, vflip: true, rot90: true}\n"
      << "  batch_size: 8\n"
      << "optimizer: {lr: 0.003, weight_decay: 0.0001}\n"
      << "scheduler: {patience: 3}\n"
      << "trainer: {max_epochs: " << max_epochs << ", early_stop_patience: " << std::max<int64_t>(1, std::min<int64_t>(8, max_epochs - 1))
      << ", seed: " << seed << "}\n";
    return o.str();
}

fs::path source_path(const std::string& relative) { return fs::path(GEOTUNE_SOURCE_DIR) / relative; }

}  // namespace geotune::testing
