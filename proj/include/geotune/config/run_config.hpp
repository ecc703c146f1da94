// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include <yaml-cpp/yaml.h>

#include "geotune/data/datasets.hpp"
#include "geotune/engine/trainer.hpp"
#include "geotune/models/factory.hpp"

namespace geotune::config {

namespace fs = std::filesystem;

/// One training run, as described by a config document:
///
///   task:      {kind, num_classes, ignore_index, monitor}
///   model:     {backbone, bands, pretrained, necks, decoder, head, freeze_backbone}
///   data:      {kind, root, images_dir, labels_dir, image_grep, label_grep, split_files,
///               dataset_bands, output_bands, num_frames, means, stds, augment, batch_size, predict_dir}
///   optimizer: {name: adamw, lr, weight_decay}
///   scheduler: {name: reduce_on_plateau, factor, patience, threshold, min_lr}
///   trainer:   {max_epochs, early_stop_patience, seed, artifacts_dir, tile, stride}
///
/// Components are `{name, args}` mappings (a bare name is shorthand for empty args).
struct RunConfig {
    engine::TaskConfig task;
    models::ModelBuildSpec model;
    data::DataConfig data;
    fs::path artifacts_dir = "runs";
};

/// Validates a parsed document against the schema. Relative paths resolve
/// against `base_dir`.
RunConfig parse_config_node(const YAML::Node& root, const fs::path& base_dir = fs::current_path());

RunConfig parse_config(const std::string& text, const fs::path& base_dir = fs::current_path());

/// Reads a config file; relative paths resolve against its directory.
RunConfig parse_config_file(const fs::path& path);

/// Canonical document: every field present, fixed key order, absolute paths.
std::string dump_config(const RunConfig& config);

bool operator==(const RunConfig& a, const RunConfig& b);

models::Model build_model(const RunConfig& config);
data::DataModule build_data(const RunConfig& config);

/// Builds model and data, fits, and writes artifacts (including the
/// canonical config echo) to `config.artifacts_dir`.
engine::RunRecord fit_from_config(const RunConfig& config,
                                  std::function<void(const engine::EpochRecord&)> on_epoch = {});

}  // namespace geotune::config
