// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "geotune/data/datasets.hpp"
#include "geotune/engine/metrics.hpp"
#include "geotune/engine/schedule.hpp"
#include "geotune/models/factory.hpp"

namespace geotune::engine {

namespace fs = std::filesystem;

struct TaskConfig {
    TaskKind kind = TaskKind::Segmentation;
    int64_t num_classes = 2;
    int64_t ignore_index = -1;
    int64_t max_epochs = 100;
    int64_t early_stop_patience = 20;
    std::string monitor = "val_loss";
    double lr = 1e-4;
    double weight_decay = 0.05;
    PlateauConfig plateau;
    uint64_t seed = 0;
    /// Sliding-window inference for test/predict; 0 runs the model directly.
    int64_t tile = 0;
    /// 0 means stride = tile.
    int64_t stride = 0;

    /// Throws CrossFieldError on inconsistent fields.
    void validate() const;
    /// Monitor names a task can report: train_loss, val_loss, val_<metric>.
    std::vector<std::string> monitor_choices() const;
};

struct EpochRecord {
    int64_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    std::map<std::string, double> val_metrics;
    /// Learning rate used during the epoch.
    double lr = 0.0;
};

struct RunRecord {
    std::string status = "completed";
    std::string error;
    std::string config_snapshot;
    std::vector<EpochRecord> history;
    int64_t best_epoch = 0;
    double best_value = 0.0;
    std::string monitor;
    fs::path checkpoint;
    std::optional<MetricReport> test_metrics;
    std::optional<double> test_loss;
    double wall_time_s = 0.0;
    uint64_t seed = 0;

    bool ok() const { return status == "completed"; }
    const EpochRecord& best() const;
    nlohmann::json to_json() const;
};

struct FitOptions {
    /// Artifact directory; empty disables all file output.
    fs::path run_dir;
    /// Canonical config text written to config.yaml.
    std::string config_snapshot;
    /// Called after every epoch.
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Per-pixel or per-sample loss of one batch, averaged over the scored
/// elements (ignore_index pixels excluded).
torch::Tensor task_loss(const torch::Tensor& output, const torch::Tensor& labels, const TaskConfig& task);

struct Evaluation {
    double loss = 0.0;
    MetricReport report;
};

/// Exact element-weighted loss and metrics over the batches of `split`.
Evaluation evaluate(models::EncoderDecoderModel& model, const data::DataModule& data, const std::string& split,
                    const TaskConfig& task);

/// AdamW training with reduce-on-plateau and early stopping. The weights of
/// the best epoch are left in `model` and scored on the test split if present.
RunRecord fit(models::EncoderDecoderModel& model, const data::DataModule& data, const TaskConfig& task,
              const FitOptions& options = {});

/// Forward for one (1, T, C, h, w) input returning (1, K, h, w).
using ForwardFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// Tile origins covering [0, length): multiples of stride, with the last
/// tile shifted inward to end at `length`.
std::vector<int64_t> tile_origins(int64_t length, int64_t tile, int64_t stride);

/// Averages tile logits over a (T, C, H, W) image, accumulating tiles in
/// row-major order. Images smaller than the tile are reflect-padded, predicted
/// once and cropped.
torch::Tensor sliding_window_predict(const ForwardFn& forward, const torch::Tensor& image, int64_t tile,
                                     int64_t stride);
torch::Tensor sliding_window_predict(models::EncoderDecoderModel& model, const torch::Tensor& image, int64_t tile,
                                     int64_t stride);

/// Model output for one (T, C, H, W) image honouring the task's tiling.
torch::Tensor infer(models::EncoderDecoderModel& model, const torch::Tensor& image, const TaskConfig& task);

MetricReport test(models::EncoderDecoderModel& model, const data::DataModule& data, const TaskConfig& task,
                  const std::string& split = "test");

/// Writes `<id>_pred.bsq` per input (class mask as int16 or float target);
/// classification writes `predictions.csv`. Returns the written files.
std::vector<fs::path> predict(models::EncoderDecoderModel& model, const std::vector<fs::path>& inputs,
                              const data::DataConfig& data, const TaskConfig& task, const fs::path& out_dir);

/// CSV header and row formatting of the epoch history.
std::vector<std::string> history_columns(const TaskConfig& task);
std::string history_row(const EpochRecord& record, const std::vector<std::string>& columns);

}  // namespace geotune::engine
