// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "geotune/models/decoders.hpp"

namespace geotune::engine {

using models::TaskKind;

struct MetricReport {
    TaskKind kind = TaskKind::Segmentation;
    /// Segmentation: IoU per class, nullopt when the class has zero union.
    std::vector<std::optional<double>> per_class_iou;
    double miou = 0.0;
    /// Pixel accuracy (segmentation) or sample accuracy (classification).
    double accuracy = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
    /// Number of scored pixels or samples.
    int64_t count = 0;
    /// True when nothing was scored (e.g. every pixel ignored).
    bool empty = true;

    /// Flat metric map; undefined IoUs are omitted.
    std::map<std::string, double> flat() const;
    nlohmann::json to_json() const;
};

/// Metric names a task reports, in column order.
std::vector<std::string> metric_names(TaskKind kind, int64_t num_classes);

/// (K, K) int64 counts, rows = target class, columns = predicted class.
/// Pixels whose target equals ignore_index are skipped.
torch::Tensor confusion_matrix(const torch::Tensor& pred, const torch::Tensor& target, int64_t num_classes,
                               int64_t ignore_index);

MetricReport report_from_confusion(const torch::Tensor& confusion);

/// IoU_c = TP / (TP + FP + FN) over non-ignored pixels; mIoU averages the
/// classes with non-zero union.
MetricReport compute_iou(const torch::Tensor& pred, const torch::Tensor& target, int64_t num_classes,
                         int64_t ignore_index);

/// Streams batches of predictions into one report.
class MetricAccumulator {
public:
    MetricAccumulator(TaskKind kind, int64_t num_classes, int64_t ignore_index);

    /// `output` is the raw model output for the batch.
    void add(const torch::Tensor& output, const torch::Tensor& labels);
    MetricReport report() const;

private:
    TaskKind kind_;
    int64_t num_classes_;
    int64_t ignore_index_;
    torch::Tensor confusion_;
    double sq_err_ = 0.0;
    double abs_err_ = 0.0;
    int64_t correct_ = 0;
    int64_t count_ = 0;
};

}  // namespace geotune::engine
