// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/engine/metrics.hpp"

#include <cmath>

#include "geotune/error.hpp"

namespace geotune::engine {

std::map<std::string, double> MetricReport::flat() const {
    std::map<std::string, double> out;
    switch (kind) {
        case TaskKind::Segmentation:
            out["miou"] = miou;
            out["accuracy"] = accuracy;
            for (std::size_t c = 0; c < per_class_iou.size(); ++c) {
                if (per_class_iou[c]) {
                    out["iou_" + std::to_string(c)] = *per_class_iou[c];
                }
            }
            break;
        case TaskKind::Classification:
            out["accuracy"] = accuracy;
            break;
        case TaskKind::Regression:
            out["rmse"] = rmse;
            out["mae"] = mae;
            break;
    }
    return out;
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j = flat();
    if (kind == TaskKind::Segmentation) {
        auto ious = nlohmann::json::array();
        for (const auto& v : per_class_iou) {
            ious.push_back(v ? nlohmann::json(*v) : nlohmann::json());
        }
        j["per_class_iou"] = ious;
    }
    j["count"] = count;
    j["empty"] = empty;
    return j;
}

std::vector<std::string> metric_names(TaskKind kind, int64_t num_classes) {
    switch (kind) {
        case TaskKind::Segmentation: {
            std::vector<std::string> names{"miou", "accuracy"};
            for (int64_t c = 0; c < num_classes; ++c) {
                names.push_back("iou_" + std::to_string(c));
            }
            return names;
        }
        case TaskKind::Classification:
            return {"accuracy"};
        case TaskKind::Regression:
            return {"rmse", "mae"};
    }
    return {};
}

torch::Tensor confusion_matrix(const torch::Tensor& pred, const torch::Tensor& target, int64_t num_classes,
                               int64_t ignore_index) {
    if (pred.sizes() != target.sizes()) {
        fail(ErrorCode::ShapeMismatch, "prediction and target shapes differ");
    }
    if (num_classes < 1) {
        fail(ErrorCode::InvalidArgument, "num_classes must be >= 1");
    }
    auto p = pred.reshape(-1).to(torch::kLong);
    auto t = target.reshape(-1).to(torch::kLong);
    auto keep = t != ignore_index;
    p = p.masked_select(keep);
    t = t.masked_select(keep);
    if (p.numel() > 0 && ((p < 0).any().item<bool>() || (p >= num_classes).any().item<bool>() ||
                          (t < 0).any().item<bool>() || (t >= num_classes).any().item<bool>())) {
        fail(ErrorCode::IndexOutOfRange, "class index outside [0, " + std::to_string(num_classes) + ")");
    }
    return torch::bincount(t * num_classes + p, {}, num_classes * num_classes).view({num_classes, num_classes});
}

MetricReport report_from_confusion(const torch::Tensor& confusion) {
    auto cm = confusion.to(torch::kLong).contiguous();
    const auto k = cm.size(0);
    auto a = cm.accessor<int64_t, 2>();
    MetricReport r;
    r.kind = TaskKind::Segmentation;
    int64_t total = 0;
    int64_t diag = 0;
    for (int64_t i = 0; i < k; ++i) {
        for (int64_t j = 0; j < k; ++j) {
            total += a[i][j];
        }
        diag += a[i][i];
    }
    r.count = total;
    r.empty = total == 0;
    r.per_class_iou.assign(static_cast<std::size_t>(k), std::nullopt);
    if (r.empty) {
        return r;
    }
    double sum = 0.0;
    int64_t present = 0;
    for (int64_t c = 0; c < k; ++c) {
        int64_t row = 0;
        int64_t col = 0;
        for (int64_t j = 0; j < k; ++j) {
            row += a[c][j];
            col += a[j][c];
        }
        const auto tp = a[c][c];
        const auto uni = row + col - tp;
        if (uni > 0) {
            const double iou = static_cast<double>(tp) / static_cast<double>(uni);
            r.per_class_iou[static_cast<std::size_t>(c)] = iou;
            sum += iou;
            ++present;
        }
    }
    r.miou = present > 0 ? sum / static_cast<double>(present) : 0.0;
    r.accuracy = static_cast<double>(diag) / static_cast<double>(total);
    return r;
}

MetricReport compute_iou(const torch::Tensor& pred, const torch::Tensor& target, int64_t num_classes,
                         int64_t ignore_index) {
    return report_from_confusion(confusion_matrix(pred, target, num_classes, ignore_index));
}

MetricAccumulator::MetricAccumulator(TaskKind kind, int64_t num_classes, int64_t ignore_index)
    : kind_(kind), num_classes_(num_classes), ignore_index_(ignore_index) {
    if (kind_ == TaskKind::Segmentation) {
        confusion_ = torch::zeros({num_classes_, num_classes_}, torch::kLong);
    }
}

void MetricAccumulator::add(const torch::Tensor& output, const torch::Tensor& labels) {
    torch::NoGradGuard no_grad;
    switch (kind_) {
        case TaskKind::Segmentation:
            confusion_ += confusion_matrix(output.argmax(1), labels, num_classes_, ignore_index_);
            break;
        case TaskKind::Classification:
            correct_ += (output.argmax(1) == labels.to(torch::kLong)).sum().item<int64_t>();
            count_ += labels.size(0);
            break;
        case TaskKind::Regression: {
            auto diff = (output.select(1, 0).to(torch::kFloat64) - labels.to(torch::kFloat64)).reshape(-1);
            sq_err_ += diff.square().sum().item<double>();
            abs_err_ += diff.abs().sum().item<double>();
            count_ += diff.numel();
            break;
        }
    }
}

MetricReport MetricAccumulator::report() const {
    if (kind_ == TaskKind::Segmentation) {
        return report_from_confusion(confusion_);
    }
    MetricReport r;
    r.kind = kind_;
    r.count = count_;
    r.empty = count_ == 0;
    if (r.empty) {
        return r;
    }
    const auto n = static_cast<double>(count_);
    if (kind_ == TaskKind::Classification) {
        r.accuracy = static_cast<double>(correct_) / n;
    } else {
        r.rmse = std::sqrt(sq_err_ / n);
        r.mae = abs_err_ / n;
    }
    return r;
}

}  // namespace geotune::engine
