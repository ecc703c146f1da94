// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/models/decoders.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "geotune/error.hpp"

namespace geotune::models {

namespace F = torch::nn::functional;

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::Segmentation: return "segmentation";
        case TaskKind::Regression: return "regression";
        case TaskKind::Classification: return "classification";
    }
    return "segmentation";
}

TaskKind parse_task_kind(const std::string& text) {
    if (text == "segmentation") return TaskKind::Segmentation;
    if (text == "regression") return TaskKind::Regression;
    if (text == "classification") return TaskKind::Classification;
    fail(ErrorCode::InvalidArgument,
         "unknown task kind '" + text + "' (expected segmentation, regression or classification)");
}

namespace {

torch::nn::Sequential conv_norm_relu(int64_t in, int64_t out, int64_t kernel) {
    return torch::nn::Sequential(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).padding(kernel / 2).bias(false)),
        torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::gcd(out, int64_t{8}), out)), torch::nn::ReLU());
}

torch::Tensor resize(const torch::Tensor& x, int64_t height, int64_t width) {
    if (x.size(-2) == height && x.size(-1) == width) {
        return x;
    }
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{height, width})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

bool halves(int64_t larger, int64_t smaller) { return smaller == larger / 2 || smaller == (larger + 1) / 2; }

}  // namespace

// ---------------------------------------------------------------------------
// PyramidFusionDecoder

std::vector<std::size_t> PyramidFusionDecoder::finest_first(const std::vector<std::array<int64_t, 3>>& shapes) const {
    if (shapes.size() != num_levels_) {
        fail(ErrorCode::PyramidShapeError, "pyramid_fusion expects " + std::to_string(num_levels_) +
                                               " grid inputs, got " + std::to_string(shapes.size()));
    }
    std::vector<std::size_t> order(shapes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return shapes[a][1] > shapes[b][1]; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        const auto& big = shapes[order[i - 1]];
        const auto& small = shapes[order[i]];
        if (!(halves(big[1], small[1]) && halves(big[2], small[2])) || small[1] >= big[1]) {
            std::ostringstream msg;
            msg << "pyramid_fusion levels must halve in size level to level; got";
            for (auto j : order) {
                msg << " " << shapes[j][1] << "x" << shapes[j][2];
            }
            fail(ErrorCode::PyramidShapeError, msg.str());
        }
    }
    return order;
}

PyramidFusionDecoder::PyramidFusionDecoder(const std::vector<FeatureSpec>& in, int64_t channels,
                                           std::vector<int64_t> pool_sizes, std::size_t num_levels)
    : channels_(channels), num_levels_(num_levels), pool_sizes_(std::move(pool_sizes)) {
    if (num_levels_ < 2) {
        fail(ErrorCode::InvalidArgument, "pyramid_fusion needs at least 2 levels");
    }
    if (channels_ <= 0) {
        fail(ErrorCode::InvalidArgument, "pyramid_fusion channels must be positive");
    }
    std::vector<std::array<int64_t, 3>> shapes;
    for (const auto& spec : in) {
        if (spec.form != FeatureForm::Grid) {
            fail(ErrorCode::PyramidShapeError, "pyramid_fusion expects grid-form inputs, got " + describe(in));
        }
        shapes.push_back({spec.channels, spec.height, spec.width});
    }
    const auto order = finest_first(shapes);
    const auto deepest = in[order.back()];

    auto pool_list = register_module("ppm", torch::nn::ModuleList());
    for (auto size : pool_sizes_) {
        torch::nn::Sequential branch(torch::nn::AdaptiveAvgPool2d(torch::nn::AdaptiveAvgPool2dOptions({size, size})),
                                     torch::nn::Conv2d(torch::nn::Conv2dOptions(deepest.channels, channels_, 1)),
                                     torch::nn::ReLU());
        pool_list->push_back(branch);
        pool_convs_.push_back(branch);
    }
    const auto pooled_channels = deepest.channels + static_cast<int64_t>(pool_sizes_.size()) * channels_;
    bottleneck_ = register_module("bottleneck", conv_norm_relu(pooled_channels, channels_, 3));

    auto lateral_list = register_module("laterals", torch::nn::ModuleList());
    auto fpn_list = register_module("fpn", torch::nn::ModuleList());
    for (std::size_t level = 0; level + 1 < num_levels_; ++level) {
        auto lateral = conv_norm_relu(in[order[level]].channels, channels_, 1);
        auto fpn = conv_norm_relu(channels_, channels_, 3);
        lateral_list->push_back(lateral);
        fpn_list->push_back(fpn);
        laterals_.push_back(lateral);
        fpn_convs_.push_back(fpn);
    }
    fuse_ = register_module("fuse", conv_norm_relu(static_cast<int64_t>(num_levels_) * channels_, channels_, 3));

    const auto& finest = in[order.front()];
    output_ = {FeatureForm::Grid, channels_, finest.height, finest.width, 1};
}

FeatureMap PyramidFusionDecoder::forward(const FeatureMapSet& in) {
    std::vector<std::array<int64_t, 3>> shapes;
    for (const auto& item : in.items) {
        if (item.form != FeatureForm::Grid || item.data.dim() != 4) {
            fail(ErrorCode::PyramidShapeError, "pyramid_fusion expects grid-form inputs, got " + describe(in));
        }
        shapes.push_back({item.data.size(1), item.data.size(2), item.data.size(3)});
    }
    const auto order = finest_first(shapes);
    std::vector<torch::Tensor> feats;
    for (auto i : order) {
        feats.push_back(in[i].data);
    }

    const auto& deep = feats.back();
    std::vector<torch::Tensor> pooled{deep};
    for (auto& branch : pool_convs_) {
        pooled.push_back(resize(branch->forward(deep), deep.size(2), deep.size(3)));
    }

    std::vector<torch::Tensor> lats(num_levels_);
    lats.back() = bottleneck_->forward(torch::cat(pooled, 1));
    for (std::size_t level = 0; level + 1 < num_levels_; ++level) {
        lats[level] = laterals_[level]->forward(feats[level]);
    }
    for (std::size_t level = num_levels_ - 1; level-- > 0;) {
        lats[level] = lats[level] + resize(lats[level + 1], lats[level].size(2), lats[level].size(3));
    }

    const auto height = lats[0].size(2);
    const auto width = lats[0].size(3);
    std::vector<torch::Tensor> outs;
    for (std::size_t level = 0; level < num_levels_; ++level) {
        auto x = level + 1 < num_levels_ ? fpn_convs_[level]->forward(lats[level]) : lats[level];
        outs.push_back(resize(x, height, width));
    }
    return {fuse_->forward(torch::cat(outs, 1)), FeatureForm::Grid};
}

// ---------------------------------------------------------------------------
// FcnDecoder

FcnDecoder::FcnDecoder(const std::vector<FeatureSpec>& in, int64_t channels, int64_t num_convs) {
    if (in.empty() || in.back().form != FeatureForm::Grid) {
        fail(ErrorCode::NoGridInput, "fcn decoder needs a grid-form last item, got " + describe(in));
    }
    if (channels <= 0 || num_convs < 0) {
        fail(ErrorCode::InvalidArgument, "fcn decoder needs positive channels and non-negative num_convs");
    }
    const auto& last = in.back();
    blocks_ = torch::nn::Sequential();
    if (num_convs == 0) {
        blocks_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(last.channels, channels, 1)));
    }
    for (int64_t i = 0; i < num_convs; ++i) {
        blocks_->push_back(
            torch::nn::Conv2d(torch::nn::Conv2dOptions(i == 0 ? last.channels : channels, channels, 3).padding(1)));
        blocks_->push_back(torch::nn::ReLU());
    }
    blocks_ = register_module("blocks", blocks_);
    output_ = {FeatureForm::Grid, channels, last.height, last.width, 1};
}

FeatureMap FcnDecoder::forward(const FeatureMapSet& in) {
    if (in.empty() || in.items.back().form != FeatureForm::Grid) {
        fail(ErrorCode::NoGridInput, "fcn decoder needs a grid-form last item, got " + describe(in));
    }
    return {blocks_->forward(in.items.back().data), FeatureForm::Grid};
}

// ---------------------------------------------------------------------------
// IdentityDecoder

IdentityDecoder::IdentityDecoder(const std::vector<FeatureSpec>& in) {
    if (in.size() != 1) {
        fail(ErrorCode::LengthMismatch, "identity decoder expects exactly 1 input, got " + std::to_string(in.size()));
    }
    output_ = in.front();
}

FeatureMap IdentityDecoder::forward(const FeatureMapSet& in) {
    if (in.size() != 1) {
        fail(ErrorCode::LengthMismatch, "identity decoder expects exactly 1 input, got " + std::to_string(in.size()));
    }
    return in[0];
}

// ---------------------------------------------------------------------------
// Head

void HeadSpec::validate() const {
    if (kind != TaskKind::Regression && num_classes < 2) {
        fail(ErrorCode::InvalidArgument, to_string(kind) + " head needs num_classes >= 2");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        fail(ErrorCode::InvalidArgument, "head dropout must lie in [0, 1)");
    }
}

Head::Head(HeadSpec spec, const FeatureSpec& in) : spec_(spec) {
    spec_.validate();
    dropout_ = register_module("dropout", torch::nn::Dropout(spec_.dropout));
    if (spec_.kind == TaskKind::Classification) {
        linear_ = register_module("linear", torch::nn::Linear(in.channels, spec_.num_classes));
    } else {
        if (in.form != FeatureForm::Grid) {
            fail(ErrorCode::KindMismatch, to_string(spec_.kind) + " head needs grid-form input, got " + describe(in));
        }
        conv_ = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in.channels, spec_.out_channels(), 1)));
    }
}

torch::Tensor Head::forward(const FeatureMap& x, std::array<int64_t, 2> target_hw) {
    if (spec_.kind == TaskKind::Classification) {
        torch::Tensor pooled;
        if (x.form == FeatureForm::Grid && x.data.dim() == 4) {
            pooled = x.data.mean({2, 3});
        } else if (x.form == FeatureForm::Token && x.data.dim() == 3) {
            pooled = x.data.mean(1);
        } else {
            fail(ErrorCode::KindMismatch, "classification head got malformed input");
        }
        return linear_(dropout_(pooled));
    }
    if (x.form != FeatureForm::Grid || x.data.dim() != 4) {
        fail(ErrorCode::KindMismatch, to_string(spec_.kind) + " head needs grid-form input");
    }
    return resize(conv_(dropout_(x.data)), target_hw[0], target_hw[1]);
}

}  // namespace geotune::models
