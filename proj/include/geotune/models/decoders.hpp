// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "geotune/models/features.hpp"

namespace geotune::models {

enum class TaskKind { Segmentation, Regression, Classification };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& text);

class Decoder : public torch::nn::Module {
public:
    virtual FeatureMap forward(const FeatureMapSet& in) = 0;
    virtual FeatureSpec output_spec() const = 0;
};

/// UPerNet-style decoder: a pooling pyramid on the deepest level, lateral
/// 1x1 convolutions with top-down upsample-add, and a final fusion of all
/// levels at the finest resolution. Inputs may arrive in any order; they are
/// sorted finest-first and must halve in size level to level.
class PyramidFusionDecoder : public Decoder {
public:
    PyramidFusionDecoder(const std::vector<FeatureSpec>& in, int64_t channels,
                         std::vector<int64_t> pool_sizes = {1, 2, 3, 6}, std::size_t num_levels = 4);

    FeatureMap forward(const FeatureMapSet& in) override;
    FeatureSpec output_spec() const override { return output_; }

private:
    std::vector<std::size_t> finest_first(const std::vector<std::array<int64_t, 3>>& shapes) const;

    int64_t channels_;
    std::size_t num_levels_;
    std::vector<int64_t> pool_sizes_;
    std::vector<torch::nn::Sequential> pool_convs_;
    torch::nn::Sequential bottleneck_{nullptr};
    std::vector<torch::nn::Sequential> laterals_;
    std::vector<torch::nn::Sequential> fpn_convs_;
    torch::nn::Sequential fuse_{nullptr};
    FeatureSpec output_;
};

/// `num_convs` 3x3 conv+ReLU blocks on the last feature item; with zero
/// blocks a single 1x1 projection sets the channel count.
class FcnDecoder : public Decoder {
public:
    FcnDecoder(const std::vector<FeatureSpec>& in, int64_t channels, int64_t num_convs);

    FeatureMap forward(const FeatureMapSet& in) override;
    FeatureSpec output_spec() const override { return output_; }

    const torch::nn::Sequential& blocks() const noexcept { return blocks_; }

private:
    torch::nn::Sequential blocks_{nullptr};
    FeatureSpec output_;
};

/// Passes its single input through unchanged.
class IdentityDecoder : public Decoder {
public:
    explicit IdentityDecoder(const std::vector<FeatureSpec>& in);

    FeatureMap forward(const FeatureMapSet& in) override;
    FeatureSpec output_spec() const override { return output_; }

private:
    FeatureSpec output_;
};

struct HeadSpec {
    TaskKind kind = TaskKind::Segmentation;
    int64_t num_classes = 2;
    double dropout = 0.0;

    void validate() const;
    int64_t out_channels() const { return kind == TaskKind::Regression ? 1 : num_classes; }
};

/// Final projection. Dense heads return (B, K, H, W) at `target_hw`;
/// the classification head returns (B, num_classes).
class Head : public torch::nn::Module {
public:
    Head(HeadSpec spec, const FeatureSpec& in);

    torch::Tensor forward(const FeatureMap& x, std::array<int64_t, 2> target_hw);

    const HeadSpec& spec() const noexcept { return spec_; }

private:
    HeadSpec spec_;
    torch::nn::Dropout dropout_{nullptr};
    torch::nn::Conv2d conv_{nullptr};
    torch::nn::Linear linear_{nullptr};
};

}  // namespace geotune::models
