// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "geotune/models/features.hpp"

namespace geotune::models {

class Neck : public torch::nn::Module {
public:
    virtual FeatureMapSet forward(const FeatureMapSet& in) = 0;
    virtual std::vector<FeatureSpec> output_specs(const std::vector<FeatureSpec>& in) const = 0;
};

enum class TemporalReduce { Mean, ConcatChannels };

// Pure operations behind the stateless necks.
FeatureMapSet select_indices(const FeatureMapSet& fms, const std::vector<int64_t>& indices);
FeatureMapSet reshape_tokens_to_image(const FeatureMapSet& fms, int64_t height, int64_t width, int64_t frames,
                                      TemporalReduce reduce = TemporalReduce::Mean);

/// Inverse of the token-to-grid reshape for T = 1: (B, d, h, w) -> (B, h*w, d).
torch::Tensor flatten_grid_to_tokens(const torch::Tensor& grid);

class SelectIndices : public Neck {
public:
    explicit SelectIndices(std::vector<int64_t> indices);

    FeatureMapSet forward(const FeatureMapSet& in) override;
    std::vector<FeatureSpec> output_specs(const std::vector<FeatureSpec>& in) const override;

private:
    std::vector<int64_t> indices_;
};

/// Token sequences (B, T*h*w, d) to 2D grids (B, d, h, w), reducing time
/// by mean or by stacking frames along channels (frame-major).
class ReshapeTokensToImage : public Neck {
public:
    ReshapeTokensToImage(int64_t height, int64_t width, int64_t frames, TemporalReduce reduce);

    FeatureMapSet forward(const FeatureMapSet& in) override;
    std::vector<FeatureSpec> output_specs(const std::vector<FeatureSpec>& in) const override;

private:
    int64_t height_;
    int64_t width_;
    int64_t frames_;
    TemporalReduce reduce_;
};

/// Resizes item i by scales[i]: learned stride-2 transposed convolutions for
/// upscaling, identity at 1, stride-2 max pooling for downscaling. Scales
/// must be powers of two.
class InterpolateToPyramid : public Neck {
public:
    InterpolateToPyramid(const std::vector<FeatureSpec>& in, std::vector<double> scales);

    FeatureMapSet forward(const FeatureMapSet& in) override;
    std::vector<FeatureSpec> output_specs(const std::vector<FeatureSpec>& in) const override;

    const std::vector<double>& scales() const noexcept { return scales_; }

private:
    std::vector<double> scales_;
    std::vector<int> exponents_;
    std::vector<torch::nn::Sequential> paths_;
};

/// Applies necks in order.
class NeckPipeline : public torch::nn::Module {
public:
    NeckPipeline() = default;

    void push_back(std::shared_ptr<Neck> neck);
    FeatureMapSet forward(const FeatureMapSet& in);
    std::vector<FeatureSpec> output_specs(std::vector<FeatureSpec> in) const;

    std::size_t size() const noexcept { return necks_.size(); }
    const std::shared_ptr<Neck>& at(std::size_t i) const { return necks_.at(i); }

private:
    std::vector<std::shared_ptr<Neck>> necks_;
};

}  // namespace geotune::models
