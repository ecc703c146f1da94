// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "geotune/models/features.hpp"

namespace geotune::models {

/// Feature extractor interface shared by registry-built and user-supplied backbones.
///
/// Inputs are (B, T, C, H, W); backbones with `num_frames() == 1` also accept
/// (B, C, H, W).
class Backbone : public torch::nn::Module {
public:
    virtual FeatureMapSet forward(const torch::Tensor& x) = 0;

    /// Shapes of `forward` outputs for an input of `input_size()` pixels.
    virtual std::vector<FeatureSpec> output_specs() const = 0;

    virtual const std::vector<std::string>& bands() const = 0;
    virtual int64_t num_frames() const { return 1; }
    virtual int64_t input_size() const = 0;

    /// Name of the parameter whose second axis indexes input bands, used for
    /// channel surgery. Empty when the backbone has no such layer.
    virtual std::string input_projection() const { return {}; }
};

struct ToyViTConfig {
    int64_t img_size = 224;
    int64_t patch_size = 16;
    std::vector<std::string> in_bands;
    int64_t num_frames = 1;
    int64_t embed_dim = 64;
    int64_t depth = 12;
    int64_t num_heads = 4;
    std::vector<int64_t> out_indices{2, 5, 8, 11};
    double mlp_ratio = 4.0;

    void validate() const;
    int64_t grid_size() const { return img_size / patch_size; }
    int64_t num_tokens() const { return num_frames * grid_size() * grid_size(); }
};

class TransformerBlock : public torch::nn::Module {
public:
    TransformerBlock(int64_t dim, int64_t num_heads, double mlp_ratio);

    torch::Tensor forward(const torch::Tensor& x);

private:
    int64_t num_heads_;
    torch::nn::LayerNorm norm1_{nullptr};
    torch::nn::Linear qkv_{nullptr};
    torch::nn::Linear proj_{nullptr};
    torch::nn::LayerNorm norm2_{nullptr};
    torch::nn::Linear fc1_{nullptr};
    torch::nn::Linear fc2_{nullptr};
};

/// Mini Vision Transformer with multi-band, multi-frame patch embedding.
/// Frames share one patch projection and are told apart by a learned
/// temporal embedding; there is no class token.
class ToyViT : public Backbone {
public:
    explicit ToyViT(ToyViTConfig config);

    FeatureMapSet forward(const torch::Tensor& x) override;
    std::vector<FeatureSpec> output_specs() const override;
    const std::vector<std::string>& bands() const override { return config_.in_bands; }
    int64_t num_frames() const override { return config_.num_frames; }
    int64_t input_size() const override { return config_.img_size; }
    std::string input_projection() const override { return "patch_embed.weight"; }

    const ToyViTConfig& config() const noexcept { return config_; }
    const std::vector<std::shared_ptr<TransformerBlock>>& blocks() const noexcept { return blocks_; }

private:
    ToyViTConfig config_;
    torch::nn::Conv2d patch_embed_{nullptr};
    torch::Tensor pos_embed_;
    torch::Tensor time_embed_;
    std::vector<std::shared_ptr<TransformerBlock>> blocks_;
};

struct ConvPyramidConfig {
    std::vector<std::string> in_bands;
    std::vector<int64_t> stage_channels{32, 64, 128, 256};
    /// Configured input size, used for static shape inference and dry runs.
    int64_t img_size = 64;

    void validate() const;
};

/// Four-stage convolutional encoder with cumulative strides 4, 8, 16, 32.
class ConvPyramid : public Backbone {
public:
    explicit ConvPyramid(ConvPyramidConfig config);

    FeatureMapSet forward(const torch::Tensor& x) override;
    std::vector<FeatureSpec> output_specs() const override;
    const std::vector<std::string>& bands() const override { return config_.in_bands; }
    int64_t input_size() const override { return config_.img_size; }
    std::string input_projection() const override { return "stem.0.weight"; }

    const ConvPyramidConfig& config() const noexcept { return config_; }

private:
    ConvPyramidConfig config_;
    torch::nn::Sequential stem_{nullptr};
    std::vector<torch::nn::Sequential> stages_;
};

/// Rebuilds an input projection of shape (d, C_pre, k, k) for a new band list.
///
/// Bands present in both lists are copied bitwise. Every other band is drawn
/// from N(0, s^2), where s is the population std of all copied values (0.02
/// when nothing matches). Draws are keyed by band name, so permuting
/// `target_bands` permutes the output slices identically.
torch::Tensor remap_patch_embedding(const torch::Tensor& pretrained, const std::vector<std::string>& pre_bands,
                                    const std::vector<std::string>& target_bands, uint64_t rng_seed);

/// Truncated normal (+-2 std) fill, used for projection weights.
void trunc_normal_(torch::Tensor tensor, double std);

}  // namespace geotune::models
