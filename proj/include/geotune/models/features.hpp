// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace geotune::models {

enum class FeatureForm {
    Token,  // (B, N_tokens, d)
    Grid,   // (B, C, H, W)
};

std::string to_string(FeatureForm form);

/// Static description of one feature item, used for shape inference before
/// any tensor exists. For token items, `height`/`width` are the patch grid
/// and `frames` the number of temporal frames (N_tokens = frames*height*width).
struct FeatureSpec {
    FeatureForm form = FeatureForm::Grid;
    int64_t channels = 0;
    int64_t height = 0;
    int64_t width = 0;
    int64_t frames = 1;

    bool operator==(const FeatureSpec&) const = default;
};

std::string describe(const FeatureSpec& spec);
std::string describe(const std::vector<FeatureSpec>& specs);

struct FeatureMap {
    torch::Tensor data;
    FeatureForm form = FeatureForm::Grid;
};

/// Ordered intermediate outputs flowing backbone -> necks -> decoder.
struct FeatureMapSet {
    std::vector<FeatureMap> items;

    std::size_t size() const noexcept { return items.size(); }
    bool empty() const noexcept { return items.empty(); }
    const FeatureMap& operator[](std::size_t i) const { return items[i]; }
    FeatureMap& operator[](std::size_t i) { return items[i]; }
};

std::string describe(const FeatureMapSet& set);

}  // namespace geotune::models
