// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/models/necks.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "geotune/error.hpp"

namespace geotune::models {

namespace {

std::string shape_text(const torch::Tensor& t) {
    std::ostringstream out;
    out << t.sizes();
    return out.str();
}

void check_indices(std::size_t count, const std::vector<int64_t>& indices) {
    if (indices.empty()) {
        fail(ErrorCode::IndexOutOfRange, "select_indices needs at least one index");
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= static_cast<int64_t>(count)) {
            fail(ErrorCode::IndexOutOfRange, "index " + std::to_string(indices[i]) + " outside a feature set of " +
                                                 std::to_string(count) + " items");
        }
        if (i > 0 && indices[i] <= indices[i - 1]) {
            fail(ErrorCode::IndexOutOfRange, "indices must be strictly increasing");
        }
    }
}

}  // namespace

FeatureMapSet select_indices(const FeatureMapSet& fms, const std::vector<int64_t>& indices) {
    check_indices(fms.size(), indices);
    FeatureMapSet out;
    for (auto i : indices) {
        out.items.push_back(fms[static_cast<std::size_t>(i)]);
    }
    return out;
}

FeatureMapSet reshape_tokens_to_image(const FeatureMapSet& fms, int64_t height, int64_t width, int64_t frames,
                                      TemporalReduce reduce) {
    FeatureMapSet out;
    for (const auto& item : fms.items) {
        if (item.form != FeatureForm::Token || item.data.dim() != 3) {
            fail(ErrorCode::TokenCountMismatch, "reshape_tokens_to_image expects token-form (B, N, d) input, got " +
                                                    to_string(item.form) + shape_text(item.data));
        }
        const auto batch = item.data.size(0);
        const auto tokens = item.data.size(1);
        const auto dim = item.data.size(2);
        if (tokens != frames * height * width) {
            fail(ErrorCode::TokenCountMismatch, "token count " + std::to_string(tokens) + " != " +
                                                    std::to_string(frames) + "*" + std::to_string(height) + "*" +
                                                    std::to_string(width));
        }
        auto framed = item.data.view({batch, frames, height * width, dim});
        torch::Tensor grid;
        if (reduce == TemporalReduce::Mean) {
            grid = framed.mean(1).transpose(1, 2).reshape({batch, dim, height, width});
        } else {
            grid = framed.permute({0, 1, 3, 2}).reshape({batch, frames * dim, height, width});
        }
        out.items.push_back({grid, FeatureForm::Grid});
    }
    return out;
}

torch::Tensor flatten_grid_to_tokens(const torch::Tensor& grid) { return grid.flatten(2).transpose(1, 2); }

// ---------------------------------------------------------------------------

SelectIndices::SelectIndices(std::vector<int64_t> indices) : indices_(std::move(indices)) {}

FeatureMapSet SelectIndices::forward(const FeatureMapSet& in) { return select_indices(in, indices_); }

std::vector<FeatureSpec> SelectIndices::output_specs(const std::vector<FeatureSpec>& in) const {
    check_indices(in.size(), indices_);
    std::vector<FeatureSpec> out;
    for (auto i : indices_) {
        out.push_back(in[static_cast<std::size_t>(i)]);
    }
    return out;
}

ReshapeTokensToImage::ReshapeTokensToImage(int64_t height, int64_t width, int64_t frames, TemporalReduce reduce)
    : height_(height), width_(width), frames_(frames), reduce_(reduce) {
    if (height <= 0 || width <= 0 || frames <= 0) {
        fail(ErrorCode::InvalidArgument, "reshape_tokens_to_image needs positive grid size and frame count");
    }
}

FeatureMapSet ReshapeTokensToImage::forward(const FeatureMapSet& in) {
    return reshape_tokens_to_image(in, height_, width_, frames_, reduce_);
}

std::vector<FeatureSpec> ReshapeTokensToImage::output_specs(const std::vector<FeatureSpec>& in) const {
    std::vector<FeatureSpec> out;
    for (const auto& spec : in) {
        if (spec.form != FeatureForm::Token) {
            fail(ErrorCode::TokenCountMismatch, "reshape_tokens_to_image expects token-form input, got " + describe(spec));
        }
        if (spec.frames * spec.height * spec.width != frames_ * height_ * width_) {
            fail(ErrorCode::TokenCountMismatch, "token count of " + describe(spec) + " does not match " +
                                                    std::to_string(frames_) + "x" + std::to_string(height_) + "x" +
                                                    std::to_string(width_));
        }
        const auto channels = reduce_ == TemporalReduce::Mean ? spec.channels : spec.channels * frames_;
        out.push_back({FeatureForm::Grid, channels, height_, width_, 1});
    }
    return out;
}

InterpolateToPyramid::InterpolateToPyramid(const std::vector<FeatureSpec>& in, std::vector<double> scales)
    : scales_(std::move(scales)) {
    if (in.size() != scales_.size()) {
        fail(ErrorCode::LengthMismatch, "interpolate_to_pyramid got " + std::to_string(in.size()) + " items but " +
                                            std::to_string(scales_.size()) + " scales");
    }
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i].form != FeatureForm::Grid) {
            fail(ErrorCode::NoGridInput, "interpolate_to_pyramid expects grid-form input, got " + describe(in[i]));
        }
        if (in[i].height != in[0].height || in[i].width != in[0].width) {
            fail(ErrorCode::ShapeMismatch, "interpolate_to_pyramid expects equal-size items, got " + describe(in));
        }
    }

    auto paths = register_module("paths", torch::nn::ModuleList());
    for (std::size_t i = 0; i < scales_.size(); ++i) {
        const double scale = scales_[i];
        const double exponent = scale > 0.0 ? std::log2(scale) : 0.5;
        if (scale <= 0.0 || exponent != std::round(exponent)) {
            fail(ErrorCode::InvalidArgument, "pyramid scale " + std::to_string(scale) + " is not a power of two");
        }
        const int k = static_cast<int>(std::lround(exponent));
        exponents_.push_back(k);
        const auto c = in[i].channels;
        torch::nn::Sequential path;
        for (int step = 0; step < k; ++step) {
            if (step > 0) {
                path->push_back(torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::gcd(c, int64_t{8}), c)));
                path->push_back(torch::nn::GELU());
            }
            path->push_back(torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(c, c, 2).stride(2)));
        }
        for (int step = 0; step > k; --step) {
            path->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)));
        }
        paths->push_back(path);
        paths_.push_back(path);
    }
}

FeatureMapSet InterpolateToPyramid::forward(const FeatureMapSet& in) {
    if (in.size() != scales_.size()) {
        fail(ErrorCode::LengthMismatch, "interpolate_to_pyramid got " + std::to_string(in.size()) + " items but " +
                                            std::to_string(scales_.size()) + " scales");
    }
    FeatureMapSet out;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i].form != FeatureForm::Grid) {
            fail(ErrorCode::NoGridInput, "interpolate_to_pyramid expects grid-form input");
        }
        out.items.push_back({exponents_[i] == 0 ? in[i].data : paths_[i]->forward(in[i].data), FeatureForm::Grid});
    }
    return out;
}

std::vector<FeatureSpec> InterpolateToPyramid::output_specs(const std::vector<FeatureSpec>& in) const {
    if (in.size() != scales_.size()) {
        fail(ErrorCode::LengthMismatch, "interpolate_to_pyramid got " + std::to_string(in.size()) + " items but " +
                                            std::to_string(scales_.size()) + " scales");
    }
    std::vector<FeatureSpec> out;
    for (std::size_t i = 0; i < in.size(); ++i) {
        auto spec = in[i];
        for (int step = 0; step < exponents_[i]; ++step) {
            spec.height *= 2;
            spec.width *= 2;
        }
        for (int step = 0; step > exponents_[i]; --step) {
            spec.height /= 2;
            spec.width /= 2;
        }
        out.push_back(spec);
    }
    return out;
}

// ---------------------------------------------------------------------------

void NeckPipeline::push_back(std::shared_ptr<Neck> neck) {
    register_module("neck" + std::to_string(necks_.size()), neck);
    necks_.push_back(std::move(neck));
}

FeatureMapSet NeckPipeline::forward(const FeatureMapSet& in) {
    FeatureMapSet current = in;
    for (auto& neck : necks_) {
        current = neck->forward(current);
    }
    return current;
}

std::vector<FeatureSpec> NeckPipeline::output_specs(std::vector<FeatureSpec> in) const {
    for (const auto& neck : necks_) {
        in = neck->output_specs(in);
    }
    return in;
}

}  // namespace geotune::models
