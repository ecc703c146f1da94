// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/models/backbones.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "geotune/error.hpp"
#include "geotune/random.hpp"
#include "geotune/strings.hpp"

namespace geotune::models {

std::string to_string(FeatureForm form) { return form == FeatureForm::Token ? "token" : "grid"; }

std::string describe(const FeatureSpec& spec) {
    std::ostringstream out;
    if (spec.form == FeatureForm::Token) {
        out << "token(N=" << spec.frames * spec.height * spec.width << ", d=" << spec.channels << ")";
    } else {
        out << "grid(C=" << spec.channels << ", " << spec.height << "x" << spec.width << ")";
    }
    return out.str();
}

std::string describe(const std::vector<FeatureSpec>& specs) {
    std::vector<std::string> parts;
    for (const auto& s : specs) {
        parts.push_back(describe(s));
    }
    return "[" + join(parts, ", ") + "]";
}

std::string describe(const FeatureMapSet& set) {
    std::vector<std::string> parts;
    for (const auto& item : set.items) {
        std::ostringstream out;
        out << to_string(item.form) << item.data.sizes();
        parts.push_back(out.str());
    }
    return "[" + join(parts, ", ") + "]";
}

void trunc_normal_(torch::Tensor tensor, double std) {
    torch::NoGradGuard no_grad;
    tensor.normal_(0.0, std);
    auto outside = tensor.abs() > 2.0 * std;
    while (outside.any().item<bool>()) {
        auto redraw = torch::empty_like(tensor).normal_(0.0, std);
        tensor.copy_(torch::where(outside, redraw, tensor));
        outside = tensor.abs() > 2.0 * std;
    }
}

namespace {

void require_unique_bands(const std::vector<std::string>& bands, const char* what) {
    std::set<std::string> seen;
    for (const auto& b : bands) {
        if (!seen.insert(b).second) {
            fail(ErrorCode::DuplicateBand, std::string(what) + " lists band '" + b + "' more than once");
        }
    }
}

void init_linear(torch::nn::Linear& layer) {
    trunc_normal_(layer->weight, 0.02);
    torch::NoGradGuard no_grad;
    layer->bias.zero_();
}

std::string shape_text(const torch::Tensor& t) {
    std::ostringstream out;
    out << t.sizes();
    return out.str();
}

int64_t norm_groups(int64_t channels) { return std::gcd(channels, int64_t{8}); }

torch::nn::Sequential conv_norm_act(int64_t in, int64_t out, int64_t stride) {
    return torch::nn::Sequential(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)),
        torch::nn::GroupNorm(torch::nn::GroupNormOptions(norm_groups(out), out)), torch::nn::ReLU());
}

}  // namespace

// ---------------------------------------------------------------------------
// ToyViT

void ToyViTConfig::validate() const {
    auto bad = [](const std::string& m) { fail(ErrorCode::InvalidArgument, "toyvit: " + m); };
    if (in_bands.empty()) bad("in_bands must be non-empty");
    require_unique_bands(in_bands, "toyvit in_bands");
    if (img_size <= 0 || patch_size <= 0) bad("img_size and patch_size must be positive");
    if (img_size % patch_size != 0) {
        bad("img_size " + std::to_string(img_size) + " is not divisible by patch_size " + std::to_string(patch_size));
    }
    if (num_frames < 1) bad("num_frames must be >= 1");
    if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0) {
        bad("embed_dim " + std::to_string(embed_dim) + " must be a positive multiple of num_heads " +
            std::to_string(num_heads));
    }
    if (depth <= 0) bad("depth must be positive");
    if (out_indices.empty()) bad("out_indices must be non-empty");
    for (std::size_t i = 0; i < out_indices.size(); ++i) {
        if (out_indices[i] < 0 || out_indices[i] >= depth) {
            bad("out index " + std::to_string(out_indices[i]) + " outside [0, " + std::to_string(depth) + ")");
        }
        if (i > 0 && out_indices[i] <= out_indices[i - 1]) bad("out_indices must be strictly increasing");
    }
    if (mlp_ratio <= 0.0) bad("mlp_ratio must be positive");
}

TransformerBlock::TransformerBlock(int64_t dim, int64_t num_heads, double mlp_ratio) : num_heads_(num_heads) {
    const auto hidden = static_cast<int64_t>(std::llround(static_cast<double>(dim) * mlp_ratio));
    norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    qkv_ = register_module("qkv", torch::nn::Linear(dim, 3 * dim));
    proj_ = register_module("proj", torch::nn::Linear(dim, dim));
    norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    fc1_ = register_module("fc1", torch::nn::Linear(dim, hidden));
    fc2_ = register_module("fc2", torch::nn::Linear(hidden, dim));
    for (auto* layer : {&qkv_, &proj_, &fc1_, &fc2_}) {
        init_linear(*layer);
    }
}

torch::Tensor TransformerBlock::forward(const torch::Tensor& x) {
    const auto batch = x.size(0);
    const auto tokens = x.size(1);
    const auto dim = x.size(2);
    const auto head_dim = dim / num_heads_;

    auto qkv = qkv_(norm1_(x)).view({batch, tokens, 3, num_heads_, head_dim}).permute({2, 0, 3, 1, 4});
    auto q = qkv[0];
    auto k = qkv[1];
    auto v = qkv[2];
    auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim)), -1);
    auto mixed = torch::matmul(attn, v).transpose(1, 2).reshape({batch, tokens, dim});
    auto h = x + proj_(mixed);
    return h + fc2_(torch::gelu(fc1_(norm2_(h))));
}

ToyViT::ToyViT(ToyViTConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto channels = static_cast<int64_t>(config_.in_bands.size());
    const auto d = config_.embed_dim;
    const auto grid = config_.grid_size();

    patch_embed_ = register_module(
        "patch_embed",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, d, config_.patch_size).stride(config_.patch_size)));
    trunc_normal_(patch_embed_->weight, 0.02);
    {
        torch::NoGradGuard no_grad;
        patch_embed_->bias.zero_();
    }
    pos_embed_ = register_parameter("pos_embed", torch::zeros({1, grid * grid, d}));
    trunc_normal_(pos_embed_, 0.02);
    time_embed_ = register_parameter("time_embed", torch::zeros({config_.num_frames, d}));
    trunc_normal_(time_embed_, 0.02);

    auto block_list = register_module("blocks", torch::nn::ModuleList());
    for (int64_t i = 0; i < config_.depth; ++i) {
        blocks_.push_back(std::make_shared<TransformerBlock>(d, config_.num_heads, config_.mlp_ratio));
        block_list->push_back(blocks_.back());
    }
}

FeatureMapSet ToyViT::forward(const torch::Tensor& input) {
    const auto frames = config_.num_frames;
    const auto channels = static_cast<int64_t>(config_.in_bands.size());
    const auto size = config_.img_size;

    torch::Tensor x = input;
    if (x.dim() == 4 && frames == 1) {
        x = x.unsqueeze(1);
    }
    if (x.dim() != 5 || x.size(1) != frames || x.size(2) != channels || x.size(3) != size || x.size(4) != size) {
        fail(ErrorCode::ShapeMismatch, "toyvit expects (B, " + std::to_string(frames) + ", " +
                                           std::to_string(channels) + ", " + std::to_string(size) + ", " +
                                           std::to_string(size) + "), got " + shape_text(input));
    }

    const auto batch = x.size(0);
    const auto d = config_.embed_dim;
    const auto patches = config_.grid_size() * config_.grid_size();

    auto tokens = patch_embed_(x.reshape({batch * frames, channels, size, size})).flatten(2).transpose(1, 2);
    tokens = tokens + pos_embed_;
    tokens = tokens.view({batch, frames, patches, d}) + time_embed_.view({1, frames, 1, d});
    tokens = tokens.reshape({batch, frames * patches, d});

    FeatureMapSet out;
    std::size_t next = 0;
    const auto last = config_.out_indices.back();
    for (int64_t i = 0; i <= last; ++i) {
        tokens = blocks_[static_cast<std::size_t>(i)]->forward(tokens);
        if (i == config_.out_indices[next]) {
            out.items.push_back({tokens, FeatureForm::Token});
            ++next;
        }
    }
    return out;
}

std::vector<FeatureSpec> ToyViT::output_specs() const {
    const auto grid = config_.grid_size();
    return std::vector<FeatureSpec>(config_.out_indices.size(),
                                    FeatureSpec{FeatureForm::Token, config_.embed_dim, grid, grid, config_.num_frames});
}

// ---------------------------------------------------------------------------
// ConvPyramid

void ConvPyramidConfig::validate() const {
    auto bad = [](const std::string& m) { fail(ErrorCode::InvalidArgument, "conv_pyramid: " + m); };
    if (in_bands.empty()) bad("in_bands must be non-empty");
    require_unique_bands(in_bands, "conv_pyramid in_bands");
    if (stage_channels.size() != 4) bad("stage_channels must list exactly 4 channel counts");
    for (auto c : stage_channels) {
        if (c <= 0) bad("stage channel counts must be positive");
    }
    if (img_size <= 0 || img_size % 32 != 0) bad("img_size must be a positive multiple of 32");
}

ConvPyramid::ConvPyramid(ConvPyramidConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto channels = static_cast<int64_t>(config_.in_bands.size());
    const auto& widths = config_.stage_channels;

    auto stem = conv_norm_act(channels, widths[0], 2);
    auto second = conv_norm_act(widths[0], widths[0], 2);
    for (const auto& m : *second) {
        stem->push_back(m);
    }
    stem_ = register_module("stem", stem);

    for (std::size_t i = 1; i < 4; ++i) {
        auto stage = conv_norm_act(widths[i - 1], widths[i], 2);
        auto refine = conv_norm_act(widths[i], widths[i], 1);
        for (const auto& m : *refine) {
            stage->push_back(m);
        }
        stages_.push_back(register_module("stage" + std::to_string(i), stage));
    }
}

FeatureMapSet ConvPyramid::forward(const torch::Tensor& input) {
    torch::Tensor x = input;
    if (x.dim() == 5 && x.size(1) == 1) {
        x = x.squeeze(1);
    }
    const auto channels = static_cast<int64_t>(config_.in_bands.size());
    if (x.dim() != 4 || x.size(1) != channels || x.size(2) % 32 != 0 || x.size(3) % 32 != 0 || x.size(2) == 0) {
        fail(ErrorCode::ShapeMismatch, "conv_pyramid expects (B, " + std::to_string(channels) +
                                           ", H, W) with H, W divisible by 32, got " + shape_text(input));
    }

    FeatureMapSet out;
    x = stem_->forward(x);
    out.items.push_back({x, FeatureForm::Grid});
    for (auto& stage : stages_) {
        x = stage->forward(x);
        out.items.push_back({x, FeatureForm::Grid});
    }
    return out;
}

std::vector<FeatureSpec> ConvPyramid::output_specs() const {
    std::vector<FeatureSpec> specs;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto size = config_.img_size / (int64_t{4} << i);
        specs.push_back({FeatureForm::Grid, config_.stage_channels[i], size, size, 1});
    }
    return specs;
}

// ---------------------------------------------------------------------------
// Channel surgery

torch::Tensor remap_patch_embedding(const torch::Tensor& pretrained, const std::vector<std::string>& pre_bands,
                                    const std::vector<std::string>& target_bands, uint64_t rng_seed) {
    if (target_bands.empty()) {
        fail(ErrorCode::EmptyTargetBands, "target band list is empty");
    }
    require_unique_bands(pre_bands, "pretrained band list");
    require_unique_bands(target_bands, "target band list");
    if (pretrained.dim() < 2 || pretrained.size(1) != static_cast<int64_t>(pre_bands.size())) {
        fail(ErrorCode::ShapeMismatch, "pretrained projection " + shape_text(pretrained) + " does not have " +
                                           std::to_string(pre_bands.size()) + " input channels");
    }

    torch::NoGradGuard no_grad;
    auto source = pretrained.detach();
    std::vector<int64_t> copied;
    for (const auto& band : target_bands) {
        auto it = std::find(pre_bands.begin(), pre_bands.end(), band);
        if (it != pre_bands.end()) {
            copied.push_back(it - pre_bands.begin());
        }
    }

    double std = 0.02;
    if (!copied.empty()) {
        auto matched = source.index_select(1, torch::tensor(copied, torch::kLong));
        std = matched.to(torch::kDouble).std(/*unbiased=*/false).item<double>();
    }

    auto slice_shape = source.sizes().vec();
    slice_shape[1] = 1;
    std::vector<torch::Tensor> slices;
    slices.reserve(target_bands.size());
    for (const auto& band : target_bands) {
        auto it = std::find(pre_bands.begin(), pre_bands.end(), band);
        if (it != pre_bands.end()) {
            slices.push_back(source.narrow(1, it - pre_bands.begin(), 1).clone());
        } else {
            auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(rng_seed, band));
            slices.push_back(at::normal(0.0, std, slice_shape, gen, source.options()));
        }
    }
    return torch::cat(slices, 1).contiguous();
}

}  // namespace geotune::models
