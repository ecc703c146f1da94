// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "geotune/models/backbones.hpp"
#include "geotune/models/components.hpp"
#include "geotune/models/decoders.hpp"
#include "geotune/models/necks.hpp"

namespace geotune::models {

struct ComponentSpec {
    std::string name;
    nlohmann::json args = nlohmann::json::object();

    bool operator==(const ComponentSpec&) const = default;
};

/// Declarative recipe for an encoder-decoder model.
struct ModelBuildSpec {
    ComponentSpec backbone;
    /// Bands the model consumes, in order.
    std::vector<std::string> bands;
    /// Optional pretrained backbone checkpoint; must carry band metadata.
    std::filesystem::path pretrained;
    std::vector<ComponentSpec> necks;
    ComponentSpec decoder;
    HeadSpec head;
    bool freeze_backbone = false;

    nlohmann::json to_json() const;
};

/// head(decoder(necks(backbone(x)))).
class EncoderDecoderModel : public torch::nn::Module {
public:
    EncoderDecoderModel(std::shared_ptr<Backbone> backbone, std::shared_ptr<NeckPipeline> necks,
                        std::shared_ptr<Decoder> decoder, std::shared_ptr<Head> head, bool freeze_backbone);

    /// (B, T, C, H, W) -> predictions (see Head).
    torch::Tensor forward(const torch::Tensor& x);

    const std::shared_ptr<Backbone>& backbone() const noexcept { return backbone_; }
    const std::shared_ptr<NeckPipeline>& necks() const noexcept { return necks_; }
    const std::shared_ptr<Decoder>& decoder() const noexcept { return decoder_; }
    const std::shared_ptr<Head>& head() const noexcept { return head_; }

    TaskKind task_kind() const noexcept { return head_->spec().kind; }
    int64_t num_outputs() const noexcept { return head_->spec().out_channels(); }
    int64_t input_size() const { return backbone_->input_size(); }
    int64_t num_frames() const { return backbone_->num_frames(); }
    const std::vector<std::string>& bands() const { return backbone_->bands(); }
    bool backbone_frozen() const noexcept { return freeze_backbone_; }

    /// Parameters an optimizer should update (excludes a frozen backbone).
    std::vector<torch::Tensor> trainable_parameters();

    /// Build recipe echoed into checkpoints.
    nlohmann::json metadata;

private:
    std::shared_ptr<Backbone> backbone_;
    std::shared_ptr<NeckPipeline> necks_;
    std::shared_ptr<Decoder> decoder_;
    std::shared_ptr<Head> head_;
    bool freeze_backbone_;
};

using Model = std::shared_ptr<EncoderDecoderModel>;

/// Resolves and constructs the backbone of `spec`, loading pretrained
/// weights and remapping the input projection when band lists differ.
std::shared_ptr<Backbone> build_backbone(const ModelBuildSpec& spec, uint64_t seed,
                                         const ComponentRegistries& registries = builtin_registries());

Model build_model(const ModelBuildSpec& spec, uint64_t seed,
                  const ComponentRegistries& registries = builtin_registries());

/// Same wiring as build_model around a caller-supplied backbone; necks,
/// decoder and head are still resolved from `spec` with the same seeds.
Model build_from_components(std::shared_ptr<Backbone> backbone, const ModelBuildSpec& spec, uint64_t seed,
                            const ComponentRegistries& registries = builtin_registries());

/// Fully caller-supplied components; only checks shapes and wires them.
Model build_from_components(std::shared_ptr<Backbone> backbone, std::shared_ptr<NeckPipeline> necks,
                            std::shared_ptr<Decoder> decoder, std::shared_ptr<Head> head, bool freeze_backbone);

void save_model(const std::filesystem::path& path, EncoderDecoderModel& model,
                nlohmann::json extra_metadata = nlohmann::json::object());
void load_model_weights(const std::filesystem::path& path, EncoderDecoderModel& model);

}  // namespace geotune::models
