// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/models/factory.hpp"

#include <sstream>

#include "geotune/error.hpp"
#include "geotune/models/checkpoint.hpp"
#include "geotune/random.hpp"

namespace geotune::models {

using nlohmann::json;

json ModelBuildSpec::to_json() const {
    json necks_json = json::array();
    for (const auto& n : necks) {
        necks_json.push_back({{"name", n.name}, {"args", n.args}});
    }
    return json{{"backbone", {{"name", backbone.name}, {"args", backbone.args}}},
                {"bands", bands},
                {"pretrained", pretrained.string()},
                {"necks", necks_json},
                {"decoder", {{"name", decoder.name}, {"args", decoder.args}}},
                {"head", {{"kind", to_string(head.kind)}, {"num_classes", head.num_classes}, {"dropout", head.dropout}}},
                {"freeze_backbone", freeze_backbone}};
}

EncoderDecoderModel::EncoderDecoderModel(std::shared_ptr<Backbone> backbone, std::shared_ptr<NeckPipeline> necks,
                                         std::shared_ptr<Decoder> decoder, std::shared_ptr<Head> head,
                                         bool freeze_backbone)
    : backbone_(register_module("backbone", std::move(backbone))),
      necks_(register_module("necks", necks ? std::move(necks) : std::make_shared<NeckPipeline>())),
      decoder_(register_module("decoder", std::move(decoder))),
      head_(register_module("head", std::move(head))),
      freeze_backbone_(freeze_backbone) {
    if (freeze_backbone_) {
        for (auto& p : backbone_->parameters()) {
            p.set_requires_grad(false);
        }
    }
}

torch::Tensor EncoderDecoderModel::forward(const torch::Tensor& x) {
    auto features = backbone_->forward(x);
    features = necks_->forward(features);
    auto decoded = decoder_->forward(features);
    return head_->forward(decoded, {x.size(-2), x.size(-1)});
}

std::vector<torch::Tensor> EncoderDecoderModel::trainable_parameters() {
    std::vector<torch::Tensor> out;
    for (auto& p : parameters()) {
        if (p.requires_grad()) {
            out.push_back(p);
        }
    }
    return out;
}

namespace {

bool is_shape_error(ErrorCode code) {
    switch (code) {
        case ErrorCode::ShapeMismatch:
        case ErrorCode::TokenCountMismatch:
        case ErrorCode::LengthMismatch:
        case ErrorCode::PyramidShapeError:
        case ErrorCode::NoGridInput:
        case ErrorCode::KindMismatch:
        case ErrorCode::IndexOutOfRange:
            return true;
        default:
            return false;
    }
}

/// Runs one build/dry-run stage, reporting shape failures with the stage label.
template <typename F>
auto stage(const std::string& label, const std::string& input, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        if (!is_shape_error(e.code())) {
            throw;
        }
        fail(ErrorCode::ShapeIncompatibility,
             "stage '" + label + "' rejected input " + input + ": " + e.what() + " [" + std::string(to_string(e.code())) + "]");
    } catch (const c10::Error& e) {
        fail(ErrorCode::ShapeIncompatibility,
             "stage '" + label + "' failed on input " + input + ": " + e.what_without_backtrace());
    }
}

template <typename Builder>
const Descriptor<Builder>& lookup(const RegistrySet<Builder>& set, const std::string& name) {
    try {
        return set.resolve(name);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NotFound || e.code() == ErrorCode::AmbiguousNamespace ||
            e.code() == ErrorCode::InvalidName) {
            fail(ErrorCode::ResolveError, e.what());
        }
        throw;
    }
}

std::string describe_tensor(const torch::Tensor& t) {
    std::ostringstream out;
    out << t.sizes();
    return out.str();
}

void dry_run(EncoderDecoderModel& model) {
    const bool was_training = model.is_training();
    model.eval();
    torch::NoGradGuard no_grad;

    const auto size = model.input_size();
    const auto frames = model.num_frames();
    const auto channels = static_cast<int64_t>(model.bands().size());
    auto x = torch::zeros({1, frames, channels, size, size});

    auto features = stage("backbone", describe_tensor(x), [&] { return model.backbone()->forward(x); });
    for (std::size_t i = 0; i < model.necks()->size(); ++i) {
        features = stage("neck[" + std::to_string(i) + "]", describe(features),
                         [&] { return model.necks()->at(i)->forward(features); });
    }
    auto decoded = stage("decoder", describe(features), [&] { return model.decoder()->forward(features); });
    auto out = stage("head", describe(FeatureMapSet{{decoded}}),
                     [&] { return model.head()->forward(decoded, {size, size}); });

    std::vector<int64_t> expected;
    if (model.task_kind() == TaskKind::Classification) {
        expected = {1, model.num_outputs()};
    } else {
        expected = {1, model.num_outputs(), size, size};
    }
    if (out.sizes().vec() != expected) {
        fail(ErrorCode::ShapeIncompatibility, "model output " + describe_tensor(out) + " does not match the contracted " +
                                                  describe_tensor(torch::empty(expected)));
    }
    model.train(was_training);
}

}  // namespace

std::shared_ptr<Backbone> build_backbone(const ModelBuildSpec& spec, uint64_t seed,
                                         const ComponentRegistries& registries) {
    const auto& descriptor = lookup(registries.backbones, spec.backbone.name);
    const auto args = resolve_args(descriptor.default_args, spec.backbone.args, "backbone '" + spec.backbone.name + "'");
    torch::manual_seed(derive_seed(seed, "backbone"));
    auto backbone = descriptor.build(args, spec.bands);

    if (spec.pretrained.empty()) {
        return backbone;
    }

    auto checkpoint = load_checkpoint(spec.pretrained);
    if (!checkpoint.metadata.contains("bands") || !checkpoint.metadata.at("bands").is_array()) {
        fail(ErrorCode::CheckpointBandMismatch,
             "pretrained checkpoint " + spec.pretrained.string() + " carries no band metadata");
    }
    const auto pre_bands = checkpoint.metadata.at("bands").get<std::vector<std::string>>();

    std::string prefix;
    for (const auto& [name, _] : checkpoint.tensors) {
        if (name.rfind("backbone.", 0) == 0) {
            prefix = "backbone.";
            break;
        }
    }
    const auto projection = backbone->input_projection();
    if (!projection.empty()) {
        auto it = checkpoint.tensors.find(prefix + projection);
        if (it == checkpoint.tensors.end()) {
            fail(ErrorCode::CheckpointFormat, "pretrained checkpoint lacks input projection '" + prefix + projection + "'");
        }
        it->second = remap_patch_embedding(it->second, pre_bands, spec.bands, derive_seed(seed, "remap"));
    } else if (pre_bands != spec.bands) {
        fail(ErrorCode::CheckpointBandMismatch, "backbone '" + spec.backbone.name +
                                                    "' has no input projection to remap between band lists");
    }
    restore_state(*backbone, checkpoint, prefix);
    return backbone;
}

Model build_model(const ModelBuildSpec& spec, uint64_t seed, const ComponentRegistries& registries) {
    return build_from_components(build_backbone(spec, seed, registries), spec, seed, registries);
}

Model build_from_components(std::shared_ptr<Backbone> backbone, const ModelBuildSpec& spec, uint64_t seed,
                            const ComponentRegistries& registries) {
    if (!backbone) {
        fail(ErrorCode::InvalidArgument, "build_from_components needs a backbone");
    }
    auto specs = backbone->output_specs();
    auto pipeline = std::make_shared<NeckPipeline>();
    for (std::size_t i = 0; i < spec.necks.size(); ++i) {
        const auto& neck_spec = spec.necks[i];
        const auto label = "neck[" + std::to_string(i) + "] " + neck_spec.name;
        const auto& descriptor = lookup(registries.necks, neck_spec.name);
        const auto args = resolve_args(descriptor.default_args, neck_spec.args, "neck '" + neck_spec.name + "'");
        torch::manual_seed(derive_seed(seed, "neck", i));
        auto neck = stage(label, describe(specs), [&] { return descriptor.build(args, specs); });
        specs = stage(label, describe(specs), [&] { return neck->output_specs(specs); });
        pipeline->push_back(neck);
    }

    const auto& decoder_descriptor = lookup(registries.decoders, spec.decoder.name);
    const auto decoder_args =
        resolve_args(decoder_descriptor.default_args, spec.decoder.args, "decoder '" + spec.decoder.name + "'");
    torch::manual_seed(derive_seed(seed, "decoder"));
    auto decoder = stage("decoder " + spec.decoder.name, describe(specs),
                         [&] { return decoder_descriptor.build(decoder_args, specs); });

    const auto head_name = to_string(spec.head.kind);
    const auto& head_descriptor = lookup(registries.heads, head_name);
    const auto head_args = resolve_args(head_descriptor.default_args, json{{"dropout", spec.head.dropout}}, "head");
    torch::manual_seed(derive_seed(seed, "head"));
    const auto decoded = decoder->output_spec();
    auto head = stage("head " + head_name, describe(decoded),
                      [&] { return head_descriptor.build(head_args, spec.head, decoded); });

    auto model = build_from_components(std::move(backbone), std::move(pipeline), std::move(decoder), std::move(head),
                                       spec.freeze_backbone);
    model->metadata = spec.to_json();
    return model;
}

Model build_from_components(std::shared_ptr<Backbone> backbone, std::shared_ptr<NeckPipeline> necks,
                            std::shared_ptr<Decoder> decoder, std::shared_ptr<Head> head, bool freeze_backbone) {
    if (!backbone || !decoder || !head) {
        fail(ErrorCode::InvalidArgument, "build_from_components needs backbone, decoder and head");
    }
    auto model = std::make_shared<EncoderDecoderModel>(std::move(backbone), std::move(necks), std::move(decoder),
                                                       std::move(head), freeze_backbone);
    dry_run(*model);
    return model;
}

void save_model(const std::filesystem::path& path, EncoderDecoderModel& model, json extra_metadata) {
    json metadata = extra_metadata.is_object() ? std::move(extra_metadata) : json::object();
    metadata["model"] = model.metadata;
    metadata["bands"] = model.bands();
    metadata["toolkit_version"] = std::string(kToolkitVersion);
    save_checkpoint(path, capture_state(model, metadata));
}

void load_model_weights(const std::filesystem::path& path, EncoderDecoderModel& model) {
    restore_state(model, load_checkpoint(path));
}

}  // namespace geotune::models
