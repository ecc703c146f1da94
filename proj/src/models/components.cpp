// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/models/components.hpp"

#include <cmath>

#include "geotune/error.hpp"
#include "geotune/strings.hpp"

namespace geotune::models {

using nlohmann::json;

std::string to_string(ComponentKind kind) {
    switch (kind) {
        case ComponentKind::Backbone: return "backbone";
        case ComponentKind::Neck: return "neck";
        case ComponentKind::Decoder: return "decoder";
        case ComponentKind::Head: return "head";
    }
    return "backbone";
}

ComponentKind parse_component_kind(const std::string& text) {
    if (text == "backbone") return ComponentKind::Backbone;
    if (text == "neck") return ComponentKind::Neck;
    if (text == "decoder") return ComponentKind::Decoder;
    if (text == "head") return ComponentKind::Head;
    fail(ErrorCode::InvalidArgument, "unknown component kind '" + text + "' (expected backbone, neck, decoder or head)");
}

std::vector<std::string> ComponentRegistries::list(ComponentKind kind) const {
    switch (kind) {
        case ComponentKind::Backbone: return backbones.list();
        case ComponentKind::Neck: return necks.list();
        case ComponentKind::Decoder: return decoders.list();
        case ComponentKind::Head: return heads.list();
    }
    return {};
}

json ComponentRegistries::default_args(ComponentKind kind, const std::string& name) const {
    try {
        switch (kind) {
            case ComponentKind::Backbone: return backbones.resolve(name).default_args;
            case ComponentKind::Neck: return necks.resolve(name).default_args;
            case ComponentKind::Decoder: return decoders.resolve(name).default_args;
            case ComponentKind::Head: return heads.resolve(name).default_args;
        }
    } catch (const Error&) {
    }
    return nullptr;
}

namespace {

bool same_category(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) {
        if (a.is_number_integer() && b.is_number_float()) {
            const double v = b.get<double>();
            return std::floor(v) == v;
        }
        return true;
    }
    return a.type() == b.type();
}

template <typename T>
T arg(const json& args, const std::string& key, const std::string& where) {
    const auto& value = args.at(key);
    if (value.is_null()) {
        fail(ErrorCode::MissingKey, where + ": argument '" + key + "' is required");
    }
    try {
        return value.get<T>();
    } catch (const json::exception& e) {
        fail(ErrorCode::TypeError, where + ": argument '" + key + "' has the wrong type (" + e.what() + ")");
    }
}

// JSON ints coming from YAML may be stored as floats.
int64_t int_arg(const json& args, const std::string& key, const std::string& where) {
    const auto v = arg<double>(args, key, where);
    if (std::floor(v) != v) {
        fail(ErrorCode::TypeError, where + ": argument '" + key + "' must be an integer");
    }
    return static_cast<int64_t>(v);
}

std::vector<int64_t> int_list_arg(const json& args, const std::string& key, const std::string& where) {
    std::vector<int64_t> out;
    for (auto v : arg<std::vector<double>>(args, key, where)) {
        if (std::floor(v) != v) {
            fail(ErrorCode::TypeError, where + ": argument '" + key + "' must list integers");
        }
        out.push_back(static_cast<int64_t>(v));
    }
    return out;
}

void add_backbones(ComponentRegistries& r) {
    r.backbones.add_registry("toy");
    r.backbones.add("toy", "toyvit",
                    {[](const json& a, const std::vector<std::string>& bands) -> std::shared_ptr<Backbone> {
                         const std::string where = "toyvit";
                         ToyViTConfig cfg;
                         cfg.in_bands = bands;
                         cfg.img_size = int_arg(a, "img_size", where);
                         cfg.patch_size = int_arg(a, "patch_size", where);
                         cfg.num_frames = int_arg(a, "num_frames", where);
                         cfg.embed_dim = int_arg(a, "embed_dim", where);
                         cfg.depth = int_arg(a, "depth", where);
                         cfg.num_heads = int_arg(a, "num_heads", where);
                         cfg.out_indices = int_list_arg(a, "out_indices", where);
                         cfg.mlp_ratio = arg<double>(a, "mlp_ratio", where);
                         return std::make_shared<ToyViT>(cfg);
                     },
                     json{{"img_size", 224},
                          {"patch_size", 16},
                          {"num_frames", 1},
                          {"embed_dim", 64},
                          {"depth", 12},
                          {"num_heads", 4},
                          {"out_indices", {2, 5, 8, 11}},
                          {"mlp_ratio", 4.0}},
                     json{{"output_form", "token"}, {"description", "mini vision transformer, multi-frame patch embedding"}}});
    r.backbones.add("toy", "conv_pyramid",
                    {[](const json& a, const std::vector<std::string>& bands) -> std::shared_ptr<Backbone> {
                         const std::string where = "conv_pyramid";
                         ConvPyramidConfig cfg;
                         cfg.in_bands = bands;
                         cfg.stage_channels = int_list_arg(a, "stage_channels", where);
                         cfg.img_size = int_arg(a, "img_size", where);
                         return std::make_shared<ConvPyramid>(cfg);
                     },
                     json{{"stage_channels", {32, 64, 128, 256}}, {"img_size", 64}},
                     json{{"output_form", "grid"}, {"description", "4-stage convolutional pyramid, strides 4/8/16/32"}}});
}

void add_necks(ComponentRegistries& r) {
    r.necks.add_registry("");
    r.necks.add("", "select_indices",
                {[](const json& a, const std::vector<FeatureSpec>&) -> std::shared_ptr<Neck> {
                     return std::make_shared<SelectIndices>(int_list_arg(a, "indices", "select_indices"));
                 },
                 json{{"indices", nullptr}}, json::object()});
    r.necks.add("", "reshape_tokens_to_image",
                {[](const json& a, const std::vector<FeatureSpec>& in) -> std::shared_ptr<Neck> {
                     const std::string where = "reshape_tokens_to_image";
                     if (in.empty() || in.front().form != FeatureForm::Token) {
                         fail(ErrorCode::TokenCountMismatch, where + " expects token-form input, got " + describe(in));
                     }
                     int64_t height = in.front().height;
                     int64_t width = in.front().width;
                     int64_t frames = in.front().frames;
                     if (!a.at("grid_hw").is_null()) {
                         auto hw = int_list_arg(a, "grid_hw", where);
                         if (hw.size() != 2) {
                             fail(ErrorCode::TypeError, where + ": grid_hw must list [height, width]");
                         }
                         height = hw[0];
                         width = hw[1];
                     }
                     if (!a.at("effective_time_dim").is_null()) {
                         frames = int_arg(a, "effective_time_dim", where);
                     }
                     const auto reduce_name = arg<std::string>(a, "temporal_reduce", where);
                     TemporalReduce reduce = TemporalReduce::Mean;
                     if (reduce_name == "concat_channels") {
                         reduce = TemporalReduce::ConcatChannels;
                     } else if (reduce_name != "mean") {
                         fail(ErrorCode::InvalidArgument, where + ": temporal_reduce must be 'mean' or 'concat_channels'");
                     }
                     return std::make_shared<ReshapeTokensToImage>(height, width, frames, reduce);
                 },
                 json{{"grid_hw", nullptr}, {"effective_time_dim", nullptr}, {"temporal_reduce", "mean"}},
                 json::object()});
    r.necks.add("", "interpolate_to_pyramid",
                {[](const json& a, const std::vector<FeatureSpec>& in) -> std::shared_ptr<Neck> {
                     return std::make_shared<InterpolateToPyramid>(
                         in, arg<std::vector<double>>(a, "scales", "interpolate_to_pyramid"));
                 },
                 json{{"scales", {4.0, 2.0, 1.0, 0.5}}}, json::object()});
}

void add_decoders(ComponentRegistries& r) {
    r.decoders.add_registry("");
    r.decoders.add("", "pyramid_fusion",
                   {[](const json& a, const std::vector<FeatureSpec>& in) -> std::shared_ptr<Decoder> {
                        const std::string where = "pyramid_fusion";
                        return std::make_shared<PyramidFusionDecoder>(
                            in, int_arg(a, "channels", where), int_list_arg(a, "pool_sizes", where),
                            static_cast<std::size_t>(int_arg(a, "num_levels", where)));
                    },
                    json{{"channels", 128}, {"pool_sizes", {1, 2, 3, 6}}, {"num_levels", 4}},
                    json{{"input_form", "grid"}}});
    r.decoders.add("", "fcn",
                   {[](const json& a, const std::vector<FeatureSpec>& in) -> std::shared_ptr<Decoder> {
                        return std::make_shared<FcnDecoder>(in, int_arg(a, "channels", "fcn"),
                                                            int_arg(a, "num_convs", "fcn"));
                    },
                    json{{"channels", 128}, {"num_convs", 2}}, json{{"input_form", "grid"}}});
    r.decoders.add("", "identity",
                   {[](const json&, const std::vector<FeatureSpec>& in) -> std::shared_ptr<Decoder> {
                        return std::make_shared<IdentityDecoder>(in);
                    },
                    json::object(), json{{"input_form", "any"}}});
}

void add_heads(ComponentRegistries& r) {
    r.heads.add_registry("");
    for (auto kind : {TaskKind::Segmentation, TaskKind::Regression, TaskKind::Classification}) {
        r.heads.add("", to_string(kind),
                    {[kind](const json& a, const HeadSpec& spec, const FeatureSpec& in) -> std::shared_ptr<Head> {
                         HeadSpec resolved = spec;
                         resolved.kind = kind;
                         resolved.dropout = arg<double>(a, "dropout", to_string(kind) + " head");
                         return std::make_shared<Head>(resolved, in);
                     },
                     json{{"dropout", 0.0}}, json::object()});
    }
}

}  // namespace

void register_builtin_components(ComponentRegistries& registries) {
    add_backbones(registries);
    add_necks(registries);
    add_decoders(registries);
    add_heads(registries);
}

const ComponentRegistries& builtin_registries() {
    static const ComponentRegistries registries = [] {
        ComponentRegistries r;
        register_builtin_components(r);
        return r;
    }();
    return registries;
}

json resolve_args(const json& defaults, const json& user, const std::string& where) {
    json merged = defaults.is_object() ? defaults : json::object();
    if (user.is_null()) {
        return merged;
    }
    if (!user.is_object()) {
        fail(ErrorCode::TypeError, where + ": args must be a mapping");
    }
    std::vector<std::string> valid;
    for (const auto& [key, _] : merged.items()) {
        valid.push_back(key);
    }
    for (const auto& [key, value] : user.items()) {
        if (!merged.contains(key)) {
            auto near = nearest_names(key, valid, 1);
            fail(ErrorCode::UnknownKey, where + ": unknown argument '" + key + "'" +
                                            (near.empty() ? std::string(" (takes no arguments)")
                                                          : "; did you mean '" + near.front() + "'?"));
        }
        const auto& fallback = merged.at(key);
        if (!fallback.is_null() && !value.is_null() && !same_category(fallback, value)) {
            fail(ErrorCode::TypeError, where + ": argument '" + key + "' expects " + fallback.type_name() +
                                           ", got " + value.type_name());
        }
        merged[key] = value;
    }
    return merged;
}

}  // namespace geotune::models
