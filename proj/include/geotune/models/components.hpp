// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geotune/models/backbones.hpp"
#include "geotune/models/decoders.hpp"
#include "geotune/models/necks.hpp"
#include "geotune/registry.hpp"

namespace geotune::models {

using BackboneBuilder =
    std::function<std::shared_ptr<Backbone>(const nlohmann::json& args, const std::vector<std::string>& bands)>;
using NeckBuilder =
    std::function<std::shared_ptr<Neck>(const nlohmann::json& args, const std::vector<FeatureSpec>& in)>;
using DecoderBuilder =
    std::function<std::shared_ptr<Decoder>(const nlohmann::json& args, const std::vector<FeatureSpec>& in)>;
using HeadBuilder =
    std::function<std::shared_ptr<Head>(const nlohmann::json& args, const HeadSpec& spec, const FeatureSpec& in)>;

enum class ComponentKind { Backbone, Neck, Decoder, Head };

std::string to_string(ComponentKind kind);
ComponentKind parse_component_kind(const std::string& text);

struct ComponentRegistries {
    RegistrySet<BackboneBuilder> backbones{"backbone"};
    RegistrySet<NeckBuilder> necks{"neck"};
    RegistrySet<DecoderBuilder> decoders{"decoder"};
    RegistrySet<HeadBuilder> heads{"head"};

    std::vector<std::string> list(ComponentKind kind) const;
    /// Declared default arguments for a component, or null if unknown.
    nlohmann::json default_args(ComponentKind kind, const std::string& name) const;
};

/// The static manifest: toyvit and conv_pyramid (namespace "toy"), the three
/// necks, pyramid_fusion / fcn / identity decoders and one head per task kind.
void register_builtin_components(ComponentRegistries& registries);

/// Process-wide registries, populated once from the manifest and read-only after.
const ComponentRegistries& builtin_registries();

/// Overlays `user` on `defaults`. Keys absent from `defaults` raise UnknownKey
/// (naming the nearest valid key); values whose JSON type differs from a
/// non-null default raise TypeError.
nlohmann::json resolve_args(const nlohmann::json& defaults, const nlohmann::json& user, const std::string& where);

}  // namespace geotune::models
