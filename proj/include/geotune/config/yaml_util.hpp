// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

namespace geotune::config {

/// Parses one YAML document; syntax problems raise ConfigError(SyntaxError)
/// with the parser's line and column.
YAML::Node load_yaml(const std::string& text);

enum class ScalarType { Null, Bool, Int, Float, String };

/// YAML 1.2 core-schema typing of a scalar node. Quoted scalars are strings.
ScalarType scalar_type(const YAML::Node& node);

nlohmann::json yaml_to_json(const YAML::Node& node);

/// Flow-style YAML for a JSON value; strings are double-quoted and floats use
/// the shortest round-tripping form.
std::string json_to_yaml_flow(const nlohmann::json& value);

/// Double-quoted YAML scalar.
std::string quote(std::string_view text);

/// Recursive overlay: mappings merge key by key, anything else in `over`
/// replaces the value in `base`. Inputs are not modified.
YAML::Node merge_yaml(const YAML::Node& base, const YAML::Node& over);

/// Sets `root.a.b.c` for dotted path "a.b.c", creating mappings as needed.
void set_yaml_path(YAML::Node& root, const std::string& dotted, const YAML::Node& value);

/// Block-style text of a node.
std::string emit_yaml(const YAML::Node& node);

}  // namespace geotune::config
