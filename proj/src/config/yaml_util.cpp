// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/config/yaml_util.hpp"

#include <cmath>
#include <limits>
#include <regex>

#include "geotune/error.hpp"
#include "geotune/strings.hpp"

namespace geotune::config {

using nlohmann::json;

YAML::Node load_yaml(const std::string& text) {
    try {
        return YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(ErrorCode::SyntaxError, "YAML syntax error: " + e.msg, e.mark.line, e.mark.column);
    }
}

ScalarType scalar_type(const YAML::Node& node) {
    if (!node.IsDefined() || node.IsNull()) {
        return ScalarType::Null;
    }
    if (!node.IsScalar()) {
        return ScalarType::String;
    }
    if (node.Tag() == "!") {
        return ScalarType::String;
    }
    static const std::regex int_re(R"([-+]?[0-9]+)");
    static const std::regex float_re(R"([-+]?(\.[0-9]+|[0-9]+(\.[0-9]*)?)([eE][-+]?[0-9]+)?)");
    static const std::regex special_re(R"([-+]?\.(inf|Inf|INF)|\.(nan|NaN|NAN))");
    const auto& s = node.Scalar();
    if (s == "~" || s == "null" || s == "Null" || s == "NULL" || s.empty()) {
        return ScalarType::Null;
    }
    if (s == "true" || s == "True" || s == "TRUE" || s == "false" || s == "False" || s == "FALSE") {
        return ScalarType::Bool;
    }
    if (std::regex_match(s, int_re)) {
        return ScalarType::Int;
    }
    if (std::regex_match(s, float_re) || std::regex_match(s, special_re)) {
        return ScalarType::Float;
    }
    return ScalarType::String;
}

namespace {

double parse_float(const std::string& s) {
    if (s.find("inf") != std::string::npos || s.find("Inf") != std::string::npos ||
        s.find("INF") != std::string::npos) {
        return s.front() == '-' ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    }
    if (s.find("nan") != std::string::npos || s.find("NaN") != std::string::npos ||
        s.find("NAN") != std::string::npos) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return std::stod(s);
}

}  // namespace

json yaml_to_json(const YAML::Node& node) {
    if (!node.IsDefined() || node.IsNull()) {
        return nullptr;
    }
    if (node.IsSequence()) {
        json arr = json::array();
        for (const auto& item : node) {
            arr.push_back(yaml_to_json(item));
        }
        return arr;
    }
    if (node.IsMap()) {
        json obj = json::object();
        for (const auto& kv : node) {
            obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
        }
        return obj;
    }
    const auto& s = node.Scalar();
    switch (scalar_type(node)) {
        case ScalarType::Null:
            return nullptr;
        case ScalarType::Bool:
            return s[0] == 't' || s[0] == 'T';
        case ScalarType::Int:
            try {
                return std::stoll(s);
            } catch (const std::out_of_range&) {
                return std::stod(s);
            }
        case ScalarType::Float:
            return parse_float(s);
        case ScalarType::String:
            return s;
    }
    return s;
}

std::string quote(std::string_view text) { return json(std::string(text)).dump(); }

std::string json_to_yaml_flow(const json& value) {
    switch (value.type()) {
        case json::value_t::null:
            return "null";
        case json::value_t::boolean:
            return value.get<bool>() ? "true" : "false";
        case json::value_t::number_integer:
        case json::value_t::number_unsigned:
            return value.dump();
        case json::value_t::number_float:
            return format_double(value.get<double>());
        case json::value_t::string:
            return quote(value.get<std::string>());
        case json::value_t::array: {
            std::vector<std::string> items;
            for (const auto& v : value) {
                items.push_back(json_to_yaml_flow(v));
            }
            return "[" + join(items, ", ") + "]";
        }
        case json::value_t::object: {
            std::vector<std::string> items;
            for (const auto& [k, v] : value.items()) {
                items.push_back(quote(k) + ": " + json_to_yaml_flow(v));
            }
            return "{" + join(items, ", ") + "}";
        }
        default:
            return value.dump();
    }
}

YAML::Node merge_yaml(const YAML::Node& base, const YAML::Node& over) {
    // Missing keys of a const map are invalid nodes; only IsDefined is safe on them.
    if (!base.IsDefined()) {
        return over.IsDefined() ? YAML::Clone(over) : YAML::Node();
    }
    if (!over.IsDefined() || (over.IsNull() && base.IsMap())) {
        return YAML::Clone(base);
    }
    if (!base.IsMap() || !over.IsMap()) {
        return YAML::Clone(over);
    }
    YAML::Node out = YAML::Clone(base);
    for (const auto& kv : over) {
        const auto key = kv.first.as<std::string>();
        out[key] = merge_yaml(base[key], kv.second);
    }
    return out;
}

void set_yaml_path(YAML::Node& root, const std::string& dotted, const YAML::Node& value) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        parts.push_back(dotted.substr(start, dot - start));
        if (dot == std::string::npos) {
            break;
        }
        start = dot + 1;
    }
    for (const auto& p : parts) {
        if (p.empty()) {
            fail(ErrorCode::InvalidArgument, "malformed parameter path '" + dotted + "'");
        }
    }
    // yaml-cpp nodes are handles, so walking by reassignment would rebind;
    // rebuild the chain bottom-up instead.
    std::vector<YAML::Node> chain{root};
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        YAML::Node next = chain.back()[parts[i]];
        if (!next.IsMap()) {
            next = YAML::Node(YAML::NodeType::Map);
        }
        chain.push_back(next);
    }
    chain.back()[parts.back()] = value;
    for (std::size_t i = chain.size() - 1; i > 0; --i) {
        chain[i - 1][parts[i - 1]] = chain[i];
    }
    root = chain.front();
}

std::string emit_yaml(const YAML::Node& node) {
    YAML::Emitter out;
    out << node;
    return std::string(out.c_str()) + "\n";
}

}  // namespace geotune::config
