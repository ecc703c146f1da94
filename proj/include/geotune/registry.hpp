// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "geotune/error.hpp"
#include "geotune/strings.hpp"

namespace geotune {

/// Everything needed to construct one component: the builder itself, the
/// argument defaults it accepts, and free-form metadata (e.g. output form).
template <typename Builder>
struct Descriptor {
    Builder build;
    nlohmann::json default_args = nlohmann::json::object();
    nlohmann::json metadata = nlohmann::json::object();
};

/// The namespace tag is the text before the first underscore of a qualified name.
std::pair<std::string, std::string> split_qualified(const std::string& qualified);

template <typename Builder>
class Registry {
public:
    explicit Registry(std::string ns = {}) : namespace_(std::move(ns)) {}

    const std::string& ns() const noexcept { return namespace_; }

    void add(const std::string& name, Descriptor<Builder> descriptor) {
        if (name.empty()) {
            fail(ErrorCode::InvalidName, "component name must be non-empty");
        }
        if (entries_.contains(name)) {
            fail(ErrorCode::DuplicateName, "'" + name + "' is already registered" +
                                               (namespace_.empty() ? "" : " in namespace '" + namespace_ + "'"));
        }
        entries_.emplace(name, std::move(descriptor));
    }

    const Descriptor<Builder>* find(const std::string& name) const {
        auto it = entries_.find(name);
        return it == entries_.end() ? nullptr : &it->second;
    }

    bool contains(const std::string& name) const { return entries_.contains(name); }

    // std::map keeps this sorted.
    std::vector<std::string> list() const {
        std::vector<std::string> names;
        names.reserve(entries_.size());
        for (const auto& [name, _] : entries_) {
            names.push_back(name);
        }
        return names;
    }

    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::string namespace_;
    std::map<std::string, Descriptor<Builder>> entries_;
};

/// All registries of one component kind, searched in declared priority order.
template <typename Builder>
class RegistrySet {
public:
    explicit RegistrySet(std::string kind) : kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

    Registry<Builder>& add_registry(const std::string& ns) {
        registries_.emplace_back(ns);
        return registries_.back();
    }

    Registry<Builder>& registry(const std::string& ns) {
        for (auto& r : registries_) {
            if (r.ns() == ns) {
                return r;
            }
        }
        return add_registry(ns);
    }

    void add(const std::string& ns, const std::string& name, Descriptor<Builder> descriptor) {
        auto [prefix, rest] = split_qualified(name);
        if (!rest.empty() && is_namespace(prefix)) {
            fail(ErrorCode::InvalidName, "'" + name + "' collides with namespace prefix '" + prefix + "_'");
        }
        registry(ns).add(name, std::move(descriptor));
    }

    const Descriptor<Builder>& resolve(const std::string& qualified) const {
        if (qualified.empty()) {
            fail(ErrorCode::InvalidName, kind_ + " name must be non-empty");
        }
        auto [prefix, rest] = split_qualified(qualified);
        if (!rest.empty()) {
            const Registry<Builder>* owner = nullptr;
            for (const auto& r : registries_) {
                if (!r.ns().empty() && r.ns() == prefix) {
                    if (owner != nullptr) {
                        fail(ErrorCode::AmbiguousNamespace,
                             "namespace '" + prefix + "' is declared by more than one " + kind_ + " registry");
                    }
                    owner = &r;
                }
            }
            if (owner != nullptr) {
                if (const auto* d = owner->find(rest)) {
                    return *d;
                }
                not_found(qualified, owner->list());
            }
        }
        for (const auto& r : registries_) {
            if (const auto* d = r.find(qualified)) {
                return *d;
            }
        }
        not_found(qualified, list());
    }

    bool contains(const std::string& qualified) const {
        try {
            resolve(qualified);
            return true;
        } catch (const Error&) {
            return false;
        }
    }

    std::vector<std::string> list() const {
        std::vector<std::string> names;
        for (const auto& r : registries_) {
            auto part = r.list();
            names.insert(names.end(), part.begin(), part.end());
        }
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        return names;
    }

private:
    bool is_namespace(const std::string& prefix) const {
        return std::any_of(registries_.begin(), registries_.end(),
                           [&](const auto& r) { return !r.ns().empty() && r.ns() == prefix; });
    }

    [[noreturn]] void not_found(const std::string& name, const std::vector<std::string>& pool) const {
        auto suggestions = nearest_names(name, pool);
        std::string message = "unknown " + kind_ + " '" + name + "'";
        if (!suggestions.empty()) {
            message += "; did you mean: " + join(suggestions, ", ");
        }
        fail(ErrorCode::NotFound, message);
    }

    std::string kind_;
    std::vector<Registry<Builder>> registries_;
};

}  // namespace geotune
