// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace geotune::models {

inline constexpr std::string_view kToolkitVersion = "0.3.0";

/// Flat parameter-path -> tensor map plus a metadata record.
///
/// On disk this uses the safetensors layout: an 8-byte little-endian header
/// length, a JSON header describing every tensor (dtype, shape, byte range),
/// then the raw little-endian tensor bytes. Our metadata record is stored as
/// a JSON string under "__metadata__" / "geotune".
struct Checkpoint {
    std::map<std::string, torch::Tensor> tensors;
    nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters and buffers of `module`, detached and cloned.
Checkpoint capture_state(const torch::nn::Module& module, nlohmann::json metadata = nlohmann::json::object());

/// Copies tensors named `prefix + name` into the matching parameters/buffers.
/// Every module entry must be present with an identical shape.
void restore_state(torch::nn::Module& module, const Checkpoint& checkpoint, std::string_view prefix = {});

}  // namespace geotune::models
