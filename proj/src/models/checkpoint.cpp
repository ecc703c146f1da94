// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/models/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "geotune/error.hpp"

namespace geotune::models {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

std::string dtype_name(torch::ScalarType type) {
    switch (type) {
        case torch::kFloat32: return "F32";
        case torch::kFloat64: return "F64";
        case torch::kInt64: return "I64";
        case torch::kInt32: return "I32";
        case torch::kInt16: return "I16";
        case torch::kUInt8: return "U8";
        case torch::kBool: return "BOOL";
        default: break;
    }
    fail(ErrorCode::CheckpointFormat, std::string("unsupported tensor dtype ") + c10::toString(type));
}

torch::ScalarType dtype_from(const std::string& name) {
    if (name == "F32") return torch::kFloat32;
    if (name == "F64") return torch::kFloat64;
    if (name == "I64") return torch::kInt64;
    if (name == "I32") return torch::kInt32;
    if (name == "I16") return torch::kInt16;
    if (name == "U8") return torch::kUInt8;
    if (name == "BOOL") return torch::kBool;
    fail(ErrorCode::CheckpointFormat, "unsupported tensor dtype '" + name + "'");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    json header = json::object();
    header["__metadata__"] = json{{"geotune", checkpoint.metadata.dump()}};

    std::vector<torch::Tensor> payload;
    uint64_t offset = 0;
    for (const auto& [name, tensor] : checkpoint.tensors) {
        auto data = tensor.detach().contiguous().cpu();
        const auto bytes = static_cast<uint64_t>(data.numel()) * data.element_size();
        header[name] = json{{"dtype", dtype_name(data.scalar_type())},
                            {"shape", data.sizes().vec()},
                            {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
        payload.push_back(data);
    }

    std::string text = header.dump();
    while (text.size() % 8 != 0) {
        text.push_back(' ');
    }

    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            fail(ErrorCode::IoError, "cannot write checkpoint " + path.string());
        }
        const uint64_t length = text.size();
        out.write(reinterpret_cast<const char*>(&length), sizeof(length));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& data : payload) {
            out.write(static_cast<const char*>(data.data_ptr()),
                      static_cast<std::streamsize>(data.numel() * data.element_size()));
        }
        if (!out) {
            fail(ErrorCode::IoError, "failed writing checkpoint " + path.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        fail(ErrorCode::CheckpointMissing, "checkpoint not found: " + path.string());
    }
    std::ifstream in(path, std::ios::binary);
    uint64_t length = 0;
    in.read(reinterpret_cast<char*>(&length), sizeof(length));
    const auto file_size = std::filesystem::file_size(path);
    if (!in || length > file_size - sizeof(length)) {
        fail(ErrorCode::CheckpointFormat, "corrupt checkpoint header in " + path.string());
    }
    std::string text(length, '\0');
    in.read(text.data(), static_cast<std::streamsize>(length));
    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::CheckpointFormat, "corrupt checkpoint header in " + path.string() + ": " + e.what());
    }
    const uint64_t data_start = sizeof(length) + length;
    std::string blob(file_size - data_start, '\0');
    in.read(blob.data(), static_cast<std::streamsize>(blob.size()));

    Checkpoint checkpoint;
    for (const auto& [name, entry] : header.items()) {
        if (name == "__metadata__") {
            if (entry.contains("geotune")) {
                checkpoint.metadata = json::parse(entry.at("geotune").get<std::string>());
            }
            continue;
        }
        const auto dtype = dtype_from(entry.at("dtype").get<std::string>());
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        const auto begin = entry.at("data_offsets").at(0).get<uint64_t>();
        const auto end = entry.at("data_offsets").at(1).get<uint64_t>();
        auto tensor = torch::empty(shape, torch::TensorOptions().dtype(dtype));
        const auto bytes = static_cast<uint64_t>(tensor.numel()) * tensor.element_size();
        if (end < begin || end - begin != bytes || end > blob.size()) {
            fail(ErrorCode::CheckpointFormat, "tensor '" + name + "' has an inconsistent byte range");
        }
        std::memcpy(tensor.data_ptr(), blob.data() + begin, bytes);
        checkpoint.tensors.emplace(name, tensor);
    }
    return checkpoint;
}

Checkpoint capture_state(const torch::nn::Module& module, json metadata) {
    Checkpoint checkpoint;
    checkpoint.metadata = std::move(metadata);
    for (const auto& item : module.named_parameters(true)) {
        checkpoint.tensors.emplace(item.key(), item.value().detach().clone());
    }
    for (const auto& item : module.named_buffers(true)) {
        checkpoint.tensors.emplace(item.key(), item.value().detach().clone());
    }
    return checkpoint;
}

void restore_state(torch::nn::Module& module, const Checkpoint& checkpoint, std::string_view prefix) {
    torch::NoGradGuard no_grad;
    auto copy_into = [&](const std::string& name, torch::Tensor& target) {
        const auto key = std::string(prefix) + name;
        auto it = checkpoint.tensors.find(key);
        if (it == checkpoint.tensors.end()) {
            fail(ErrorCode::CheckpointFormat, "checkpoint lacks tensor '" + key + "'");
        }
        if (it->second.sizes() != target.sizes()) {
            std::ostringstream msg;
            msg << "tensor '" << key << "' has shape " << it->second.sizes() << ", model expects " << target.sizes();
            fail(ErrorCode::CheckpointFormat, msg.str());
        }
        target.copy_(it->second);
    };
    for (auto& item : module.named_parameters(true)) {
        copy_into(item.key(), item.value());
    }
    for (auto& item : module.named_buffers(true)) {
        copy_into(item.key(), item.value());
    }
}

}  // namespace geotune::models
