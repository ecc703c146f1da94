// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace geotune::data {

/// Reader/writer for one on-disk raster encoding. Tensors are (bands, H, W).
class RasterFormat {
public:
    virtual ~RasterFormat() = default;

    virtual std::string name() const = 0;
    virtual bool can_read(const std::filesystem::path& path) const = 0;
    virtual torch::Tensor read(const std::filesystem::path& path) const = 0;
    virtual void write(const std::filesystem::path& path, const torch::Tensor& bands_hw) const = 0;
    /// Sibling files written alongside `path` (e.g. header sidecars).
    virtual std::vector<std::filesystem::path> companions(const std::filesystem::path&) const { return {}; }
};

/// RAW-BSQ: little-endian band-sequential samples in `<name>.bsq`, described
/// by the JSON sidecar `<name>.bsq.json`:
///   {"height": H, "width": W, "bands": C, "dtype": "float32"|"int16", "order": "bsq"}
/// int16 tensors are written as int16; everything else as float32.
class RawBsqFormat : public RasterFormat {
public:
    std::string name() const override { return "raw-bsq"; }
    bool can_read(const std::filesystem::path& path) const override;
    torch::Tensor read(const std::filesystem::path& path) const override;
    void write(const std::filesystem::path& path, const torch::Tensor& bands_hw) const override;
    std::vector<std::filesystem::path> companions(const std::filesystem::path& path) const override;

    static std::filesystem::path sidecar(const std::filesystem::path& path);
};

void register_raster_format(std::shared_ptr<RasterFormat> format);

/// First registered format that can read `path` (RAW-BSQ is always present).
const RasterFormat& raster_format_for(const std::filesystem::path& path);

/// True when some registered format claims `path`.
bool can_read_raster(const std::filesystem::path& path);

torch::Tensor read_raster(const std::filesystem::path& path);
void write_raster(const std::filesystem::path& path, const torch::Tensor& bands_hw);

}  // namespace geotune::data
