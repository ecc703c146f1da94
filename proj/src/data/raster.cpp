// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/data/raster.hpp"

#include <bit>
#include <fstream>
#include <mutex>

#include <nlohmann/json.hpp>

#include "geotune/error.hpp"

namespace geotune::data {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "RAW-BSQ I/O assumes a little-endian host");

fs::path RawBsqFormat::sidecar(const fs::path& path) {
    auto out = path;
    out += ".json";
    return out;
}

bool RawBsqFormat::can_read(const fs::path& path) const { return path.extension() == ".bsq"; }

std::vector<fs::path> RawBsqFormat::companions(const fs::path& path) const { return {sidecar(path)}; }

torch::Tensor RawBsqFormat::read(const fs::path& path) const {
    const auto header_path = sidecar(path);
    std::ifstream header_in(header_path);
    if (!header_in) {
        fail(ErrorCode::RasterFormat, "missing RAW-BSQ header " + header_path.string());
    }
    json header;
    int64_t height = 0;
    int64_t width = 0;
    int64_t bands = 0;
    std::string dtype;
    try {
        header = json::parse(header_in);
        height = header.at("height").get<int64_t>();
        width = header.at("width").get<int64_t>();
        bands = header.at("bands").get<int64_t>();
        dtype = header.at("dtype").get<std::string>();
        if (header.value("order", std::string("bsq")) != "bsq") {
            fail(ErrorCode::RasterFormat, "only band-sequential order is supported in " + header_path.string());
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::RasterFormat, "malformed RAW-BSQ header " + header_path.string() + ": " + e.what());
    }
    if (height <= 0 || width <= 0 || bands <= 0) {
        fail(ErrorCode::RasterFormat, "non-positive raster dimensions in " + header_path.string());
    }
    torch::ScalarType type;
    if (dtype == "float32") {
        type = torch::kFloat32;
    } else if (dtype == "int16") {
        type = torch::kInt16;
    } else {
        fail(ErrorCode::RasterFormat, "unsupported RAW-BSQ dtype '" + dtype + "'");
    }

    auto tensor = torch::empty({bands, height, width}, torch::TensorOptions().dtype(type));
    const auto bytes = static_cast<std::uintmax_t>(tensor.numel() * tensor.element_size());
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec || size != bytes) {
        fail(ErrorCode::RasterFormat, path.string() + " holds " + (ec ? std::string("nothing") : std::to_string(size)) +
                                          " bytes, header implies " + std::to_string(bytes));
    }
    std::ifstream in(path, std::ios::binary);
    in.read(static_cast<char*>(tensor.data_ptr()), static_cast<std::streamsize>(bytes));
    if (!in) {
        fail(ErrorCode::IoError, "failed reading " + path.string());
    }
    return tensor;
}

void RawBsqFormat::write(const fs::path& path, const torch::Tensor& bands_hw) const {
    if (bands_hw.dim() != 3) {
        fail(ErrorCode::RasterFormat, "rasters are written from (bands, H, W) tensors");
    }
    const bool integer = bands_hw.scalar_type() == torch::kInt16;
    auto data = (integer ? bands_hw : bands_hw.to(torch::kFloat32)).detach().contiguous().cpu();
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(static_cast<const char*>(data.data_ptr()),
                  static_cast<std::streamsize>(data.numel() * data.element_size()));
        if (!out) {
            fail(ErrorCode::IoError, "failed writing " + path.string());
        }
    }
    json header{{"height", data.size(1)},
                {"width", data.size(2)},
                {"bands", data.size(0)},
                {"dtype", integer ? "int16" : "float32"},
                {"order", "bsq"}};
    std::ofstream header_out(sidecar(path), std::ios::trunc);
    header_out << header.dump() << "\n";
    if (!header_out) {
        fail(ErrorCode::IoError, "failed writing " + sidecar(path).string());
    }
}

namespace {

struct FormatList {
    std::mutex mutex;
    std::vector<std::shared_ptr<RasterFormat>> formats{std::make_shared<RawBsqFormat>()};
};

FormatList& formats() {
    static FormatList list;
    return list;
}

}  // namespace

void register_raster_format(std::shared_ptr<RasterFormat> format) {
    auto& list = formats();
    std::lock_guard lock(list.mutex);
    list.formats.insert(list.formats.begin(), std::move(format));
}

const RasterFormat& raster_format_for(const fs::path& path) {
    auto& list = formats();
    std::lock_guard lock(list.mutex);
    for (const auto& f : list.formats) {
        if (f->can_read(path)) {
            return *f;
        }
    }
    fail(ErrorCode::RasterFormat, "no raster format can read '" + path.string() + "'");
}

bool can_read_raster(const fs::path& path) {
    auto& list = formats();
    std::lock_guard lock(list.mutex);
    for (const auto& f : list.formats) {
        if (f->can_read(path)) {
            return true;
        }
    }
    return false;
}

torch::Tensor read_raster(const fs::path& path) { return raster_format_for(path).read(path); }

void write_raster(const fs::path& path, const torch::Tensor& bands_hw) { raster_format_for(path).write(path, bands_hw); }

}  // namespace geotune::data
