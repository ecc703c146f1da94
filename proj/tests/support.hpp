// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geotune/config/run_config.hpp"
#include "geotune/data/fixture.hpp"
#include "geotune/error.hpp"

namespace geotune::testing {

namespace fs = std::filesystem;

/// Fresh directory removed on destruction (kept when GEOTUNE_KEEP_TMP is set).
class TempDir {
public:
    explicit TempDir(const std::string& tag = "geotune");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const noexcept { return path_; }
    fs::path operator/(const std::string& child) const { return path_ / child; }

private:
    fs::path path_;
};

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

/// Small blob set: 32x32 rasters, quick to train on.
data::BlobFixtureOptions small_blob_options();

/// Run config for the blob fixture under `fixture_dir` with a tiny conv model.
std::string blob_config_text(const fs::path& fixture_dir, int64_t img_size, int64_t max_epochs, uint64_t seed = 0);

/// Code of the geotune::Error thrown by `fn`, or nullopt when it returns.
template <typename F>
std::optional<ErrorCode> thrown_code(F&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

/// Source-tree path (configs, examples).
fs::path source_path(const std::string& relative);

}  // namespace geotune::testing
