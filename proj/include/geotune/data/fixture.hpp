// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace geotune::data {

/// Synthetic two-class segmentation set: noisy 6-band backgrounds with a few
/// spectrally distinct discs (class 1). A thin no-data strip marked with
/// ignore_index is cut into some masks.
struct BlobFixtureOptions {
    int64_t count = 200;
    int64_t size = 64;
    int64_t frames = 1;
    int64_t train = 140;
    int64_t val = 30;
    uint64_t seed = 7;
    double noise = 0.08;
    int64_t ignore_index = -1;
};

/// Band names of the fixture rasters, per frame.
std::vector<std::string> blob_fixture_bands();

/// Writes `<root>/data/blob_NNN_{img,mask}.bsq` (+ sidecars) and
/// `<root>/splits/{train,val,test}.txt`. Deterministic for a given seed.
void write_blob_fixture(const std::filesystem::path& root, const BlobFixtureOptions& options = {});

/// ImageFolder tree `<root>/{train,val,test}/<class>/NNN.bsq` with tiny rasters.
void write_classification_fixture(const std::filesystem::path& root, const std::vector<std::string>& classes,
                                  int64_t per_class, int64_t size = 8, uint64_t seed = 3);

}  // namespace geotune::data
