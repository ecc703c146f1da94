// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/data/fixture.hpp"

#include <cstdio>
#include <fstream>

#include <torch/torch.h>

#include "geotune/data/raster.hpp"
#include "geotune/error.hpp"
#include "geotune/random.hpp"

namespace geotune::data {

namespace fs = std::filesystem;

std::vector<std::string> blob_fixture_bands() { return {"blue", "green", "red", "nir", "swir1", "swir2"}; }

namespace {

// Mean reflectance per band for background and blobs.
constexpr double kBackground[6] = {0.10, 0.12, 0.14, 0.30, 0.25, 0.18};
constexpr double kBlob[6] = {0.06, 0.09, 0.07, 0.05, 0.03, 0.02};

std::string blob_id(int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "blob_%03lld", static_cast<long long>(i));
    return buf;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : lines) {
        out << l << '\n';
    }
    if (!out) {
        fail(ErrorCode::IoError, "failed writing " + path.string());
    }
}

}  // namespace

void write_blob_fixture(const fs::path& root, const BlobFixtureOptions& o) {
    if (o.count < 3 || o.train < 1 || o.val < 1 || o.train + o.val >= o.count || o.size < 8 || o.frames < 1) {
        fail(ErrorCode::InvalidArgument, "blob fixture needs count > train + val, size >= 8 and frames >= 1");
    }
    fs::create_directories(root / "data");
    fs::create_directories(root / "splits");
    const auto n = o.size;
    std::vector<std::string> train, val, test;
    for (int64_t i = 0; i < o.count; ++i) {
        Rng rng(derive_seed(o.seed, "blob", static_cast<uint64_t>(i)));
        auto mask = torch::zeros({n, n}, torch::kInt16);
        auto m = mask.accessor<int16_t, 2>();
        const auto blobs = 1 + static_cast<int64_t>(rng.below(3));
        for (int64_t b = 0; b < blobs; ++b) {
            const double cy = rng.uniform(0.15 * n, 0.85 * n);
            const double cx = rng.uniform(0.15 * n, 0.85 * n);
            const double r = rng.uniform(0.08 * n, 0.2 * n);
            for (int64_t y = 0; y < n; ++y) {
                for (int64_t x = 0; x < n; ++x) {
                    const double dy = y + 0.5 - cy;
                    const double dx = x + 0.5 - cx;
                    if (dy * dy + dx * dx <= r * r) {
                        m[y][x] = 1;
                    }
                }
            }
        }
        const auto bands = static_cast<int64_t>(blob_fixture_bands().size());
        auto image = torch::empty({o.frames * bands, n, n}, torch::kFloat32);
        auto img = image.accessor<float, 3>();
        for (int64_t t = 0; t < o.frames; ++t) {
            for (int64_t c = 0; c < bands; ++c) {
                for (int64_t y = 0; y < n; ++y) {
                    for (int64_t x = 0; x < n; ++x) {
                        const double mean = m[y][x] == 1 ? kBlob[c] : kBackground[c];
                        img[t * bands + c][y][x] = static_cast<float>(mean + rng.normal(0.0, o.noise));
                    }
                }
            }
        }
        // One image in four loses a column strip to no-data.
        if (rng.below(4) == 0) {
            const auto x0 = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n - 2)));
            for (int64_t y = 0; y < n; ++y) {
                for (int64_t x = x0; x < x0 + 2; ++x) {
                    m[y][x] = static_cast<int16_t>(o.ignore_index);
                }
            }
        }
        const auto id = blob_id(i);
        write_raster(root / "data" / (id + "_img.bsq"), image);
        write_raster(root / "data" / (id + "_mask.bsq"), mask.unsqueeze(0));
        (i < o.train ? train : i < o.train + o.val ? val : test).push_back(id);
    }
    write_lines(root / "splits" / "train.txt", train);
    write_lines(root / "splits" / "val.txt", val);
    write_lines(root / "splits" / "test.txt", test);
}

void write_classification_fixture(const fs::path& root, const std::vector<std::string>& classes, int64_t per_class,
                                  int64_t size, uint64_t seed) {
    const auto bands = static_cast<int64_t>(blob_fixture_bands().size());
    for (const auto& split : {"train", "val", "test"}) {
        for (std::size_t k = 0; k < classes.size(); ++k) {
            const auto dir = root / split / classes[k];
            fs::create_directories(dir);
            for (int64_t i = 0; i < per_class; ++i) {
                auto gen = at::make_generator<at::CPUGeneratorImpl>(
                    derive_seed(seed, std::string(split) + "/" + classes[k], static_cast<uint64_t>(i)));
                auto image = at::normal(static_cast<double>(k), 0.1, {bands, size, size}, gen).to(torch::kFloat32);
                char name[32];
                std::snprintf(name, sizeof name, "%03lld.bsq", static_cast<long long>(i));
                write_raster(dir / name, image);
            }
        }
    }
}

}  // namespace geotune::data
