// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

// Writes the synthetic blob segmentation set used by the example configs.

#include <iostream>

#include <CLI11.hpp>

#include "geotune/data/fixture.hpp"
#include "geotune/error.hpp"

int main(int argc, char** argv) {
    geotune::data::BlobFixtureOptions opts;
    std::string out;
    CLI::App app{"Generate the blob segmentation fixture", "geotune-fixture"};
    app.add_option("out", out, "Output folder")->required();
    app.add_option("--count", opts.count, "Number of images");
    app.add_option("--size", opts.size, "Image side length");
    app.add_option("--frames", opts.frames, "Time frames per image");
    app.add_option("--train", opts.train, "Images in the train split");
    app.add_option("--val", opts.val, "Images in the val split");
    app.add_option("--seed", opts.seed, "Generator seed");
    CLI11_PARSE(app, argc, argv);
    try {
        geotune::data::write_blob_fixture(out, opts);
    } catch (const geotune::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cout << "wrote " << opts.count << " images to " << out << "\n";
    return 0;
}
