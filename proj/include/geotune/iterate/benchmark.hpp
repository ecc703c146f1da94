// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "geotune/config/run_config.hpp"
#include "geotune/iterate/tpe.hpp"

namespace geotune::iterate {

namespace fs = std::filesystem;

struct BenchmarkTask {
    std::string name;
    YAML::Node overrides;
};

/// Benchmark document:
///
///   name: blobs
///   seed: 0                 # TPE stream and the shared training seed
///   storage: studies        # study files go to <storage>/<name>/<task>/
///   n_trials: 10
///   n_startup: 5            # also gamma, n_candidates, bandwidth_floor
///   parallelism: 1
///   repeated_seeds: 3
///   defaults: {...}         # a run config
///   tasks: [{name, overrides}]
///   optimization_space:
///     optimizer.lr: {type: float, low: 1e-5, high: 1e-2, log: true}
///     model.head.dropout: {type: categorical, choices: [0.0, 0.1]}
struct BenchmarkConfig {
    std::string name;
    uint64_t seed = 0;
    fs::path storage;
    int64_t n_trials = 10;
    TpeSettings tpe;
    int64_t parallelism = 1;
    int64_t repeated_seeds = 3;
    YAML::Node defaults;
    std::vector<BenchmarkTask> tasks;
    ParamSpace space;
    /// Directory relative paths in the document resolve against.
    fs::path base_dir;

    const BenchmarkTask& task(const std::string& name) const;
};

BenchmarkConfig parse_benchmark(const std::string& text, const fs::path& base_dir = fs::current_path());
BenchmarkConfig parse_benchmark_file(const fs::path& path);

/// defaults (+) task overrides, as a YAML document.
YAML::Node base_document(const BenchmarkConfig& bench, const std::string& task);

/// Writes parameter values into a copy of `base` at their dotted paths.
YAML::Node apply_params(const YAML::Node& base, const ParamValues& params);

/// Parses `base` with `params` applied; `seed` replaces trainer.seed.
config::RunConfig materialize(const YAML::Node& base, const ParamValues& params, uint64_t seed,
                              const fs::path& base_dir);

/// Raises BenchmarkConfigError unless every path addresses a scalar field of
/// the canonical config built from `base`.
void check_param_paths(const YAML::Node& base, const ParamSpace& space, const fs::path& base_dir);

}  // namespace geotune::iterate
