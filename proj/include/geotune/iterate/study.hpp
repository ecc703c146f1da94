// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "geotune/engine/trainer.hpp"
#include "geotune/iterate/benchmark.hpp"
#include "geotune/iterate/tpe.hpp"

namespace geotune::iterate {

namespace fs = std::filesystem;

struct TrialRecord {
    int64_t trial_id = 0;
    ParamValues params;
    /// Best monitored validation value; absent for failed trials.
    std::optional<double> objective;
    std::string status = "complete";
    /// Error class and message of a failed trial.
    std::string error;
    uint64_t seed = 0;
    std::string run_dir;
    nlohmann::json metrics = nlohmann::json::object();

    bool complete() const { return status == "complete" && objective.has_value(); }
    nlohmann::json to_json() const;
    static TrialRecord from_json(const nlohmann::json& j);
};

/// Everything a study file holds. The head record pins the space, sampler
/// settings, seed and the composed base config, so a study can be resumed,
/// rerun or reported from its file alone.
struct StudyState {
    std::string benchmark;
    std::string task;
    ParamSpace space;
    TpeSettings tpe;
    uint64_t seed = 0;
    int64_t n_trials = 0;
    int64_t parallelism = 1;
    std::string monitor = "val_loss";
    /// defaults (+) task overrides, as YAML text.
    std::string base_config;
    fs::path base_dir;
    std::vector<TrialRecord> trials;
    fs::path path;

    nlohmann::json head_json() const;
    std::vector<Observation> observations() const;
    /// Completed trial with the lowest objective (ties: lowest id).
    const TrialRecord* best() const;
    /// Best-so-far objective after each trial (+inf until one completes).
    std::vector<double> best_so_far() const;
};

fs::path study_path(const fs::path& storage, const std::string& benchmark, const std::string& task);

/// Reads a study file. A torn final line (crash mid-append) is ignored.
StudyState load_study(const fs::path& path);

/// Appends one JSON line under an exclusive lock and fsyncs it.
void append_record(const fs::path& path, const nlohmann::json& record);

/// Runs one trial's config and reports the outcome.
using TrialExecutor = std::function<TrialRecord(const config::RunConfig& config, TrialRecord pending)>;

/// In-process execution: builds model and data, fits, records the best
/// monitored value. Failures become failed trials.
TrialRecord run_trial(const config::RunConfig& config, TrialRecord pending);

/// Runs trials in child processes: `<executable> iterate worker --study PATH
/// --trial JSON`. The child writes its TrialRecord to `<run_dir>/trial.json`.
/// Used when parallelism > 1.
struct ProcessLauncher {
    fs::path executable;
};

/// Child side of ProcessLauncher.
TrialRecord run_worker(const fs::path& study_file, const TrialRecord& pending);

struct StudyOptions {
    bool resume = false;
    /// Stop after this many new trials (0 = run to n_trials).
    int64_t max_new_trials = 0;
    TrialExecutor executor = run_trial;
    /// Required when the benchmark asks for parallelism > 1.
    std::optional<ProcessLauncher> launcher;
    std::function<void(const TrialRecord&)> on_trial;
};

/// Drives the sampler for `task` until the study holds n_trials trials.
StudyState run_study(const BenchmarkConfig& bench, const std::string& task, const StudyOptions& options = {});

/// The pending record for trial `trial_id` given the trials completed so far.
TrialRecord suggest_trial(const StudyState& state, int64_t trial_id);

/// Resolved config of a trial's parameters with `seed`.
config::RunConfig trial_config(const StudyState& state, const ParamValues& params, uint64_t seed,
                               const fs::path& run_dir);

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;
    int64_t count = 0;
};

struct RerunResult {
    std::vector<engine::RunRecord> runs;
    std::vector<uint64_t> seeds;
    /// Per metric over runs: val_loss, val_<metric> at the best epoch, test_<metric>.
    std::map<std::string, MetricSummary> summary;
    /// Index of the run with the lowest best validation loss.
    std::size_t selected = 0;
    std::optional<engine::MetricReport> test_metrics;

    nlohmann::json to_json() const;
};

/// Mean and population standard deviation.
MetricSummary summarize(const std::vector<double>& values);

/// Reruns the best trial's config with seeds 0..k-1.
RerunResult rerun_best(const StudyState& state, int64_t k, const fs::path& out_dir = {});

}  // namespace geotune::iterate
