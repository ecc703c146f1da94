// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geotune/iterate/study.hpp"

namespace geotune::iterate {

namespace fs = std::filesystem;

struct ReportFiles {
    fs::path csv;
    fs::path svg;
    fs::path json;
};

/// trials.csv (trial_id, one column per parameter, objective, status, seed),
/// trials.svg (objective against the first continuous parameter, colored by
/// the second parameter, best trial drawn as a diamond) and report.json.
ReportFiles emit_report(const StudyState& state, const fs::path& out_dir);

std::string trials_csv(const StudyState& state);
std::string trials_svg(const StudyState& state);

struct CsvTrial {
    int64_t trial_id = 0;
    std::optional<double> objective;
    std::string status;
};

/// Reads back the id, objective and status columns of trials.csv.
std::vector<CsvTrial> read_trials_csv(const fs::path& path);

}  // namespace geotune::iterate
