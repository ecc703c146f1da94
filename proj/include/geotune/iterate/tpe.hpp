// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geotune/random.hpp"

namespace geotune::iterate {

enum class ParamKind { Continuous, Categorical };

/// One searchable field, addressed by a dotted path into a run config.
struct ParamDef {
    std::string path;
    ParamKind kind = ParamKind::Continuous;
    double low = 0.0;
    double high = 1.0;
    bool log_scale = false;
    std::vector<nlohmann::json> choices;

    void validate() const;
    nlohmann::json to_json() const;
    static ParamDef from_json(const nlohmann::json& j);
};

struct ParamSpace {
    std::vector<ParamDef> params;

    nlohmann::json to_json() const;
    static ParamSpace from_json(const nlohmann::json& j);
};

using ParamValues = std::map<std::string, nlohmann::json>;

struct TpeSettings {
    int64_t n_startup = 5;
    double gamma = 0.25;
    int64_t n_candidates = 24;
    /// Minimum kernel bandwidth as a fraction of the (transformed) range. The
    /// bandwidth is also never below range / min(100, n + 1) for n centers.
    double bandwidth_floor = 0.01;

    nlohmann::json to_json() const;
    static TpeSettings from_json(const nlohmann::json& j);
};

/// A finished trial as seen by the sampler; failed trials carry +inf.
struct Observation {
    int64_t trial_id = 0;
    ParamValues params;
    double objective = 0.0;
};

/// Uniform draw (log-uniform where flagged) over the whole space.
ParamValues random_suggest(const ParamSpace& space, Rng& rng);

/// Univariate TPE. Uniform while fewer than n_startup trials exist or none
/// completed; otherwise per parameter: split history into the best
/// max(1, ceil(gamma * n)) (ties by trial id) and the rest, fit truncated
/// Gaussian Parzen estimators with a uniform prior to both, draw candidates
/// from the good density and keep the one maximizing l(x) / g(x).
ParamValues tpe_suggest(const ParamSpace& space, const std::vector<Observation>& history, const TpeSettings& settings,
                        Rng& rng);

/// 1-D Parzen estimator over transformed values on [low, high].
class ParzenEstimator {
public:
    ParzenEstimator(std::vector<double> centers, double low, double high, double bandwidth_floor);

    double log_density(double x) const;
    double sample(Rng& rng) const;
    double bandwidth() const noexcept { return bandwidth_; }

private:
    std::vector<double> centers_;
    double low_;
    double high_;
    double bandwidth_;
    std::vector<double> mass_;
};

}  // namespace geotune::iterate
