// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/engine/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geotune/error.hpp"

namespace geotune::engine {

MonitorMode monitor_mode(const std::string& metric) {
    for (const char* suffix : {"loss", "rmse", "mae"}) {
        if (metric.ends_with(suffix)) {
            return MonitorMode::Min;
        }
    }
    return MonitorMode::Max;
}

namespace {

double worst(MonitorMode mode) {
    return mode == MonitorMode::Min ? std::numeric_limits<double>::infinity()
                                    : -std::numeric_limits<double>::infinity();
}

}  // namespace

PlateauScheduler::PlateauScheduler(double initial_lr, PlateauConfig config, MonitorMode mode)
    : lr_(initial_lr), config_(config), mode_(mode), best_(worst(mode)) {
    if (!(initial_lr > 0.0)) {
        fail(ErrorCode::InvalidArgument, "learning rate must be positive");
    }
    if (!(config_.factor > 0.0 && config_.factor < 1.0)) {
        fail(ErrorCode::InvalidArgument, "plateau factor must lie in (0, 1)");
    }
    if (config_.patience < 0 || config_.threshold < 0.0 || config_.min_lr < 0.0) {
        fail(ErrorCode::InvalidArgument, "plateau patience, threshold and min_lr must be non-negative");
    }
}

bool PlateauScheduler::improves(double value) const {
    if (std::isnan(value)) {
        return false;
    }
    if (std::isinf(best_)) {
        return mode_ == MonitorMode::Min ? value < best_ : value > best_;
    }
    const double margin = config_.threshold * std::abs(best_);
    return mode_ == MonitorMode::Min ? value < best_ - margin : value > best_ + margin;
}

double PlateauScheduler::step(double value) {
    if (improves(value)) {
        best_ = value;
        bad_ = 0;
    } else {
        ++bad_;
    }
    if (bad_ > config_.patience) {
        const double reduced = std::max(lr_ * config_.factor, config_.min_lr);
        // Skip negligible updates once min_lr is reached.
        if (lr_ - reduced > 1e-12) {
            lr_ = reduced;
        }
        bad_ = 0;
    }
    return lr_;
}

EarlyStopping::EarlyStopping(int64_t patience, MonitorMode mode)
    : patience_(patience), mode_(mode), best_(worst(mode)) {
    if (patience_ < 1) {
        fail(ErrorCode::InvalidArgument, "early stopping patience must be >= 1");
    }
}

bool EarlyStopping::step(double value) {
    improved_ = !std::isnan(value) && (mode_ == MonitorMode::Min ? value < best_ : value > best_);
    if (improved_) {
        best_ = value;
        bad_ = 0;
    } else {
        ++bad_;
    }
    return bad_ >= patience_;
}

}  // namespace geotune::engine
