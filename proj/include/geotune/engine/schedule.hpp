// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

namespace geotune::engine {

enum class MonitorMode { Min, Max };

/// Losses and error metrics are minimized, everything else maximized.
MonitorMode monitor_mode(const std::string& metric);

struct PlateauConfig {
    double factor = 0.5;
    int64_t patience = 5;
    /// Relative improvement threshold.
    double threshold = 1e-8;
    double min_lr = 1e-7;

    bool operator==(const PlateauConfig&) const = default;
};

/// Reduce-on-plateau: after more than `patience` consecutive epochs without
/// a relative improvement, lr <- max(lr * factor, min_lr).
class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, PlateauConfig config, MonitorMode mode);

    /// Feeds one epoch's monitored value; returns the lr for the next epoch.
    double step(double value);

    double lr() const noexcept { return lr_; }
    int64_t bad_epochs() const noexcept { return bad_; }
    double best() const noexcept { return best_; }

private:
    bool improves(double value) const;

    double lr_;
    PlateauConfig config_;
    MonitorMode mode_;
    double best_;
    int64_t bad_ = 0;
};

/// Stops once `patience` consecutive epochs fail to strictly improve on the
/// best monitored value.
class EarlyStopping {
public:
    EarlyStopping(int64_t patience, MonitorMode mode);

    /// Returns true when training should stop after this epoch.
    bool step(double value);
    /// Whether the last step set a new best.
    bool improved() const noexcept { return improved_; }
    double best() const noexcept { return best_; }
    int64_t bad_epochs() const noexcept { return bad_; }

private:
    int64_t patience_;
    MonitorMode mode_;
    double best_;
    int64_t bad_ = 0;
    bool improved_ = false;
};

}  // namespace geotune::engine
