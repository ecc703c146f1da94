// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/iterate/tpe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "geotune/error.hpp"

namespace geotune::iterate {

using nlohmann::json;

void ParamDef::validate() const {
    if (path.empty()) {
        fail(ErrorCode::BenchmarkConfigError, "parameter path must not be empty");
    }
    if (kind == ParamKind::Categorical) {
        if (choices.empty()) {
            fail(ErrorCode::BenchmarkConfigError, "categorical parameter '" + path + "' needs choices");
        }
        return;
    }
    if (!(std::isfinite(low) && std::isfinite(high) && low < high)) {
        fail(ErrorCode::BenchmarkConfigError, "parameter '" + path + "' needs finite bounds with low < high");
    }
    if (log_scale && !(low > 0.0)) {
        fail(ErrorCode::BenchmarkConfigError, "log-scaled parameter '" + path + "' needs positive bounds");
    }
}

json ParamDef::to_json() const {
    if (kind == ParamKind::Categorical) {
        return {{"path", path}, {"type", "categorical"}, {"choices", choices}};
    }
    return {{"path", path}, {"type", "float"}, {"low", low}, {"high", high}, {"log", log_scale}};
}

ParamDef ParamDef::from_json(const json& j) {
    ParamDef p;
    p.path = j.at("path").get<std::string>();
    if (j.at("type") == "categorical") {
        p.kind = ParamKind::Categorical;
        p.choices = j.at("choices").get<std::vector<json>>();
    } else {
        p.low = j.at("low").get<double>();
        p.high = j.at("high").get<double>();
        p.log_scale = j.at("log").get<bool>();
    }
    return p;
}

json ParamSpace::to_json() const {
    json arr = json::array();
    for (const auto& p : params) {
        arr.push_back(p.to_json());
    }
    return arr;
}

ParamSpace ParamSpace::from_json(const json& j) {
    ParamSpace s;
    for (const auto& p : j) {
        s.params.push_back(ParamDef::from_json(p));
    }
    return s;
}

json TpeSettings::to_json() const {
    return {{"n_startup", n_startup},
            {"gamma", gamma},
            {"n_candidates", n_candidates},
            {"bandwidth_floor", bandwidth_floor}};
}

TpeSettings TpeSettings::from_json(const json& j) {
    TpeSettings s;
    s.n_startup = j.value("n_startup", s.n_startup);
    s.gamma = j.value("gamma", s.gamma);
    s.n_candidates = j.value("n_candidates", s.n_candidates);
    s.bandwidth_floor = j.value("bandwidth_floor", s.bandwidth_floor);
    return s;
}

namespace {

double to_internal(const ParamDef& p, double v) { return p.log_scale ? std::log(v) : v; }
double from_internal(const ParamDef& p, double z) { return p.log_scale ? std::exp(z) : z; }

double clip(const ParamDef& p, double v) { return std::clamp(v, p.low, p.high); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

json uniform_value(const ParamDef& p, Rng& rng) {
    if (p.kind == ParamKind::Categorical) {
        return p.choices[rng.below(p.choices.size())];
    }
    const double z = rng.uniform(to_internal(p, p.low), to_internal(p, p.high));
    return clip(p, from_internal(p, z));
}

std::size_t choice_index(const ParamDef& p, const json& v) {
    for (std::size_t i = 0; i < p.choices.size(); ++i) {
        if (p.choices[i] == v) {
            return i;
        }
    }
    return p.choices.size();
}

}  // namespace

ParzenEstimator::ParzenEstimator(std::vector<double> centers, double low, double high, double bandwidth_floor)
    : centers_(std::move(centers)), low_(low), high_(high) {
    const double range = high_ - low_;
    double sigma = 0.0;
    if (centers_.size() > 1) {
        double mean = 0.0;
        for (double c : centers_) {
            mean += c;
        }
        mean /= static_cast<double>(centers_.size());
        for (double c : centers_) {
            sigma += (c - mean) * (c - mean);
        }
        sigma = std::sqrt(sigma / static_cast<double>(centers_.size()));
    }
    const double scott = 1.06 * sigma * std::pow(static_cast<double>(std::max<std::size_t>(centers_.size(), 1)), -0.2);
    // Few centers get wider kernels so a tight good set cannot collapse the search.
    const double sparse_floor = range / std::min(100.0, static_cast<double>(centers_.size()) + 1.0);
    bandwidth_ = std::max({scott, bandwidth_floor * range, sparse_floor});
    for (double c : centers_) {
        mass_.push_back(normal_cdf((high_ - c) / bandwidth_) - normal_cdf((low_ - c) / bandwidth_));
    }
}

double ParzenEstimator::log_density(double x) const {
    const double n = static_cast<double>(centers_.size());
    const double range = high_ - low_;
    double total = 1.0 / range;  // uniform prior component
    for (std::size_t i = 0; i < centers_.size(); ++i) {
        const double u = (x - centers_[i]) / bandwidth_;
        const double pdf = std::exp(-0.5 * u * u) / (bandwidth_ * std::sqrt(2.0 * std::numbers::pi));
        total += pdf / std::max(mass_[i], 1e-300);
    }
    return std::log(total / (n + 1.0));
}

double ParzenEstimator::sample(Rng& rng) const {
    const auto pick = rng.below(centers_.size() + 1);
    if (pick == centers_.size()) {
        return rng.uniform(low_, high_);
    }
    const double c = centers_[pick];
    // Rejection sampling; every kernel keeps at least half its mass inside.
    for (int attempt = 0; attempt < 64; ++attempt) {
        const double x = rng.normal(c, bandwidth_);
        if (x >= low_ && x <= high_) {
            return x;
        }
    }
    return std::clamp(c, low_, high_);
}

ParamValues random_suggest(const ParamSpace& space, Rng& rng) {
    ParamValues out;
    for (const auto& p : space.params) {
        out[p.path] = uniform_value(p, rng);
    }
    return out;
}

ParamValues tpe_suggest(const ParamSpace& space, const std::vector<Observation>& history, const TpeSettings& settings,
                        Rng& rng) {
    if (space.params.empty()) {
        fail(ErrorCode::BenchmarkConfigError, "optimization space is empty");
    }
    const bool any_complete = std::any_of(history.begin(), history.end(),
                                          [](const Observation& o) { return std::isfinite(o.objective); });
    if (static_cast<int64_t>(history.size()) < settings.n_startup || !any_complete) {
        return random_suggest(space, rng);
    }
    std::vector<const Observation*> order;
    for (const auto& o : history) {
        order.push_back(&o);
    }
    std::stable_sort(order.begin(), order.end(), [](const Observation* a, const Observation* b) {
        const double oa = std::isnan(a->objective) ? std::numeric_limits<double>::infinity() : a->objective;
        const double ob = std::isnan(b->objective) ? std::numeric_limits<double>::infinity() : b->objective;
        return oa != ob ? oa < ob : a->trial_id < b->trial_id;
    });
    const auto n = order.size();
    const auto n_good = std::min(
        n, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(settings.gamma * static_cast<double>(n)))));

    ParamValues out;
    for (const auto& p : space.params) {
        if (p.kind == ParamKind::Categorical) {
            const auto k = p.choices.size();
            std::vector<double> good(k, 1.0);
            std::vector<double> bad(k, 1.0);
            for (std::size_t i = 0; i < n; ++i) {
                auto idx = choice_index(p, order[i]->params.at(p.path));
                if (idx < k) {
                    (i < n_good ? good : bad)[idx] += 1.0;
                }
            }
            double good_total = 0.0;
            double bad_total = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                good_total += good[c];
                bad_total += bad[c];
            }
            std::size_t best = 0;
            double best_score = -std::numeric_limits<double>::infinity();
            for (int64_t draw = 0; draw < settings.n_candidates; ++draw) {
                double u = rng.uniform() * good_total;
                std::size_t c = 0;
                while (c + 1 < k && u >= good[c]) {
                    u -= good[c];
                    ++c;
                }
                const double score = std::log(good[c] / good_total) - std::log(bad[c] / bad_total);
                if (score > best_score) {
                    best_score = score;
                    best = c;
                }
            }
            out[p.path] = p.choices[best];
            continue;
        }
        const double lo = to_internal(p, p.low);
        const double hi = to_internal(p, p.high);
        std::vector<double> good;
        std::vector<double> bad;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = std::clamp(to_internal(p, order[i]->params.at(p.path).get<double>()), lo, hi);
            (i < n_good ? good : bad).push_back(z);
        }
        ParzenEstimator l(good, lo, hi, settings.bandwidth_floor);
        ParzenEstimator g(bad, lo, hi, settings.bandwidth_floor);
        double best = 0.0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int64_t draw = 0; draw < settings.n_candidates; ++draw) {
            const double z = l.sample(rng);
            const double score = l.log_density(z) - g.log_density(z);
            if (score > best_score) {
                best_score = score;
                best = z;
            }
        }
        out[p.path] = clip(p, from_internal(p, best));
    }
    return out;
}

}  // namespace geotune::iterate
