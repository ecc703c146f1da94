// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest_torch.hpp"

#include <cmath>
#include <limits>

#include "geotune/engine/metrics.hpp"
#include "geotune/engine/schedule.hpp"
#include "geotune/random.hpp"
#include "support.hpp"

using namespace geotune;
using namespace geotune::engine;
using geotune::testing::thrown_code;

namespace {

struct HandIou {
    std::vector<std::optional<double>> iou;
    double miou = 0.0;
};

// Pixel-by-pixel counting with plain loops.
HandIou hand_iou(const std::vector<int64_t>& pred, const std::vector<int64_t>& target, int64_t k, int64_t ignore) {
    std::vector<int64_t> tp(k, 0), fp(k, 0), fn(k, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (target[i] == ignore) {
            continue;
        }
        if (pred[i] == target[i]) {
            ++tp[target[i]];
        } else {
            ++fp[pred[i]];
            ++fn[target[i]];
        }
    }
    HandIou out;
    double sum = 0.0;
    int present = 0;
    for (int64_t c = 0; c < k; ++c) {
        const int64_t uni = tp[c] + fp[c] + fn[c];
        if (uni == 0) {
            out.iou.emplace_back();
            continue;
        }
        out.iou.emplace_back(static_cast<double>(tp[c]) / static_cast<double>(uni));
        sum += *out.iou.back();
        ++present;
    }
    out.miou = present ? sum / present : 0.0;
    return out;
}

torch::Tensor as_tensor(const std::vector<int64_t>& v, int64_t h, int64_t w) {
    return torch::tensor(v, torch::kLong).view({h, w});
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("IoU of a hand-worked 3x3 case") {
        // target  0 0 1 / 1 1 -1 / 2 2 2 ; prediction 0 1 1 / 1 0 2 / 2 2 0
        auto target = as_tensor({0, 0, 1, 1, 1, -1, 2, 2, 2}, 3, 3);
        auto pred = as_tensor({0, 1, 1, 1, 0, 2, 2, 2, 0}, 3, 3);
        auto r = compute_iou(pred, target, 3, -1);
        // class 0: tp 1, fp 2, fn 1; class 1: tp 2, fp 1, fn 1; class 2: tp 2, fp 0, fn 1
        REQUIRE(r.per_class_iou.size() == 3);
        CHECK(*r.per_class_iou[0] == doctest::Approx(0.25));
        CHECK(*r.per_class_iou[1] == doctest::Approx(0.5));
        CHECK(*r.per_class_iou[2] == doctest::Approx(2.0 / 3.0));
        CHECK(r.miou == doctest::Approx((0.25 + 0.5 + 2.0 / 3.0) / 3.0));
        CHECK(r.count == 8);
        CHECK(r.accuracy == doctest::Approx(5.0 / 8.0));
        auto cm = confusion_matrix(pred, target, 3, -1);
        CHECK(cm[0][1].item<int64_t>() == 1);
        CHECK(cm.sum().item<int64_t>() == 8);
    }

    TEST_CASE("IoU matches hand counts on random masks") {
        Rng rng(5);
        for (int rep = 0; rep < 50; ++rep) {
            const int64_t k = 2 + static_cast<int64_t>(rng.below(4));
            std::vector<int64_t> pred(64), target(64);
            for (int i = 0; i < 64; ++i) {
                pred[i] = static_cast<int64_t>(rng.below(k));
                target[i] = rng.uniform() < 0.15 ? 255 : static_cast<int64_t>(rng.below(k));
            }
            auto hand = hand_iou(pred, target, k, 255);
            auto r = compute_iou(as_tensor(pred, 8, 8), as_tensor(target, 8, 8), k, 255);
            REQUIRE(r.per_class_iou.size() == static_cast<std::size_t>(k));
            for (int64_t c = 0; c < k; ++c) {
                CHECK(r.per_class_iou[c].has_value() == hand.iou[c].has_value());
                if (hand.iou[c]) {
                    CHECK(*r.per_class_iou[c] == *hand.iou[c]);
                }
            }
            CHECK(r.miou == hand.miou);
        }
    }

    TEST_CASE("ignored pixels never count") {
        auto target = torch::full({4, 4}, -1, torch::kLong);
        auto r = compute_iou(torch::zeros({4, 4}, torch::kLong), target, 2, -1);
        CHECK(r.empty);
        CHECK(r.count == 0);
        target[0][0] = 1;
        auto pred = torch::randint(0, 2, {4, 4}, torch::kLong);
        pred[0][0] = 1;
        auto only = compute_iou(pred, target, 2, -1);
        CHECK(!only.per_class_iou[0].has_value());
        CHECK(*only.per_class_iou[1] == 1.0);
        CHECK(only.miou == 1.0);
    }

    TEST_CASE("invalid inputs") {
        auto a = torch::zeros({2, 2}, torch::kLong);
        CHECK(thrown_code([&] { compute_iou(a, torch::zeros({2, 3}, torch::kLong), 2, -1); }) ==
              ErrorCode::ShapeMismatch);
        CHECK(thrown_code([&] { compute_iou(a, torch::full({2, 2}, 4, torch::kLong), 2, -1); }) ==
              ErrorCode::IndexOutOfRange);
    }

    TEST_CASE("accumulating batches equals one pass") {
        auto logits = torch::randn({6, 3, 5, 5});
        auto labels = torch::randint(0, 3, {6, 5, 5}, torch::kLong);
        labels[0][0][0] = -1;
        MetricAccumulator acc(TaskKind::Segmentation, 3, -1);
        acc.add(logits.slice(0, 0, 2), labels.slice(0, 0, 2));
        acc.add(logits.slice(0, 2, 6), labels.slice(0, 2, 6));
        auto whole = compute_iou(logits.argmax(1), labels, 3, -1);
        auto r = acc.report();
        CHECK(r.miou == whole.miou);
        CHECK(r.count == whole.count);

        MetricAccumulator reg(TaskKind::Regression, 0, -1);
        reg.add(torch::tensor({1.0F, 2.0F, 4.0F}).view({3, 1, 1, 1}), torch::tensor({0.0F, 2.0F, 2.0F}).view({3, 1, 1}));
        CHECK(reg.report().rmse == doctest::Approx(std::sqrt(5.0 / 3.0)));
        CHECK(reg.report().mae == doctest::Approx(1.0));

        MetricAccumulator cls(TaskKind::Classification, 2, -1);
        cls.add(torch::tensor({1.0F, 0.0F, 0.0F, 1.0F, 3.0F, 2.0F}).view({3, 2}), torch::tensor({0, 0, 1}, torch::kLong));
        CHECK(cls.report().accuracy == doctest::Approx(1.0 / 3.0));
        CHECK(cls.report().flat().count("accuracy") == 1);
        CHECK(metric_names(TaskKind::Segmentation, 2) == std::vector<std::string>{"miou", "accuracy", "iou_0", "iou_1"});
    }
}

TEST_SUITE("schedule") {
    TEST_CASE("monitor direction") {
        CHECK(monitor_mode("val_loss") == MonitorMode::Min);
        CHECK(monitor_mode("val_rmse") == MonitorMode::Min);
        CHECK(monitor_mode("val_mae") == MonitorMode::Min);
        CHECK(monitor_mode("val_miou") == MonitorMode::Max);
        CHECK(monitor_mode("val_accuracy") == MonitorMode::Max);
    }

    TEST_CASE("early stopping fires patience epochs after the best") {
        for (int64_t patience : {1, 2, 3, 5}) {
            for (int64_t best_epoch : {0, 3, 7}) {
                EarlyStopping stop(patience, MonitorMode::Min);
                int64_t stopped = -1;
                for (int64_t e = 0; e < 40 && stopped < 0; ++e) {
                    const double v = e <= best_epoch ? 10.0 - static_cast<double>(e) : 10.0 - best_epoch + 0.5;
                    if (stop.step(v)) {
                        stopped = e;
                    }
                }
                CHECK(stopped == best_epoch + patience);
                CHECK(stop.best() == 10.0 - static_cast<double>(best_epoch));
            }
        }
        EarlyStopping up(2, MonitorMode::Max);
        CHECK(!up.step(0.5));
        CHECK(up.improved());
        CHECK(!up.step(0.5));
        CHECK(!up.improved());
        CHECK(up.step(std::numeric_limits<double>::quiet_NaN()));
        CHECK(thrown_code([] { EarlyStopping(0, MonitorMode::Min); }) == ErrorCode::InvalidArgument);
    }

    TEST_CASE("plateau reductions fire every patience+1 flat epochs") {
        for (int64_t patience : {0, 1, 2, 4}) {
            const int64_t best_epoch = 3;
            PlateauConfig cfg;
            cfg.factor = 0.5;
            cfg.patience = patience;
            cfg.threshold = 1e-4;
            cfg.min_lr = 0.0;
            PlateauScheduler sched(1.0, cfg, MonitorMode::Min);
            std::vector<int64_t> reductions;
            double lr = 1.0;
            for (int64_t e = 0; e < 20; ++e) {
                const double v = e <= best_epoch ? 5.0 - static_cast<double>(e) : 2.0;
                const double next = sched.step(v);
                if (next < lr) {
                    CHECK(next == lr * 0.5);
                    reductions.push_back(e);
                }
                lr = next;
            }
            REQUIRE(!reductions.empty());
            for (std::size_t i = 0; i < reductions.size(); ++i) {
                CHECK(reductions[i] == best_epoch + static_cast<int64_t>(i + 1) * (patience + 1));
            }
        }
    }

    TEST_CASE("plateau threshold is relative and lr is floored") {
        PlateauConfig cfg;
        cfg.factor = 0.1;
        cfg.patience = 0;
        cfg.threshold = 0.01;
        cfg.min_lr = 0.05;
        PlateauScheduler sched(1.0, cfg, MonitorMode::Min);
        CHECK(sched.step(100.0) == 1.0);
        CHECK(sched.step(99.5) == doctest::Approx(0.1));  // less than 1% better
        CHECK(sched.step(98.0) == doctest::Approx(0.1));  // more than 1% better than 100
        CHECK(sched.step(98.0) == doctest::Approx(0.05));
        CHECK(sched.step(98.0) == doctest::Approx(0.05));
        CHECK(thrown_code([] { PlateauScheduler(0.0, PlateauConfig{}, MonitorMode::Min); }) ==
              ErrorCode::InvalidArgument);
        PlateauConfig bad;
        bad.factor = 1.5;
        CHECK(thrown_code([&] { PlateauScheduler(1.0, bad, MonitorMode::Min); }) == ErrorCode::InvalidArgument);
    }
}
