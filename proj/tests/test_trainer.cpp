// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest_torch.hpp"

#include "geotune/config/run_config.hpp"
#include "geotune/data/raster.hpp"
#include "geotune/engine/trainer.hpp"
#include "geotune/models/checkpoint.hpp"
#include "support.hpp"

using namespace geotune;
using namespace geotune::engine;
using geotune::testing::read_text;
using geotune::testing::TempDir;
using geotune::testing::thrown_code;

namespace F = torch::nn::functional;

namespace {

// Fixed per-pixel map so the tile oracle can be evaluated independently.
torch::Tensor fixed_forward(const torch::Tensor& patch) {
    auto x = patch.flatten(1, 2);  // (1, T*C, h, w)
    auto a = x.sum(1, true);
    auto b = (x * x).mean(1, true) + 0.25 * torch::sin(3.0 * a);
    return torch::cat({a, b}, 1);
}

// Averages tile logits pixel by pixel with float accumulation in row-major
// tile order.
torch::Tensor tile_oracle(const torch::Tensor& image, int64_t tile, const std::vector<int64_t>& ys,
                          const std::vector<int64_t>& xs) {
    const auto h = image.size(2);
    const auto w = image.size(3);
    std::vector<std::vector<std::vector<float>>> sum(2, std::vector<std::vector<float>>(h, std::vector<float>(w, 0.0F)));
    std::vector<std::vector<float>> count(h, std::vector<float>(w, 0.0F));
    for (auto y : ys) {
        for (auto x : xs) {
            auto out = fixed_forward(image.slice(2, y, y + tile).slice(3, x, x + tile).unsqueeze(0))[0].contiguous();
            auto acc = out.accessor<float, 3>();
            for (int64_t i = 0; i < tile; ++i) {
                for (int64_t j = 0; j < tile; ++j) {
                    for (int64_t k = 0; k < 2; ++k) {
                        sum[k][y + i][x + j] += acc[k][i][j];
                    }
                    count[y + i][x + j] += 1.0F;
                }
            }
        }
    }
    auto result = torch::empty({2, h, w});
    auto r = result.accessor<float, 3>();
    for (int64_t k = 0; k < 2; ++k) {
        for (int64_t i = 0; i < h; ++i) {
            for (int64_t j = 0; j < w; ++j) {
                r[k][i][j] = sum[k][i][j] / count[i][j];
            }
        }
    }
    return result;
}

config::RunConfig small_run(const fs::path& fixture, const fs::path& artifacts, int64_t epochs) {
    auto cfg = config::parse_config(testing::blob_config_text(fixture, 32, epochs), fixture);
    cfg.artifacts_dir = artifacts;
    return cfg;
}

}  // namespace

TEST_SUITE("trainer") {
    TEST_CASE("segmentation loss gradient matches finite differences") {
        torch::manual_seed(3);
        auto logits = torch::randn({2, 3, 3, 3}, torch::kFloat64).requires_grad_(true);
        auto labels = torch::randint(0, 3, {2, 3, 3}, torch::kLong);
        labels[0][1][1] = -1;
        labels[1][2][0] = -1;
        TaskConfig task;
        task.kind = TaskKind::Segmentation;
        task.num_classes = 3;
        auto loss = task_loss(logits, labels, task);
        loss.backward();
        auto grad = logits.grad();
        CHECK(grad.index({0, torch::indexing::Slice(), 1, 1}).abs().max().item<double>() == 0.0);
        CHECK(grad.index({1, torch::indexing::Slice(), 2, 0}).abs().max().item<double>() == 0.0);

        const double eps = 1e-6;
        auto base = logits.detach().clone();
        auto flat_grad = grad.reshape(-1);
        for (int64_t i = 0; i < base.numel(); i += 5) {
            auto plus = base.clone();
            auto minus = base.clone();
            plus.view(-1)[i] += eps;
            minus.view(-1)[i] -= eps;
            const double fd =
                (task_loss(plus, labels, task).item<double>() - task_loss(minus, labels, task).item<double>()) /
                (2 * eps);
            CHECK(flat_grad[i].item<double>() == doctest::Approx(fd).epsilon(1e-5));
        }
        // Hand value for one scored pixel: mean over the 16 scored pixels.
        auto manual = torch::zeros({}, torch::kFloat64);
        int64_t n = 0;
        for (int64_t b = 0; b < 2; ++b) {
            for (int64_t i = 0; i < 3; ++i) {
                for (int64_t j = 0; j < 3; ++j) {
                    const auto c = labels[b][i][j].item<int64_t>();
                    if (c < 0) {
                        continue;
                    }
                    manual -= torch::log_softmax(base.index({b, torch::indexing::Slice(), i, j}), 0)[c];
                    ++n;
                }
            }
        }
        CHECK(n == 16);
        CHECK(loss.item<double>() == doctest::Approx((manual / n).item<double>()).epsilon(1e-12));

        auto all_ignored = torch::full({2, 3, 3}, -1, torch::kLong);
        auto zero = task_loss(logits, all_ignored, task);
        CHECK(zero.item<double>() == 0.0);
    }

    TEST_CASE("regression and classification losses") {
        TaskConfig reg;
        reg.kind = TaskKind::Regression;
        auto out = torch::tensor({1.0, 3.0}, torch::kFloat64).view({2, 1, 1, 1});
        auto target = torch::tensor({0.0, 1.0}, torch::kFloat64).view({2, 1, 1});
        CHECK(task_loss(out, target, reg).item<double>() == doctest::Approx(2.5));
        TaskConfig cls;
        cls.kind = TaskKind::Classification;
        auto logits = torch::tensor({0.0, 0.0}, torch::kFloat64).view({1, 2});
        CHECK(task_loss(logits, torch::tensor({1}, torch::kLong), cls).item<double>() == doctest::Approx(std::log(2.0)));
    }

    TEST_CASE("tile origins") {
        CHECK(tile_origins(96, 64, 32) == std::vector<int64_t>{0, 32});
        CHECK(tile_origins(100, 64, 32) == std::vector<int64_t>{0, 32, 36});
        CHECK(tile_origins(128, 64, 64) == std::vector<int64_t>{0, 64});
        CHECK(tile_origins(64, 64, 16) == std::vector<int64_t>{0});
        CHECK(tile_origins(20, 64, 64) == std::vector<int64_t>{0});
        CHECK(thrown_code([] { tile_origins(96, 32, 64); }) == ErrorCode::InvalidArgument);
        CHECK(thrown_code([] { tile_origins(96, 0, 0); }) == ErrorCode::InvalidArgument);
    }

    TEST_CASE("sliding window equals a per-pixel average of tiles") {
        torch::manual_seed(9);
        auto image = torch::randn({1, 3, 96, 80});
        auto got = sliding_window_predict(fixed_forward, image, 64, 32);
        auto want = tile_oracle(image, 64, {0, 32}, {0, 16});
        CHECK(torch::equal(got, want));

        auto uneven = torch::randn({2, 2, 70, 70});
        CHECK(torch::equal(sliding_window_predict(fixed_forward, uneven, 32, 24),
                           tile_oracle(uneven, 32, {0, 24, 38}, {0, 24, 38})));

        auto single = torch::randn({1, 3, 64, 64});
        CHECK(torch::allclose(sliding_window_predict(fixed_forward, single, 64, 0),
                              fixed_forward(single.unsqueeze(0))[0], 1e-6, 1e-6));
    }

    TEST_CASE("small images are reflect padded and cropped") {
        auto image = torch::randn({1, 2, 20, 24});
        auto got = sliding_window_predict(fixed_forward, image, 32, 32);
        REQUIRE(got.sizes() == torch::IntArrayRef({2, 20, 24}));
        auto padded = F::pad(image, F::PadFuncOptions({0, 8, 0, 12}).mode(torch::kReflect));
        auto want = fixed_forward(padded.unsqueeze(0))[0].slice(1, 0, 20).slice(2, 0, 24);
        CHECK(torch::equal(got, want));
        CHECK(thrown_code([&] { sliding_window_predict(fixed_forward, image[0], 32, 32); }) ==
              ErrorCode::ShapeMismatch);
    }

    TEST_CASE("model tiling respects the input size") {
        models::ModelBuildSpec spec;
        spec.backbone = {"toy_conv_pyramid", {{"stage_channels", {4, 8, 8, 8}}, {"img_size", 32}}};
        spec.bands = {"a", "b"};
        spec.decoder = {"fcn", {{"channels", 8}}};
        spec.head = {TaskKind::Segmentation, 3};
        auto model = models::build_model(spec, 0);
        auto image = torch::randn({1, 2, 48, 48});
        CHECK(thrown_code([&] { sliding_window_predict(*model, image, 64, 32); }) == ErrorCode::InvalidArgument);
        auto out = sliding_window_predict(*model, image, 32, 16);
        CHECK(out.sizes() == torch::IntArrayRef({3, 48, 48}));
        CHECK(model->is_training());
    }

    TEST_CASE("history rows") {
        TaskConfig task;
        task.num_classes = 2;
        auto cols = history_columns(task);
        CHECK(cols == std::vector<std::string>{"epoch", "train_loss", "val_loss", "val_miou", "val_accuracy",
                                               "val_iou_0", "val_iou_1", "lr"});
        EpochRecord e;
        e.epoch = 3;
        e.train_loss = 0.5;
        e.val_loss = 0.25;
        e.val_metrics = {{"miou", 0.75}, {"accuracy", 0.875}, {"iou_0", 1.0}};
        e.lr = 0.001;
        CHECK(history_row(e, cols) == "3,0.5,0.25,0.75,0.875,1.0,nan,0.001");
    }

    TEST_CASE("fit is deterministic and writes artifacts") {
        TempDir dir;
        data::write_blob_fixture(dir / "blobs", testing::small_blob_options());
        auto a = small_run(dir / "blobs", dir / "run_a", 4);
        auto b = small_run(dir / "blobs", dir / "run_b", 4);
        int seen = 0;
        auto ra = config::fit_from_config(a, [&](const EpochRecord&) { ++seen; });
        auto rb = config::fit_from_config(b);
        REQUIRE(ra.ok());
        CHECK(seen == static_cast<int>(ra.history.size()));
        CHECK(ra.history.size() <= 4);
        for (const auto& f : {"metrics.csv", "best.ckpt", "report.json", "config.yaml"}) {
            CHECK(fs::exists(dir / "run_a" / f));
        }
        CHECK(read_text(dir / "run_a/metrics.csv") == read_text(dir / "run_b/metrics.csv"));
        CHECK(ra.best_epoch >= 1);
        CHECK(ra.best().val_loss == ra.best_value);
        REQUIRE(ra.test_metrics.has_value());
        CHECK(*ra.test_metrics->per_class_iou[0] >= 0.0);
        auto report = nlohmann::json::parse(read_text(dir / "run_a/report.json"));
        CHECK(report["best_epoch"] == ra.best_epoch);
        CHECK(report["history"].size() == ra.history.size());
        CHECK(config::parse_config(read_text(dir / "run_a/config.yaml"), dir.path()) == a);

        auto reloaded = config::build_model(a);
        models::load_model_weights(ra.checkpoint, *reloaded);
        auto data = config::build_data(a);
        auto again = evaluate(*reloaded, data, "test", a.task);
        CHECK(again.report.miou == doctest::Approx(ra.test_metrics->miou).epsilon(1e-9));

        SUBCASE("predictions match in-memory inference") {
            auto inputs = data::predict_inputs(a.data);
            REQUIRE(inputs.size() == 8);
            auto written = predict(*reloaded, inputs, a.data, a.task, dir / "pred");
            REQUIRE(written.size() == inputs.size());
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                const auto id = data::sample_id(inputs[i], a.data.pixelwise.image_grep);
                CHECK(written[i].filename() == id + "_pred.bsq");
                auto mask = data::read_raster(written[i]);
                auto expected = infer(*reloaded, data::load_image(inputs[i], a.data.pixelwise.bands), a.task);
                CHECK(torch::equal(mask[0].to(torch::kLong), expected.argmax(0)));
            }
        }
    }

    TEST_CASE("fit rejects inconsistent task settings") {
        TaskConfig task;
        task.max_epochs = 5;
        task.early_stop_patience = 5;
        CHECK(thrown_code([&] { task.validate(); }) == ErrorCode::CrossFieldError);
        task.early_stop_patience = 2;
        task.monitor = "val_mio";
        CHECK(thrown_code([&] { task.validate(); }) == ErrorCode::CrossFieldError);
        task.monitor = "val_miou";
        task.ignore_index = 1;
        CHECK(thrown_code([&] { task.validate(); }) == ErrorCode::CrossFieldError);
        task.ignore_index = 255;
        task.validate();
    }
}
