// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest_torch.hpp"

#include <cmath>
#include <fstream>
#include <regex>

#include "geotune/config/yaml_util.hpp"
#include "geotune/iterate/benchmark.hpp"
#include "geotune/iterate/report.hpp"
#include "geotune/iterate/study.hpp"
#include "geotune/iterate/tpe.hpp"
#include "support.hpp"

using namespace geotune;
using namespace geotune::iterate;
using geotune::testing::read_text;
using geotune::testing::TempDir;
using geotune::testing::thrown_code;

namespace {

ParamSpace lr_wd_space() {
    ParamSpace s;
    s.params.push_back({"optimizer.lr", ParamKind::Continuous, 1e-5, 1e-2, true, {}});
    s.params.push_back({"optimizer.weight_decay", ParamKind::Continuous, 1e-6, 1e-1, true, {}});
    return s;
}

double bowl(double lr, double wd) {
    return std::pow(std::log10(lr) + 4.0, 2) + 0.1 * std::pow(std::log10(wd) + 2.0, 2);
}

std::string benchmark_text(const fs::path& storage, int64_t n_trials, const std::string& extra_space = "") {
    return "name: bowl\n"
           "seed: 3\n"
           "storage: " + storage.string() + "\n"
           "n_trials: " + std::to_string(n_trials) + "\n"
           "defaults:\n"
           "  task: {kind: segmentation, num_classes: 2}\n"
           "  model: {backbone: toy_conv_pyramid, decoder: fcn}\n"
           "  data: {images_dir: tiles, dataset_bands: [a, b]}\n"
           "  trainer: {max_epochs: 5, early_stop_patience: 2}\n"
           "tasks:\n"
           "  - {name: first}\n"
           "  - {name: second, overrides: {optimizer: {weight_decay: 0.5}}}\n"
           "optimization_space:\n"
           "  optimizer.lr: {type: float, low: 1.0e-5, high: 1.0e-2, log: true}\n"
           "  optimizer.weight_decay: {low: 1.0e-6, high: 1.0e-1, log: true}\n" +
           extra_space;
}

// Scores the resolved config without training.
TrialRecord bowl_executor(const config::RunConfig& cfg, TrialRecord pending) {
    pending.status = "complete";
    pending.objective = bowl(cfg.task.lr, cfg.task.weight_decay);
    return pending;
}

std::vector<std::pair<ParamValues, std::optional<double>>> outcomes(const StudyState& s) {
    std::vector<std::pair<ParamValues, std::optional<double>>> out;
    for (const auto& t : s.trials) {
        out.emplace_back(t.params, t.objective);
    }
    return out;
}

StudyOptions fake(int64_t max_new = 0, bool resume = false) {
    StudyOptions o;
    o.executor = bowl_executor;
    o.max_new_trials = max_new;
    o.resume = resume;
    return o;
}

}  // namespace

TEST_SUITE("iterate") {
    TEST_CASE("suggestions stay inside the bounds") {
        auto space = lr_wd_space();
        space.params.push_back({"model.head.dropout", ParamKind::Categorical, 0, 1, false, {0.0, 0.1, 0.2}});
        Rng rng(1);
        std::vector<Observation> history;
        TpeSettings settings;
        for (int64_t i = 0; i < 1000; ++i) {
            auto p = tpe_suggest(space, history, settings, rng);
            const double lr = p.at("optimizer.lr").get<double>();
            const double wd = p.at("optimizer.weight_decay").get<double>();
            REQUIRE(lr >= 1e-5);
            REQUIRE(lr <= 1e-2);
            REQUIRE(wd >= 1e-6);
            REQUIRE(wd <= 1e-1);
            const auto d = p.at("model.head.dropout");
            CHECK((d == 0.0 || d == 0.1 || d == 0.2));
            if (history.size() < 40) {
                const double obj = i % 7 == 3 ? std::numeric_limits<double>::infinity() : bowl(lr, wd);
                history.push_back({i, p, obj});
            }
        }
    }

    TEST_CASE("sampler is deterministic and degenerate histories stay in bounds") {
        const auto space = lr_wd_space();
        std::vector<Observation> history;
        for (int64_t i = 0; i < 8; ++i) {
            history.push_back({i, {{"optimizer.lr", 1e-3}, {"optimizer.weight_decay", 1e-2}}, 1.0});
        }
        Rng a(42);
        Rng b(42);
        auto pa = tpe_suggest(space, history, TpeSettings{}, a);
        CHECK(pa == tpe_suggest(space, history, TpeSettings{}, b));
        for (int i = 0; i < 100; ++i) {
            auto p = tpe_suggest(space, history, TpeSettings{}, a);
            CHECK(p.at("optimizer.lr").get<double>() >= 1e-5);
            CHECK(p.at("optimizer.lr").get<double>() <= 1e-2);
        }
    }

    TEST_CASE("sampler concentrates near the optimum") {
        const auto space = lr_wd_space();
        Rng rng(8);
        std::vector<Observation> history;
        for (int64_t i = 0; i < 30; ++i) {
            auto p = random_suggest(space, rng);
            history.push_back({i, p, bowl(p.at("optimizer.lr"), p.at("optimizer.weight_decay"))});
        }
        double tpe_dist = 0.0;
        double rnd_dist = 0.0;
        for (int i = 0; i < 200; ++i) {
            tpe_dist += std::abs(std::log10(tpe_suggest(space, history, TpeSettings{}, rng).at("optimizer.lr").get<double>()) + 4.0);
            rnd_dist += std::abs(std::log10(random_suggest(space, rng).at("optimizer.lr").get<double>()) + 4.0);
        }
        CHECK(tpe_dist < 0.75 * rnd_dist);
    }

    TEST_CASE("parzen estimator") {
        ParzenEstimator est({0.2, 0.3}, 0.0, 1.0, 0.01);
        CHECK(est.bandwidth() >= 0.01);
        // Tight clusters keep a bandwidth of at least range / (n + 1).
        CHECK(ParzenEstimator({0.5, 0.5, 0.5}, 0.0, 1.0, 0.01).bandwidth() == doctest::Approx(0.25));
        std::vector<double> many(300, 0.5);
        CHECK(ParzenEstimator(many, 0.0, 2.0, 0.001).bandwidth() == doctest::Approx(0.02));
        // Density integrates to one over the bounds.
        double mass = 0.0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            mass += std::exp(est.log_density((i + 0.5) / n)) / n;
        }
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
        Rng rng(2);
        for (int i = 0; i < 1000; ++i) {
            const double x = est.sample(rng);
            REQUIRE(x >= 0.0);
            REQUIRE(x <= 1.0);
        }
    }

    TEST_CASE("benchmark documents") {
        TempDir dir;
        auto b = parse_benchmark(benchmark_text(dir / "studies", 10), dir.path());
        CHECK(b.name == "bowl");
        CHECK(b.seed == 3);
        CHECK(b.tasks.size() == 2);
        CHECK(b.space.params[1].log_scale);
        CHECK(b.tpe.n_startup == 5);
        auto second = config::parse_config(config::emit_yaml(base_document(b, "second")), dir.path());
        CHECK(second.task.weight_decay == 0.5);
        auto cfg = materialize(base_document(b, "first"), {{"optimizer.lr", 0.00123}}, 9, dir.path());
        CHECK(cfg.task.lr == 0.00123);
        CHECK(cfg.task.seed == 9);
        CHECK(thrown_code([&] { b.task("third"); }) == ErrorCode::BenchmarkConfigError);

        auto code_of = [&](const std::string& text) {
            return thrown_code([&] { parse_benchmark(text, dir.path()); });
        };
        CHECK(code_of(benchmark_text(dir / "s", 10, "  optimizer.lrate: {low: 0.1, high: 0.2}\n")) ==
              ErrorCode::BenchmarkConfigError);
        CHECK(code_of(benchmark_text(dir / "s", 10, "  model.necks: {low: 0.1, high: 0.2}\n")) ==
              ErrorCode::BenchmarkConfigError);
        CHECK(code_of(benchmark_text(dir / "s", 10, "  trainer.seed: {low: -1.0, high: 2.0, log: true}\n")) ==
              ErrorCode::BenchmarkConfigError);
        CHECK(code_of(benchmark_text(dir / "s", 10, "  model.head.dropout: {type: categorical}\n")) ==
              ErrorCode::BenchmarkConfigError);
        CHECK(code_of(benchmark_text(dir / "s", 10, "  trainer.seed: {type: int, low: 1, high: 2}\n")) ==
              ErrorCode::BenchmarkConfigError);
        CHECK(code_of(benchmark_text(dir / "s", 0)) == ErrorCode::BenchmarkConfigError);
        CHECK(code_of(benchmark_text(dir / "s", 10) + "n_trails: 4\n") == ErrorCode::BenchmarkConfigError);
        CHECK(code_of("name: x\n") == ErrorCode::BenchmarkConfigError);
        CHECK(parse_benchmark(benchmark_text(dir / "s", 10, "  model.head.dropout: {type: categorical, choices: [0.0, 0.1]}\n"),
                              dir.path())
                  .space.params.size() == 3);

        auto shipped = parse_benchmark_file(testing::source_path("configs/blobs_benchmark.yaml"));
        CHECK(shipped.space.params.size() == 2);
        CHECK(shipped.storage == testing::source_path("configs/runs/studies").lexically_normal());
        auto fusion = config::parse_config(config::emit_yaml(base_document(shipped, "fusion")), shipped.base_dir);
        CHECK(fusion.model.decoder.name == "pyramid_fusion");
        CHECK(fusion.model.decoder.args["channels"] == 32);
        CHECK(fusion.data.pixelwise.images_dir == testing::source_path("configs/blobs/data").lexically_normal());
    }

    TEST_CASE("studies persist, resume and survive torn writes") {
        TempDir dir;
        const auto bench = parse_benchmark(benchmark_text(dir / "studies", 10), dir.path());
        const auto ref_bench = parse_benchmark(benchmark_text(dir / "reference", 10), dir.path());
        auto reference = run_study(ref_bench, "first", fake());
        REQUIRE(reference.trials.size() == 10);
        for (int64_t i = 0; i < 10; ++i) {
            CHECK(reference.trials[i].trial_id == i);
            CHECK(reference.trials[i].seed == 3);
        }
        auto curve = reference.best_so_far();
        for (std::size_t i = 1; i < curve.size(); ++i) {
            CHECK(curve[i] <= curve[i - 1]);
        }

        auto partial = run_study(bench, "first", fake(4));
        CHECK(partial.trials.size() == 4);
        {
            std::ofstream out(partial.path, std::ios::app);
            out << R"({"trial_id": 4, "params": {"optimizer.lr": 0.00)";
        }
        CHECK(load_study(partial.path).trials.size() == 4);
        CHECK(thrown_code([&] { run_study(bench, "first", fake()); }) == ErrorCode::BenchmarkConfigError);
        auto resumed = run_study(bench, "first", fake(0, true));
        CHECK((outcomes(resumed) == outcomes(reference)));
        CHECK((outcomes(load_study(partial.path)) == outcomes(reference)));
        CHECK(load_study(partial.path).best()->trial_id == reference.best()->trial_id);

        auto changed = parse_benchmark(benchmark_text(dir / "studies", 10), dir.path());
        changed.seed = 4;
        CHECK(thrown_code([&] { run_study(changed, "first", fake(0, true)); }) == ErrorCode::BenchmarkConfigError);
    }

    TEST_CASE("failed trials are recorded and kept") {
        TempDir dir;
        const auto bench = parse_benchmark(benchmark_text(dir / "studies", 8), dir.path());
        StudyOptions o;
        o.executor = [](const config::RunConfig& cfg, TrialRecord pending) {
            if (cfg.task.lr > 1e-3) {
                throw Error(ErrorCode::NonFiniteLoss, "diverged");
            }
            return bowl_executor(cfg, pending);
        };
        auto state = run_study(bench, "first", o);
        int failed = 0;
        for (const auto& t : state.trials) {
            if (!t.complete()) {
                ++failed;
                CHECK(t.status == "failed");
                CHECK(t.error.rfind("NonFiniteLoss", 0) == 0);
            }
        }
        auto obs = state.observations();
        CHECK(obs.size() == state.trials.size());
        for (std::size_t i = 0; i < obs.size(); ++i) {
            CHECK(std::isinf(obs[i].objective) == !state.trials[i].complete());
        }
        auto reloaded = load_study(state.path);
        CHECK(reloaded.trials.size() == state.trials.size());
        CHECK(failed + (state.best() ? 1 : 0) > 0);
    }

    TEST_CASE("reports") {
        TempDir dir;
        const auto bench = parse_benchmark(benchmark_text(dir / "studies", 10), dir.path());
        auto state = run_study(bench, "first", fake());
        auto files = emit_report(state, dir / "report");
        auto rows = read_trials_csv(files.csv);
        REQUIRE(rows.size() == 10);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(rows[i].trial_id == state.trials[i].trial_id);
            CHECK(rows[i].objective == state.trials[i].objective);
            CHECK(rows[i].status == "complete");
        }
        const auto header = read_text(files.csv).substr(0, read_text(files.csv).find('\n'));
        CHECK(header == "trial_id,optimizer.lr,optimizer.weight_decay,objective,status,seed");
        const auto svg = read_text(files.svg);
        const std::regex best_re(R"re(<polygon class="best" data-trial="(\d+)")re");
        std::smatch m;
        REQUIRE(std::regex_search(svg, m, best_re));
        CHECK(std::stoll(m[1]) == state.best()->trial_id);
        const std::regex range_re(R"re(data-x-min="([^"]+)" data-x-max="([^"]+)" data-x-log="true")re");
        REQUIRE(std::regex_search(svg, m, range_re));
        CHECK(std::stod(m[1]) == 1e-5);
        CHECK(std::stod(m[2]) == 1e-2);
        const std::regex circle_re("<circle class=\"trial\"");
        CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), circle_re), std::sregex_iterator()) == 9);
        auto report = nlohmann::json::parse(read_text(files.json));
        CHECK(report["n_trials"] == 10);
        CHECK(report["best"]["trial_id"] == state.best()->trial_id);

        auto one = parse_benchmark(benchmark_text(dir / "single", 1), dir.path());
        auto single = run_study(one, "first", fake());
        auto one_files = emit_report(single, dir / "one");
        CHECK(read_trials_csv(one_files.csv).size() == 1);
        const auto one_svg = read_text(one_files.svg);
        CHECK(one_svg.find("<polygon class=\"best\"") != std::string::npos);
        CHECK(one_svg.find("<circle") == std::string::npos);
    }

    TEST_CASE("summaries and reruns") {
        auto s = summarize({1.0, 2.0, 3.0, 4.0});
        CHECK(s.mean == 2.5);
        CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
        CHECK(s.count == 4);
        auto single = summarize({0.7});
        CHECK(single.std == 0.0);

        StudyState empty;
        empty.path = "/tmp/none.jsonl";
        CHECK(thrown_code([&] { rerun_best(empty, 3); }) == ErrorCode::NoCompletedTrials);
        TrialRecord failed;
        failed.status = "failed";
        empty.trials.push_back(failed);
        CHECK(thrown_code([&] { rerun_best(empty, 3); }) == ErrorCode::NoCompletedTrials);
    }

    TEST_CASE("trial records round trip through JSON") {
        TrialRecord t;
        t.trial_id = 7;
        t.params = {{"optimizer.lr", 0.000123456789}, {"model.head.dropout", 0.1}};
        t.objective = 0.1 + 0.2;
        t.seed = 5;
        t.run_dir = "/x/trial_7";
        t.metrics = {{"val_miou", 0.5}};
        auto back = TrialRecord::from_json(nlohmann::json::parse(t.to_json().dump()));
        CHECK(back.params == t.params);
        CHECK(back.objective == t.objective);
        CHECK(back.seed == 5);
        CHECK(back.metrics == t.metrics);
    }
}
