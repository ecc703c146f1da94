// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/cli.hpp"

#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "geotune/config/run_config.hpp"
#include "geotune/error.hpp"
#include "geotune/iterate/benchmark.hpp"
#include "geotune/iterate/report.hpp"
#include "geotune/iterate/study.hpp"
#include "geotune/models/checkpoint.hpp"
#include "geotune/models/components.hpp"
#include "geotune/strings.hpp"

namespace geotune {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    bool json_errors = false;
    std::string config;
    std::optional<uint64_t> seed;
    std::string artifacts;
    std::string ckpt;
    std::string out;
    std::string input_dir;
    std::string split = "test";
    std::string kind;
    std::string benchmark;
    std::string task;
    bool resume = false;
    int64_t max_trials = 0;
    std::string study;
    int64_t seeds = 0;
    std::string trial;
};

std::string epoch_line(const engine::EpochRecord& e) {
    std::string line = "epoch " + std::to_string(e.epoch) + " train_loss=" + format_double(e.train_loss) +
                       " val_loss=" + format_double(e.val_loss);
    for (const auto& [k, v] : e.val_metrics) {
        line += " val_" + k + "=" + format_double(v);
    }
    return line + " lr=" + format_double(e.lr);
}

config::RunConfig load_run_config(const Options& o) {
    auto cfg = config::parse_config_file(o.config);
    if (o.seed) {
        cfg.task.seed = *o.seed;
    }
    if (!o.artifacts.empty()) {
        cfg.artifacts_dir = fs::absolute(o.artifacts).lexically_normal();
    }
    return cfg;
}

models::Model load_trained(const config::RunConfig& cfg, const Options& o) {
    const fs::path ckpt = o.ckpt.empty() ? cfg.artifacts_dir / "best.ckpt" : fs::path(o.ckpt);
    if (!fs::exists(ckpt)) {
        fail(ErrorCode::CheckpointMissing, "checkpoint " + ckpt.string() + " does not exist");
    }
    auto model = config::build_model(cfg);
    models::load_model_weights(ckpt, *model);
    return model;
}

int run_fit(const Options& o, std::ostream& out) {
    const auto cfg = load_run_config(o);
    auto record = config::fit_from_config(cfg, [&](const engine::EpochRecord& e) { out << epoch_line(e) << "\n"; });
    if (!record.ok()) {
        fail(ErrorCode::NonFiniteLoss, record.error);
    }
    out << "best epoch " << record.best_epoch << " " << record.monitor << "=" << format_double(record.best_value)
        << "\n";
    if (record.test_metrics) {
        out << "test " << record.test_metrics->to_json().dump() << "\n";
    }
    out << "artifacts " << cfg.artifacts_dir.string() << "\n";
    return 0;
}

int run_test(const Options& o, std::ostream& out) {
    const auto cfg = load_run_config(o);
    auto model = load_trained(cfg, o);
    auto data = config::build_data(cfg);
    auto eval = engine::evaluate(*model, data, o.split, cfg.task);
    json j = eval.report.to_json();
    j["loss"] = eval.loss;
    j["split"] = o.split;
    out << j.dump() << "\n";
    return 0;
}

int run_predict(const Options& o, std::ostream& out) {
    auto cfg = load_run_config(o);
    if (!o.input_dir.empty()) {
        cfg.data.predict_dir = fs::absolute(o.input_dir).lexically_normal();
    }
    auto model = load_trained(cfg, o);
    const fs::path out_dir = o.out.empty() ? cfg.artifacts_dir / "predictions" : fs::path(o.out);
    auto written = engine::predict(*model, data::predict_inputs(cfg.data), cfg.data, cfg.task, out_dir);
    for (const auto& p : written) {
        out << p.string() << "\n";
    }
    return 0;
}

int run_list(const Options& o, std::ostream& out) {
    const auto& reg = models::builtin_registries();
    std::vector<models::ComponentKind> kinds;
    if (o.kind.empty()) {
        kinds = {models::ComponentKind::Backbone, models::ComponentKind::Neck, models::ComponentKind::Decoder,
                 models::ComponentKind::Head};
    } else {
        kinds = {models::parse_component_kind(o.kind)};
    }
    for (auto k : kinds) {
        for (const auto& name : reg.list(k)) {
            out << models::to_string(k) << "\t" << name << "\t" << reg.default_args(k, name).dump() << "\n";
        }
    }
    return 0;
}

fs::path self_executable() {
    std::error_code ec;
    auto p = fs::read_symlink("/proc/self/exe", ec);
    return ec ? fs::path() : p;
}

int run_iterate(const Options& o, std::ostream& out) {
    const auto bench = iterate::parse_benchmark_file(o.benchmark);
    std::vector<std::string> tasks;
    if (!o.task.empty()) {
        bench.task(o.task);
        tasks.push_back(o.task);
    } else {
        for (const auto& t : bench.tasks) {
            tasks.push_back(t.name);
        }
    }
    for (const auto& task : tasks) {
        iterate::StudyOptions opts;
        opts.resume = o.resume;
        opts.max_new_trials = o.max_trials;
        if (bench.parallelism > 1) {
            opts.launcher = iterate::ProcessLauncher{self_executable()};
        }
        opts.on_trial = [&](const iterate::TrialRecord& t) {
            out << task << " trial " << t.trial_id << " " << t.status;
            if (t.objective) {
                out << " objective=" << format_double(*t.objective);
            }
            if (!t.error.empty()) {
                out << " error=" << t.error;
            }
            out << "\n";
        };
        auto state = iterate::run_study(bench, task, opts);
        if (const auto* best = state.best()) {
            out << task << " best trial " << best->trial_id << " objective=" << format_double(*best->objective)
                << "\n";
        }
        out << task << " study " << state.path.string() << "\n";
    }
    return 0;
}

int run_rerun(const Options& o, std::ostream& out) {
    auto state = iterate::load_study(o.study);
    auto result = iterate::rerun_best(state, o.seeds, o.out.empty() ? fs::path() : fs::path(o.out));
    for (const auto& [name, s] : result.summary) {
        out << name << " " << format_double(s.mean) << " +- " << format_double(s.std) << " (n=" << s.count << ")\n";
    }
    out << "selected seed " << result.seeds[result.selected] << "\n";
    return 0;
}

int run_report(const Options& o, std::ostream& out) {
    auto state = iterate::load_study(o.study);
    auto files = iterate::emit_report(state, o.out);
    out << files.csv.string() << "\n" << files.svg.string() << "\n" << files.json.string() << "\n";
    return 0;
}

int run_worker(const Options& o, std::ostream&) {
    auto pending = iterate::TrialRecord::from_json(json::parse(o.trial));
    auto rec = iterate::run_worker(o.study, pending);
    return rec.complete() ? 0 : 2;
}

void report_error(std::ostream& err, bool as_json, const std::string& code, const std::string& message, int exit_code,
                  int line = -1, int column = -1) {
    if (as_json) {
        json j{{"error", code}, {"message", message}, {"exit_code", exit_code}};
        if (line >= 0) {
            j["line"] = line + 1;
            j["column"] = column + 1;
        }
        err << j.dump() << "\n";
    } else {
        err << "error: " << code << ": " << message << "\n";
    }
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Config-driven fine-tuning of geospatial encoder-decoder models", "geotune"};
    app.require_subcommand(1);
    app.add_flag("--json-errors", o.json_errors, "Print errors as one JSON object on stderr");

    auto* fit = app.add_subcommand("fit", "Train a model from a run config");
    auto* test = app.add_subcommand("test", "Score a trained model on a split");
    auto* predict = app.add_subcommand("predict", "Write predictions for the test split or an input folder");
    for (auto* sub : {fit, test, predict}) {
        sub->add_option("--config", o.config, "Run config file")->required();
        sub->add_option("--seed", o.seed, "Override trainer.seed");
        sub->add_option("--artifacts", o.artifacts, "Override trainer.artifacts_dir");
    }
    for (auto* sub : {test, predict}) {
        sub->add_option("--ckpt", o.ckpt, "Checkpoint (default: <artifacts_dir>/best.ckpt)");
    }
    test->add_option("--split", o.split, "Split to score")->check(CLI::IsMember({"train", "val", "test"}));
    predict->add_option("--out", o.out, "Output folder (default: <artifacts_dir>/predictions)");
    predict->add_option("--input-dir", o.input_dir, "Predict every image under this folder");

    auto* list = app.add_subcommand("list-components", "List registered model components");
    list->add_option("--kind", o.kind, "backbone, neck, decoder or head")
        ->check(CLI::IsMember({"backbone", "neck", "decoder", "head"}));

    auto* it = app.add_subcommand("iterate", "Hyperparameter search and repeated-seed benchmarking");
    it->require_subcommand(1);
    auto* it_run = it->add_subcommand("run", "Run or resume the studies of a benchmark");
    it_run->add_option("--benchmark", o.benchmark, "Benchmark file")->required();
    it_run->add_option("--task", o.task, "Only this task");
    it_run->add_flag("--resume", o.resume, "Continue existing studies");
    it_run->add_option("--max-trials", o.max_trials, "Stop after this many new trials");
    auto* it_rerun = it->add_subcommand("rerun-best", "Rerun the best trial with seeds 0..k-1");
    it_rerun->add_option("--study", o.study, "Study file")->required();
    it_rerun->add_option("--seeds", o.seeds, "Number of seeds")->required()->check(CLI::PositiveNumber);
    it_rerun->add_option("--out", o.out, "Output folder");
    auto* it_report = it->add_subcommand("report", "Write trials.csv and a scatter plot");
    it_report->add_option("--study", o.study, "Study file")->required();
    it_report->add_option("--out", o.out, "Output folder")->required();
    auto* it_worker = it->add_subcommand("worker", "");
    it_worker->group("");
    it_worker->add_option("--study", o.study)->required();
    it_worker->add_option("--trial", o.trial)->required();

    std::vector<std::string> argv(args.rbegin(), args.rend());
    if (!argv.empty()) {
        argv.pop_back();  // program name
    }
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        report_error(err, o.json_errors, "UsageError", e.what(), 1);
        if (!o.json_errors) {
            auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
            err << sub->help();
        }
        return 1;
    }

    try {
        if (fit->parsed()) {
            return run_fit(o, out);
        }
        if (test->parsed()) {
            return run_test(o, out);
        }
        if (predict->parsed()) {
            return run_predict(o, out);
        }
        if (list->parsed()) {
            return run_list(o, out);
        }
        if (it_run->parsed()) {
            return run_iterate(o, out);
        }
        if (it_rerun->parsed()) {
            return run_rerun(o, out);
        }
        if (it_report->parsed()) {
            return run_report(o, out);
        }
        if (it_worker->parsed()) {
            return run_worker(o, out);
        }
    } catch (const ConfigError& e) {
        const int code = is_config_error(e.code()) ? 1 : 2;
        report_error(err, o.json_errors, std::string(to_string(e.code())), e.what(), code, e.line(), e.column());
        return code;
    } catch (const Error& e) {
        const int code = is_config_error(e.code()) ? 1 : 2;
        report_error(err, o.json_errors, std::string(to_string(e.code())), e.what(), code);
        return code;
    } catch (const std::exception& e) {
        report_error(err, o.json_errors, "InternalError", e.what(), 2);
        return 2;
    }
    return 1;
}

int cli_main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return cli_main(args, std::cout, std::cerr);
}

}  // namespace geotune
