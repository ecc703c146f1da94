// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/iterate/study.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/file.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "geotune/config/yaml_util.hpp"
#include "geotune/error.hpp"
#include "geotune/models/checkpoint.hpp"

extern char** environ;

namespace geotune::iterate {

using nlohmann::json;

json TrialRecord::to_json() const {
    json p = json::object();
    for (const auto& [k, v] : params) {
        p[k] = v;
    }
    json j{{"type", "trial"},  {"trial_id", trial_id}, {"params", p},          {"status", status},
           {"seed", seed},     {"run_dir", run_dir},   {"metrics", metrics}};
    j["objective"] = objective ? json(*objective) : json();
    if (!error.empty()) {
        j["error"] = error;
    }
    return j;
}

TrialRecord TrialRecord::from_json(const json& j) {
    TrialRecord r;
    r.trial_id = j.at("trial_id").get<int64_t>();
    for (const auto& [k, v] : j.at("params").items()) {
        r.params[k] = v;
    }
    if (!j.at("objective").is_null()) {
        r.objective = j.at("objective").get<double>();
    }
    r.status = j.at("status").get<std::string>();
    r.error = j.value("error", std::string());
    r.seed = j.at("seed").get<uint64_t>();
    r.run_dir = j.value("run_dir", std::string());
    r.metrics = j.value("metrics", json::object());
    return r;
}

json StudyState::head_json() const {
    return {{"type", "head"},
            {"benchmark", benchmark},
            {"task", task},
            {"space", space.to_json()},
            {"tpe", tpe.to_json()},
            {"seed", seed},
            {"n_trials", n_trials},
            {"parallelism", parallelism},
            {"monitor", monitor},
            {"base_config", base_config},
            {"base_dir", base_dir.string()},
            {"toolkit_version", models::kToolkitVersion}};
}

std::vector<Observation> StudyState::observations() const {
    std::vector<Observation> out;
    for (const auto& t : trials) {
        out.push_back({t.trial_id, t.params, t.complete() ? *t.objective : std::numeric_limits<double>::infinity()});
    }
    return out;
}

const TrialRecord* StudyState::best() const {
    const TrialRecord* best = nullptr;
    for (const auto& t : trials) {
        if (!t.complete()) {
            continue;
        }
        if (!best || *t.objective < *best->objective ||
            (*t.objective == *best->objective && t.trial_id < best->trial_id)) {
            best = &t;
        }
    }
    return best;
}

std::vector<double> StudyState::best_so_far() const {
    std::vector<double> out;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : trials) {
        if (t.complete()) {
            best = std::min(best, *t.objective);
        }
        out.push_back(best);
    }
    return out;
}

fs::path study_path(const fs::path& storage, const std::string& benchmark, const std::string& task) {
    return storage / benchmark / task / "study.jsonl";
}

namespace {

// Parsed study plus the byte length of its intact prefix.
std::pair<StudyState, std::uintmax_t> read_study(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::IoError, "cannot open study file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    const auto text = ss.str();
    StudyState state;
    state.path = path;
    bool have_head = false;
    std::size_t pos = 0;
    std::uintmax_t intact = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const bool terminated = nl != std::string::npos;
        const auto line = text.substr(pos, terminated ? nl - pos : std::string::npos);
        const auto next = terminated ? nl + 1 : text.size();
        if (line.empty()) {
            pos = next;
            intact = next;
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception&) {
            if (next >= text.size()) {
                break;  // torn tail from an interrupted append
            }
            fail(ErrorCode::IoError, "corrupt record in " + path.string());
        }
        if (!terminated) {
            break;
        }
        if (!have_head) {
            if (j.value("type", "") != "head") {
                fail(ErrorCode::IoError, path.string() + " does not start with a study head record");
            }
            state.benchmark = j.at("benchmark").get<std::string>();
            state.task = j.at("task").get<std::string>();
            state.space = ParamSpace::from_json(j.at("space"));
            state.tpe = TpeSettings::from_json(j.at("tpe"));
            state.seed = j.at("seed").get<uint64_t>();
            state.n_trials = j.at("n_trials").get<int64_t>();
            state.parallelism = j.value("parallelism", int64_t{1});
            state.monitor = j.value("monitor", std::string("val_loss"));
            state.base_config = j.at("base_config").get<std::string>();
            state.base_dir = j.at("base_dir").get<std::string>();
            have_head = true;
        } else {
            state.trials.push_back(TrialRecord::from_json(j));
        }
        pos = next;
        intact = next;
    }
    if (!have_head) {
        fail(ErrorCode::IoError, path.string() + " holds no study head record");
    }
    return {state, intact};
}

fs::path trial_dir(const StudyState& state, int64_t trial_id) {
    char name[32];
    std::snprintf(name, sizeof name, "trial_%04lld", static_cast<long long>(trial_id));
    return state.path.parent_path() / name;
}

TrialRecord failed(TrialRecord rec, const std::string& error) {
    rec.status = "failed";
    rec.objective.reset();
    rec.error = error;
    return rec;
}

}  // namespace

StudyState load_study(const fs::path& path) { return read_study(path).first; }

void append_record(const fs::path& path, const json& record) {
    const auto line = record.dump() + "\n";
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) {
        fail(ErrorCode::IoError, "cannot open " + path.string() + ": " + std::strerror(errno));
    }
    if (::flock(fd, LOCK_EX) != 0) {
        ::close(fd);
        fail(ErrorCode::IoError, "cannot lock " + path.string());
    }
    std::size_t done = 0;
    while (done < line.size()) {
        const auto n = ::write(fd, line.data() + done, line.size() - done);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            ::flock(fd, LOCK_UN);
            ::close(fd);
            fail(ErrorCode::IoError, "failed appending to " + path.string());
        }
        done += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::flock(fd, LOCK_UN);
    ::close(fd);
}

config::RunConfig trial_config(const StudyState& state, const ParamValues& params, uint64_t seed,
                               const fs::path& run_dir) {
    auto cfg = materialize(config::load_yaml(state.base_config), params, seed, state.base_dir);
    cfg.artifacts_dir = run_dir;
    return cfg;
}

TrialRecord suggest_trial(const StudyState& state, int64_t trial_id) {
    Rng rng(derive_seed(state.seed, "trial", static_cast<uint64_t>(trial_id)));
    TrialRecord pending;
    pending.trial_id = trial_id;
    pending.params = tpe_suggest(state.space, state.observations(), state.tpe, rng);
    pending.seed = state.seed;
    pending.run_dir = trial_dir(state, trial_id).string();
    return pending;
}

TrialRecord run_trial(const config::RunConfig& cfg, TrialRecord pending) {
    try {
        auto record = config::fit_from_config(cfg);
        if (!record.ok()) {
            return failed(pending, "NonFiniteLoss: " + record.error);
        }
        if (!std::isfinite(record.best_value)) {
            return failed(pending, "NonFiniteLoss: monitored value is not finite");
        }
        pending.status = "complete";
        // Studies minimize; metrics that improve upward are negated.
        const bool maximize = engine::monitor_mode(record.monitor) == engine::MonitorMode::Max;
        pending.objective = maximize ? -record.best_value : record.best_value;
        const auto& best = record.best();
        json m{{"best_epoch", record.best_epoch}, {"val_loss", best.val_loss}, {"epochs", record.history.size()}};
        for (const auto& [k, v] : best.val_metrics) {
            m["val_" + k] = v;
        }
        if (record.test_metrics) {
            for (const auto& [k, v] : record.test_metrics->flat()) {
                m["test_" + k] = v;
            }
        }
        pending.metrics = m;
        return pending;
    } catch (const Error& e) {
        return failed(pending, std::string(to_string(e.code())) + ": " + e.what());
    } catch (const std::exception& e) {
        return failed(pending, std::string("InternalError: ") + e.what());
    }
}

TrialRecord run_worker(const fs::path& study_file, const TrialRecord& pending) {
    const auto state = load_study(study_file);
    TrialRecord rec;
    try {
        rec = run_trial(trial_config(state, pending.params, pending.seed, pending.run_dir), pending);
    } catch (const Error& e) {
        rec = failed(pending, std::string(to_string(e.code())) + ": " + e.what());
    }
    fs::create_directories(pending.run_dir);
    std::ofstream out(fs::path(pending.run_dir) / "trial.json", std::ios::trunc);
    out << rec.to_json().dump() << "\n";
    return rec;
}

namespace {

pid_t spawn_worker(const ProcessLauncher& launcher, const fs::path& study_file, const TrialRecord& pending) {
    const std::string exe = launcher.executable.string();
    const std::string study = study_file.string();
    const std::string trial = pending.to_json().dump();
    std::vector<std::string> args{exe, "iterate", "worker", "--study", study, "--trial", trial};
    std::vector<char*> argv;
    for (auto& a : args) {
        argv.push_back(a.data());
    }
    argv.push_back(nullptr);
    pid_t pid = 0;
    if (posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ) != 0) {
        fail(ErrorCode::IoError, "cannot launch worker " + exe);
    }
    return pid;
}

TrialRecord collect_worker(const TrialRecord& pending, int status) {
    const auto result = fs::path(pending.run_dir) / "trial.json";
    std::ifstream in(result);
    if (in) {
        try {
            return TrialRecord::from_json(json::parse(in));
        } catch (const json::exception&) {
        }
    }
    return failed(pending, "WorkerFailed: worker exited with status " + std::to_string(status));
}

}  // namespace

StudyState run_study(const BenchmarkConfig& bench, const std::string& task_name, const StudyOptions& options) {
    const auto path = study_path(bench.storage, bench.name, task_name);
    const auto base = base_document(bench, task_name);
    StudyState fresh;
    fresh.benchmark = bench.name;
    fresh.task = task_name;
    fresh.space = bench.space;
    fresh.tpe = bench.tpe;
    fresh.seed = bench.seed;
    fresh.n_trials = bench.n_trials;
    fresh.parallelism = bench.parallelism;
    fresh.base_config = config::emit_yaml(base);
    fresh.base_dir = bench.base_dir;
    fresh.monitor = config::parse_config(fresh.base_config, bench.base_dir).task.monitor;
    fresh.path = path;

    StudyState state;
    if (fs::exists(path)) {
        if (!options.resume) {
            throw ConfigError(ErrorCode::BenchmarkConfigError,
                              "study " + path.string() + " already exists; resume it or choose another storage");
        }
        auto [loaded, intact] = read_study(path);
        auto a = loaded.head_json();
        auto b = fresh.head_json();
        for (const auto& key : {"space", "tpe", "seed", "base_config"}) {
            if (a[key] != b[key]) {
                throw ConfigError(ErrorCode::BenchmarkConfigError, "benchmark changed since the study started (" +
                                                                       std::string(key) + " differs)");
            }
        }
        if (fs::file_size(path) != intact) {
            fs::resize_file(path, intact);
        }
        state = loaded;
        state.n_trials = bench.n_trials;
        state.parallelism = bench.parallelism;
    } else {
        fs::create_directories(path.parent_path());
        append_record(path, fresh.head_json());
        state = fresh;
    }

    std::set<int64_t> done;
    for (const auto& t : state.trials) {
        done.insert(t.trial_id);
    }
    std::vector<int64_t> todo;
    for (int64_t id = 0; id < state.n_trials; ++id) {
        if (!done.count(id)) {
            todo.push_back(id);
        }
    }
    if (options.max_new_trials > 0 && static_cast<int64_t>(todo.size()) > options.max_new_trials) {
        todo.resize(static_cast<std::size_t>(options.max_new_trials));
    }

    auto record = [&](const TrialRecord& rec) {
        append_record(path, rec.to_json());
        state.trials.push_back(rec);
        if (options.on_trial) {
            options.on_trial(rec);
        }
    };

    if (state.parallelism <= 1 || !options.launcher) {
        for (auto id : todo) {
            auto pending = suggest_trial(state, id);
            TrialRecord rec;
            try {
                rec = options.executor(trial_config(state, pending.params, pending.seed, pending.run_dir), pending);
            } catch (const Error& e) {
                rec = failed(pending, std::string(to_string(e.code())) + ": " + e.what());
            }
            record(rec);
        }
        return state;
    }

    // Asynchronous: suggestions condition only on trials finished so far.
    std::map<pid_t, TrialRecord> running;
    std::size_t next = 0;
    while (next < todo.size() || !running.empty()) {
        while (next < todo.size() && static_cast<int64_t>(running.size()) < state.parallelism) {
            auto pending = suggest_trial(state, todo[next++]);
            fs::create_directories(pending.run_dir);
            fs::remove(fs::path(pending.run_dir) / "trial.json");
            running.emplace(spawn_worker(*options.launcher, path, pending), pending);
        }
        int status = 0;
        const pid_t pid = ::waitpid(-1, &status, 0);
        if (pid < 0) {
            if (errno == EINTR) {
                continue;
            }
            fail(ErrorCode::IoError, "lost track of worker processes");
        }
        auto it = running.find(pid);
        if (it == running.end()) {
            continue;
        }
        record(collect_worker(it->second, status));
        running.erase(it);
    }
    return state;
}

MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    s.count = static_cast<int64_t>(values.size());
    if (values.empty()) {
        return s;
    }
    for (double v : values) {
        s.mean += v;
    }
    s.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) {
        var += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

json RerunResult::to_json() const {
    json runs_json = json::array();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        json entry{{"seed", seeds[i]}, {"status", r.status}, {"best_epoch", r.best_epoch},
                   {"run_dir", r.checkpoint.parent_path().string()}};
        if (r.ok()) {
            entry["val_loss"] = r.best().val_loss;
        }
        runs_json.push_back(entry);
    }
    json s = json::object();
    for (const auto& [k, v] : summary) {
        s[k] = {{"mean", v.mean}, {"std", v.std}, {"count", v.count}};
    }
    return {{"runs", runs_json},
            {"summary", s},
            {"selected_seed", seeds.empty() ? json() : json(seeds[selected])},
            {"test_metrics", test_metrics ? test_metrics->to_json() : json()}};
}

RerunResult rerun_best(const StudyState& state, int64_t k, const fs::path& out_dir) {
    const auto* best = state.best();
    if (!best) {
        fail(ErrorCode::NoCompletedTrials, "study " + state.path.string() + " has no completed trial");
    }
    if (k < 1) {
        fail(ErrorCode::InvalidArgument, "rerun needs at least one seed");
    }
    const auto root = out_dir.empty() ? state.path.parent_path() / "rerun_best" : out_dir;
    RerunResult result;
    std::map<std::string, std::vector<double>> values;
    double best_val = std::numeric_limits<double>::infinity();
    bool any = false;
    for (int64_t s = 0; s < k; ++s) {
        const auto seed = static_cast<uint64_t>(s);
        auto cfg = trial_config(state, best->params, seed, root / ("seed_" + std::to_string(s)));
        auto run = config::fit_from_config(cfg);
        result.seeds.push_back(seed);
        if (run.ok()) {
            const auto& e = run.best();
            values["val_loss"].push_back(e.val_loss);
            for (const auto& [name, v] : e.val_metrics) {
                values["val_" + name].push_back(v);
            }
            if (run.test_metrics) {
                for (const auto& [name, v] : run.test_metrics->flat()) {
                    values["test_" + name].push_back(v);
                }
            }
            if (!any || e.val_loss < best_val) {
                best_val = e.val_loss;
                result.selected = result.runs.size();
                any = true;
            }
        }
        result.runs.push_back(std::move(run));
    }
    if (!any) {
        fail(ErrorCode::NoCompletedTrials, "every rerun of the best trial failed");
    }
    for (const auto& [name, v] : values) {
        result.summary[name] = summarize(v);
    }
    result.test_metrics = result.runs[result.selected].test_metrics;
    fs::create_directories(root);
    std::ofstream out(root / "rerun_summary.json", std::ios::trunc);
    out << result.to_json().dump(2) << "\n";
    return result;
}

}  // namespace geotune::iterate
