// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/iterate/benchmark.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "geotune/config/yaml_util.hpp"
#include "geotune/error.hpp"
#include "geotune/strings.hpp"

namespace geotune::iterate {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg, const YAML::Node& at = YAML::Node(YAML::NodeType::Undefined)) {
    if (at.IsDefined() && at.Mark().line >= 0) {
        throw ConfigError(ErrorCode::BenchmarkConfigError, msg, at.Mark().line, at.Mark().column);
    }
    throw ConfigError(ErrorCode::BenchmarkConfigError, msg);
}

void check_keys(const YAML::Node& node, const std::string& where, const std::vector<std::string>& keys) {
    if (!node.IsMap()) {
        bad(where + " must be a mapping", node);
    }
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            auto hint = nearest_names(key, keys, 1);
            bad("unknown key '" + key + "' in " + where + (hint.empty() ? "" : " (did you mean '" + hint.front() + "'?)"),
                kv.first);
        }
    }
}

json scalar(const YAML::Node& n, const std::string& where, config::ScalarType want) {
    const auto t = config::scalar_type(n);
    const bool ok = t == want || (want == config::ScalarType::Float && t == config::ScalarType::Int);
    if (!n.IsScalar() || !ok) {
        bad(where + " has the wrong type", n);
    }
    return config::yaml_to_json(n);
}

YAML::Node to_yaml(const json& v) {
    if (v.is_number_float()) {
        return YAML::Node(format_double(v.get<double>()));
    }
    if (v.is_string()) {
        return YAML::Node(v.get<std::string>());
    }
    return YAML::Load(v.dump());
}

// Whether dotted `path` leads to a scalar (or null) leaf of `node`.
bool scalar_at(const YAML::Node& node, const std::string& path) {
    const auto dot = path.find('.');
    const auto key = path.substr(0, dot);
    if (!node.IsMap()) {
        return false;
    }
    const YAML::Node child = node[key];
    if (!child.IsDefined()) {
        return false;
    }
    if (dot == std::string::npos) {
        return child.IsScalar() || child.IsNull();
    }
    return scalar_at(child, path.substr(dot + 1));
}

}  // namespace

const BenchmarkTask& BenchmarkConfig::task(const std::string& task_name) const {
    for (const auto& t : tasks) {
        if (t.name == task_name) {
            return t;
        }
    }
    std::vector<std::string> names;
    for (const auto& t : tasks) {
        names.push_back(t.name);
    }
    bad("benchmark '" + name + "' has no task '" + task_name + "' (tasks: " + join(names, ", ") + ")");
}

BenchmarkConfig parse_benchmark(const std::string& text, const fs::path& base_dir) {
    const auto root = config::load_yaml(text);
    check_keys(root, "the benchmark", {"name", "seed", "storage", "n_trials", "n_startup", "gamma", "n_candidates",
                                       "bandwidth_floor", "parallelism", "repeated_seeds", "defaults", "tasks",
                                       "optimization_space"});
    using config::ScalarType;
    BenchmarkConfig b;
    b.base_dir = fs::absolute(base_dir).lexically_normal();
    for (const auto& key : {"name", "defaults", "tasks", "optimization_space", "n_trials"}) {
        if (!root[key].IsDefined() || root[key].IsNull()) {
            bad(std::string("benchmark is missing '") + key + "'", root);
        }
    }
    b.name = root["name"].as<std::string>();
    if (root["seed"]) {
        b.seed = scalar(root["seed"], "seed", ScalarType::Int).get<uint64_t>();
    }
    b.storage = b.base_dir / "studies";
    if (root["storage"]) {
        fs::path p = root["storage"].as<std::string>();
        b.storage = (p.is_absolute() ? p : b.base_dir / p).lexically_normal();
    }
    b.n_trials = scalar(root["n_trials"], "n_trials", ScalarType::Int).get<int64_t>();
    if (root["n_startup"]) {
        b.tpe.n_startup = scalar(root["n_startup"], "n_startup", ScalarType::Int).get<int64_t>();
    }
    if (root["gamma"]) {
        b.tpe.gamma = scalar(root["gamma"], "gamma", ScalarType::Float).get<double>();
    }
    if (root["n_candidates"]) {
        b.tpe.n_candidates = scalar(root["n_candidates"], "n_candidates", ScalarType::Int).get<int64_t>();
    }
    if (root["bandwidth_floor"]) {
        b.tpe.bandwidth_floor = scalar(root["bandwidth_floor"], "bandwidth_floor", ScalarType::Float).get<double>();
    }
    if (root["parallelism"]) {
        b.parallelism = scalar(root["parallelism"], "parallelism", ScalarType::Int).get<int64_t>();
    }
    if (root["repeated_seeds"]) {
        b.repeated_seeds = scalar(root["repeated_seeds"], "repeated_seeds", ScalarType::Int).get<int64_t>();
    }
    if (b.n_trials < 1 || b.parallelism < 1 || b.repeated_seeds < 1 || b.tpe.n_startup < 0 ||
        b.tpe.n_candidates < 1 || !(b.tpe.gamma > 0.0 && b.tpe.gamma <= 1.0) || !(b.tpe.bandwidth_floor > 0.0)) {
        bad("benchmark counts must be positive and gamma must lie in (0, 1]", root);
    }
    b.defaults = root["defaults"];
    if (!b.defaults.IsMap()) {
        bad("defaults must be a run config mapping", b.defaults);
    }

    const auto tasks = root["tasks"];
    if (!tasks.IsSequence() || tasks.size() == 0) {
        bad("tasks must be a non-empty list", tasks);
    }
    std::set<std::string> names;
    for (const auto& t : tasks) {
        check_keys(t, "a task entry", {"name", "overrides"});
        if (!t["name"]) {
            bad("task entry needs a name", t);
        }
        BenchmarkTask task{t["name"].as<std::string>(), t["overrides"] ? t["overrides"] : YAML::Node()};
        if (!names.insert(task.name).second) {
            bad("task '" + task.name + "' is declared twice", t);
        }
        b.tasks.push_back(task);
    }

    const auto space = root["optimization_space"];
    if (!space.IsMap() || space.size() == 0) {
        bad("optimization_space must map parameter paths to ranges", space);
    }
    for (const auto& kv : space) {
        ParamDef p;
        p.path = kv.first.as<std::string>();
        const auto& d = kv.second;
        check_keys(d, "optimization_space." + p.path, {"type", "low", "high", "log", "choices"});
        const auto type = d["type"] ? d["type"].as<std::string>() : std::string("float");
        if (type == "categorical") {
            p.kind = ParamKind::Categorical;
            if (!d["choices"] || !d["choices"].IsSequence()) {
                bad("categorical parameter '" + p.path + "' needs a choices list", d);
            }
            for (const auto& c : d["choices"]) {
                p.choices.push_back(config::yaml_to_json(c));
            }
        } else if (type == "float") {
            if (!d["low"] || !d["high"]) {
                bad("parameter '" + p.path + "' needs low and high", d);
            }
            p.low = scalar(d["low"], p.path + ".low", ScalarType::Float).get<double>();
            p.high = scalar(d["high"], p.path + ".high", ScalarType::Float).get<double>();
            if (d["log"]) {
                p.log_scale = scalar(d["log"], p.path + ".log", ScalarType::Bool).get<bool>();
            }
        } else {
            bad("parameter type must be float or categorical", d["type"]);
        }
        try {
            p.validate();
        } catch (const Error& e) {
            bad(e.what(), d);
        }
        b.space.params.push_back(p);
    }
    for (const auto& t : b.tasks) {
        check_param_paths(base_document(b, t.name), b.space, b.base_dir);
    }
    return b;
}

BenchmarkConfig parse_benchmark_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        bad("cannot read benchmark file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_benchmark(ss.str(), fs::absolute(path).parent_path());
}

YAML::Node base_document(const BenchmarkConfig& bench, const std::string& task) {
    return config::merge_yaml(bench.defaults, bench.task(task).overrides);
}

YAML::Node apply_params(const YAML::Node& base, const ParamValues& params) {
    YAML::Node doc = YAML::Clone(base);
    for (const auto& [path, value] : params) {
        config::set_yaml_path(doc, path, to_yaml(value));
    }
    return doc;
}

config::RunConfig materialize(const YAML::Node& base, const ParamValues& params, uint64_t seed,
                              const fs::path& base_dir) {
    auto doc = apply_params(base, params);
    config::set_yaml_path(doc, "trainer.seed", YAML::Node(std::to_string(seed)));
    // Round-trip through text so parse errors carry locations.
    return config::parse_config(config::emit_yaml(doc), base_dir);
}

void check_param_paths(const YAML::Node& base, const ParamSpace& space, const fs::path& base_dir) {
    config::RunConfig cfg;
    try {
        cfg = config::parse_config(config::emit_yaml(base), base_dir);
    } catch (const Error& e) {
        bad(std::string("defaults with task overrides do not form a valid run config: ") + e.what());
    }
    const auto canonical = config::load_yaml(config::dump_config(cfg));
    for (const auto& p : space.params) {
        if (!scalar_at(canonical, p.path)) {
            bad("optimization_space path '" + p.path + "' does not name a scalar config field");
        }
    }
}

}  // namespace geotune::iterate
