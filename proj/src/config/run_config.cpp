// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/config/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "geotune/config/yaml_util.hpp"
#include "geotune/error.hpp"
#include "geotune/strings.hpp"

namespace geotune::config {

using nlohmann::json;
using models::ComponentSpec;

namespace {

[[noreturn]] void raise(ErrorCode code, const std::string& msg, const YAML::Node& at) {
    if (at.IsDefined() && at.Mark().line >= 0) {
        throw ConfigError(code, msg, at.Mark().line, at.Mark().column);
    }
    throw ConfigError(code, msg);
}

/// A mapping whose keys must come from a fixed list.
class Section {
public:
    Section(const YAML::Node& node, std::string path, const std::vector<std::string>& keys)
        : node_(node), path_(std::move(path)) {
        if (!node_.IsDefined() || node_.IsNull()) {
            return;
        }
        if (!node_.IsMap()) {
            raise(ErrorCode::TypeError, label() + " must be a mapping", node_);
        }
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
                auto hint = nearest_names(key, keys, 1);
                raise(ErrorCode::UnknownKey,
                      "unknown key '" + key + "' in " + label() +
                          (hint.empty() ? "" : " (did you mean '" + hint.front() + "'?)"),
                      kv.first);
            }
        }
    }

    /// Undefined node when absent.
    YAML::Node get(const std::string& key) const {
        if (!node_.IsMap()) {
            return YAML::Node(YAML::NodeType::Undefined);
        }
        for (const auto& kv : node_) {
            if (kv.first.as<std::string>() == key) {
                return kv.second;
            }
        }
        return YAML::Node(YAML::NodeType::Undefined);
    }

    bool has(const std::string& key) const {
        auto n = get(key);
        return n.IsDefined() && !n.IsNull();
    }

    YAML::Node required(const std::string& key) const {
        auto n = get(key);
        if (!n.IsDefined() || n.IsNull()) {
            raise(ErrorCode::MissingKey, "missing required key '" + child(key) + "'", node_);
        }
        return n;
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    const YAML::Node& node() const { return node_; }

private:
    std::string label() const { return path_.empty() ? "the document root" : "'" + path_ + "'"; }

    YAML::Node node_;
    std::string path_;
};

int64_t as_int(const YAML::Node& n, const std::string& where) {
    if (scalar_type(n) != ScalarType::Int) {
        raise(ErrorCode::TypeError, where + " must be an integer", n);
    }
    return std::stoll(n.Scalar());
}

double as_double(const YAML::Node& n, const std::string& where) {
    const auto t = scalar_type(n);
    if (t != ScalarType::Int && t != ScalarType::Float) {
        raise(ErrorCode::TypeError, where + " must be a number", n);
    }
    return yaml_to_json(n).get<double>();
}

bool as_bool(const YAML::Node& n, const std::string& where) {
    if (scalar_type(n) != ScalarType::Bool) {
        raise(ErrorCode::TypeError, where + " must be true or false", n);
    }
    return yaml_to_json(n).get<bool>();
}

std::string as_string(const YAML::Node& n, const std::string& where) {
    if (!n.IsScalar() || scalar_type(n) == ScalarType::Null) {
        raise(ErrorCode::TypeError, where + " must be a string", n);
    }
    return n.Scalar();
}

std::vector<std::string> as_strings(const YAML::Node& n, const std::string& where) {
    if (!n.IsSequence()) {
        raise(ErrorCode::TypeError, where + " must be a list of strings", n);
    }
    std::vector<std::string> out;
    for (const auto& item : n) {
        out.push_back(as_string(item, where + " entries"));
    }
    return out;
}

std::vector<double> as_doubles(const YAML::Node& n, const std::string& where) {
    if (!n.IsSequence()) {
        raise(ErrorCode::TypeError, where + " must be a list of numbers", n);
    }
    std::vector<double> out;
    for (const auto& item : n) {
        out.push_back(as_double(item, where + " entries"));
    }
    return out;
}

fs::path as_path(const YAML::Node& n, const std::string& where, const fs::path& base) {
    fs::path p = as_string(n, where);
    return p.is_absolute() ? p.lexically_normal() : (base / p).lexically_normal();
}

std::string as_choice(const YAML::Node& n, const std::string& where, const std::vector<std::string>& choices) {
    auto s = as_string(n, where);
    if (std::find(choices.begin(), choices.end(), s) == choices.end()) {
        raise(ErrorCode::TypeError, where + " must be one of: " + join(choices, ", "), n);
    }
    return s;
}

template <typename Builder>
ComponentSpec as_component(const YAML::Node& n, const std::string& where, const RegistrySet<Builder>& registry) {
    ComponentSpec spec;
    // yaml-cpp assignment rebinds the referenced node, so never reassign these.
    const Section s(n.IsMap() ? n : YAML::Node(YAML::NodeType::Undefined), where, {"name", "args"});
    const YAML::Node name_node = n.IsMap() ? s.required("name") : n;
    const YAML::Node args_node = s.get("args");
    spec.name = as_string(name_node, n.IsMap() ? where + ".name" : where);
    if (args_node.IsDefined() && !args_node.IsNull() && !args_node.IsMap()) {
        raise(ErrorCode::TypeError, where + ".args must be a mapping", args_node);
    }
    const json user = args_node.IsDefined() && !args_node.IsNull() ? yaml_to_json(args_node) : json::object();
    const Descriptor<Builder>* desc = nullptr;
    try {
        desc = &registry.resolve(spec.name);
    } catch (const Error& e) {
        raise(e.code(), e.what(), name_node);
    }
    try {
        spec.args = models::resolve_args(desc->default_args, user, where + ".args");
    } catch (const Error& e) {
        raise(e.code(), e.what(), args_node.IsDefined() ? args_node : n);
    }
    return spec;
}

std::string task_kind_name(models::TaskKind k) { return models::to_string(k); }

}  // namespace

RunConfig parse_config_node(const YAML::Node& root, const fs::path& base_dir) {
    if (!root.IsDefined() || root.IsNull()) {
        throw ConfigError(ErrorCode::MissingKey, "config document is empty");
    }
    const fs::path base = fs::absolute(base_dir).lexically_normal();
    Section top(root, "", {"task", "model", "data", "optimizer", "scheduler", "trainer"});
    RunConfig cfg;
    auto& task = cfg.task;

    Section t(top.get("task"), "task", {"kind", "num_classes", "ignore_index", "monitor"});
    if (t.has("kind")) {
        task.kind = models::parse_task_kind(
            as_choice(t.get("kind"), "task.kind", {"segmentation", "regression", "classification"}));
    }
    if (t.has("num_classes")) {
        task.num_classes = as_int(t.get("num_classes"), "task.num_classes");
    }
    if (t.has("ignore_index")) {
        task.ignore_index = as_int(t.get("ignore_index"), "task.ignore_index");
    }
    if (t.has("monitor")) {
        task.monitor = as_string(t.get("monitor"), "task.monitor");
    }

    Section o(top.get("optimizer"), "optimizer", {"name", "lr", "weight_decay"});
    if (o.has("name")) {
        as_choice(o.get("name"), "optimizer.name", {"adamw"});
    }
    if (o.has("lr")) {
        task.lr = as_double(o.get("lr"), "optimizer.lr");
    }
    if (o.has("weight_decay")) {
        task.weight_decay = as_double(o.get("weight_decay"), "optimizer.weight_decay");
    }

    Section sc(top.get("scheduler"), "scheduler", {"name", "factor", "patience", "threshold", "min_lr"});
    if (sc.has("name")) {
        as_choice(sc.get("name"), "scheduler.name", {"reduce_on_plateau"});
    }
    if (sc.has("factor")) {
        task.plateau.factor = as_double(sc.get("factor"), "scheduler.factor");
        if (!(task.plateau.factor > 0.0 && task.plateau.factor < 1.0)) {
            raise(ErrorCode::CrossFieldError, "scheduler.factor must lie in (0, 1)", sc.get("factor"));
        }
    }
    if (sc.has("patience")) {
        task.plateau.patience = as_int(sc.get("patience"), "scheduler.patience");
    }
    if (sc.has("threshold")) {
        task.plateau.threshold = as_double(sc.get("threshold"), "scheduler.threshold");
    }
    if (sc.has("min_lr")) {
        task.plateau.min_lr = as_double(sc.get("min_lr"), "scheduler.min_lr");
    }

    Section tr(top.get("trainer"), "trainer",
               {"max_epochs", "early_stop_patience", "seed", "artifacts_dir", "tile", "stride"});
    if (tr.has("max_epochs")) {
        task.max_epochs = as_int(tr.get("max_epochs"), "trainer.max_epochs");
    }
    if (tr.has("early_stop_patience")) {
        task.early_stop_patience = as_int(tr.get("early_stop_patience"), "trainer.early_stop_patience");
    }
    if (tr.has("seed")) {
        const auto seed = as_int(tr.get("seed"), "trainer.seed");
        if (seed < 0) {
            raise(ErrorCode::TypeError, "trainer.seed must be non-negative", tr.get("seed"));
        }
        task.seed = static_cast<uint64_t>(seed);
    }
    cfg.artifacts_dir = (base / "runs").lexically_normal();
    if (tr.has("artifacts_dir")) {
        cfg.artifacts_dir = as_path(tr.get("artifacts_dir"), "trainer.artifacts_dir", base);
    }
    if (tr.has("tile")) {
        task.tile = as_int(tr.get("tile"), "trainer.tile");
    }
    if (tr.has("stride")) {
        task.stride = as_int(tr.get("stride"), "trainer.stride");
    }

    Section d(top.required("data"), "data",
              {"kind", "root", "images_dir", "labels_dir", "image_grep", "label_grep", "split_files", "dataset_bands",
               "output_bands", "num_frames", "means", "stds", "augment", "batch_size", "predict_dir"});
    auto& data = cfg.data;
    auto& px = data.pixelwise;
    if (d.has("kind")) {
        data.kind = as_choice(d.get("kind"), "data.kind", {"pixelwise", "classification_folder"}) == "pixelwise"
                        ? data::DatasetKind::Pixelwise
                        : data::DatasetKind::ClassificationFolder;
    }
    const bool folder = data.kind == data::DatasetKind::ClassificationFolder;
    if (folder != (task.kind == models::TaskKind::Classification)) {
        raise(ErrorCode::CrossFieldError,
              "data.kind '" + std::string(folder ? "classification_folder" : "pixelwise") +
                  "' does not fit task.kind '" + task_kind_name(task.kind) + "'",
              d.has("kind") ? d.get("kind") : d.node());
    }
    if (folder) {
        data.root = as_path(d.required("root"), "data.root", base);
    } else {
        px.images_dir = as_path(d.required("images_dir"), "data.images_dir", base);
    }
    if (d.has("labels_dir")) {
        px.labels_dir = as_path(d.get("labels_dir"), "data.labels_dir", base);
    }
    if (d.has("image_grep")) {
        px.image_grep = as_string(d.get("image_grep"), "data.image_grep");
    }
    if (d.has("label_grep")) {
        px.label_grep = as_string(d.get("label_grep"), "data.label_grep");
    }
    for (const auto& [key, grep] : {std::pair{"image_grep", px.image_grep}, std::pair{"label_grep", px.label_grep}}) {
        try {
            data::match_grep(grep, "");
        } catch (const Error& e) {
            raise(e.code(), e.what(), d.get(key));
        }
    }
    if (d.has("split_files")) {
        Section sf(d.get("split_files"), "data.split_files", {"train", "val", "test"});
        for (const auto& split : {"train", "val", "test"}) {
            if (sf.has(split)) {
                px.split_files[split] = as_path(sf.get(split), sf.child(split), base);
            }
        }
    }
    auto& bands = px.bands;
    bands.dataset_bands = as_strings(d.required("dataset_bands"), "data.dataset_bands");
    if (d.has("output_bands")) {
        bands.output_bands = as_strings(d.get("output_bands"), "data.output_bands");
    }
    if (d.has("num_frames")) {
        bands.num_frames = as_int(d.get("num_frames"), "data.num_frames");
    }
    if (d.has("means")) {
        bands.means = as_doubles(d.get("means"), "data.means");
    }
    if (d.has("stds")) {
        bands.stds = as_doubles(d.get("stds"), "data.stds");
    }
    try {
        bands.validate();
    } catch (const Error& e) {
        const char* key = e.code() == ErrorCode::UnknownOutputBand ? "output_bands"
                          : e.code() == ErrorCode::LengthMismatch  ? "means"
                                                                   : "dataset_bands";
        raise(ErrorCode::CrossFieldError, e.what(), d.get(key).IsDefined() ? d.get(key) : d.node());
    }
    if (d.has("augment")) {
        Section a(d.get("augment"), "data.augment", {"hflip", "vflip", "rot90"});
        if (a.has("hflip")) {
            data.augment.hflip = as_bool(a.get("hflip"), "data.augment.hflip");
        }
        if (a.has("vflip")) {
            data.augment.vflip = as_bool(a.get("vflip"), "data.augment.vflip");
        }
        if (a.has("rot90")) {
            data.augment.rot90 = as_bool(a.get("rot90"), "data.augment.rot90");
        }
    }
    if (d.has("batch_size")) {
        data.batch_size = as_int(d.get("batch_size"), "data.batch_size");
        if (data.batch_size < 1) {
            raise(ErrorCode::CrossFieldError, "data.batch_size must be >= 1", d.get("batch_size"));
        }
    }
    if (d.has("predict_dir")) {
        data.predict_dir = as_path(d.get("predict_dir"), "data.predict_dir", base);
    }

    const auto& reg = models::builtin_registries();
    Section m(top.required("model"), "model",
              {"backbone", "bands", "pretrained", "necks", "decoder", "head", "freeze_backbone"});
    auto& model = cfg.model;
    model.backbone = as_component(m.required("backbone"), "model.backbone", reg.backbones);
    model.bands = bands.emitted_bands();
    if (m.has("bands")) {
        auto declared = as_strings(m.get("bands"), "model.bands");
        if (declared != model.bands) {
            raise(ErrorCode::CrossFieldError,
                  "model.bands [" + join(declared, ", ") + "] differ from the bands the data emits [" +
                      join(model.bands, ", ") + "]",
                  m.get("bands"));
        }
    }
    if (m.has("pretrained")) {
        model.pretrained = as_path(m.get("pretrained"), "model.pretrained", base);
    }
    if (m.has("necks")) {
        auto necks = m.get("necks");
        if (!necks.IsSequence()) {
            raise(ErrorCode::TypeError, "model.necks must be a list of components", necks);
        }
        for (std::size_t i = 0; i < necks.size(); ++i) {
            model.necks.push_back(as_component(necks[i], "model.necks[" + std::to_string(i) + "]", reg.necks));
        }
    }
    model.decoder = as_component(m.required("decoder"), "model.decoder", reg.decoders);
    model.head.kind = task.kind;
    model.head.num_classes = task.num_classes;
    if (m.has("head")) {
        Section h(m.get("head"), "model.head", {"dropout"});
        if (h.has("dropout")) {
            model.head.dropout = as_double(h.get("dropout"), "model.head.dropout");
        }
    }
    if (m.has("freeze_backbone")) {
        model.freeze_backbone = as_bool(m.get("freeze_backbone"), "model.freeze_backbone");
    }
    try {
        model.head.validate();
    } catch (const Error& e) {
        raise(ErrorCode::CrossFieldError, e.what(), m.get("head").IsDefined() ? m.get("head") : m.node());
    }

    try {
        task.validate();
    } catch (const ConfigError& e) {
        raise(e.code(), e.what(), top.get("trainer").IsDefined() ? top.get("trainer") : root);
    }
    return cfg;
}

RunConfig parse_config(const std::string& text, const fs::path& base_dir) {
    return parse_config_node(load_yaml(text), base_dir);
}

RunConfig parse_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(ErrorCode::MissingKey, "cannot read config file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    auto dir = fs::absolute(path).parent_path();
    return parse_config(ss.str(), dir);
}

namespace {

std::string path_or_null(const fs::path& p) { return p.empty() ? "null" : quote(p.string()); }

std::string strings(const std::vector<std::string>& items) {
    std::vector<std::string> q;
    for (const auto& s : items) {
        q.push_back(quote(s));
    }
    return "[" + join(q, ", ") + "]";
}

std::string numbers(const std::vector<double>& items) {
    std::vector<std::string> q;
    for (double v : items) {
        q.push_back(format_double(v));
    }
    return "[" + join(q, ", ") + "]";
}

std::string component(const ComponentSpec& c) {
    return "{name: " + quote(c.name) + ", args: " + json_to_yaml_flow(c.args) + "}";
}

const char* flag(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string dump_config(const RunConfig& c) {
    const auto& t = c.task;
    const auto& m = c.model;
    const auto& d = c.data;
    const auto& px = d.pixelwise;
    std::ostringstream out;
    out << "task:\n"
        << "  kind: " << models::to_string(t.kind) << "\n"
        << "  num_classes: " << t.num_classes << "\n"
        << "  ignore_index: " << t.ignore_index << "\n"
        << "  monitor: " << quote(t.monitor) << "\n";
    out << "model:\n"
        << "  backbone: " << component(m.backbone) << "\n"
        << "  bands: " << strings(m.bands) << "\n"
        << "  pretrained: " << path_or_null(m.pretrained) << "\n";
    std::vector<std::string> necks;
    for (const auto& n : m.necks) {
        necks.push_back(component(n));
    }
    out << "  necks: [" << join(necks, ", ") << "]\n"
        << "  decoder: " << component(m.decoder) << "\n"
        << "  head: {dropout: " << format_double(m.head.dropout) << "}\n"
        << "  freeze_backbone: " << flag(m.freeze_backbone) << "\n";
    const bool folder = d.kind == data::DatasetKind::ClassificationFolder;
    std::vector<std::string> splits;
    for (const auto& [k, v] : px.split_files) {
        splits.push_back(k + ": " + quote(v.string()));
    }
    out << "data:\n"
        << "  kind: " << (folder ? "classification_folder" : "pixelwise") << "\n"
        << "  root: " << path_or_null(d.root) << "\n"
        << "  images_dir: " << path_or_null(px.images_dir) << "\n"
        << "  labels_dir: " << path_or_null(px.labels_dir) << "\n"
        << "  image_grep: " << quote(px.image_grep) << "\n"
        << "  label_grep: " << quote(px.label_grep) << "\n"
        << "  split_files: {" << join(splits, ", ") << "}\n"
        << "  dataset_bands: " << strings(px.bands.dataset_bands) << "\n"
        << "  output_bands: " << strings(px.bands.output_bands) << "\n"
        << "  num_frames: " << px.bands.num_frames << "\n"
        << "  means: " << numbers(px.bands.means) << "\n"
        << "  stds: " << numbers(px.bands.stds) << "\n"
        << "  augment: {hflip: " << flag(d.augment.hflip) << ", vflip: " << flag(d.augment.vflip)
        << ", rot90: " << flag(d.augment.rot90) << "}\n"
        << "  batch_size: " << d.batch_size << "\n"
        << "  predict_dir: " << path_or_null(d.predict_dir) << "\n";
    out << "optimizer:\n"
        << "  name: adamw\n"
        << "  lr: " << format_double(t.lr) << "\n"
        << "  weight_decay: " << format_double(t.weight_decay) << "\n";
    out << "scheduler:\n"
        << "  name: reduce_on_plateau\n"
        << "  factor: " << format_double(t.plateau.factor) << "\n"
        << "  patience: " << t.plateau.patience << "\n"
        << "  threshold: " << format_double(t.plateau.threshold) << "\n"
        << "  min_lr: " << format_double(t.plateau.min_lr) << "\n";
    out << "trainer:\n"
        << "  max_epochs: " << t.max_epochs << "\n"
        << "  early_stop_patience: " << t.early_stop_patience << "\n"
        << "  seed: " << t.seed << "\n"
        << "  artifacts_dir: " << path_or_null(c.artifacts_dir) << "\n"
        << "  tile: " << t.tile << "\n"
        << "  stride: " << t.stride << "\n";
    return out.str();
}

bool operator==(const RunConfig& a, const RunConfig& b) { return dump_config(a) == dump_config(b); }

models::Model build_model(const RunConfig& config) { return models::build_model(config.model, config.task.seed); }

data::DataModule build_data(const RunConfig& config) {
    return data::make_data_module(config.data, config.task.kind, config.task.num_classes, config.task.ignore_index,
                                  config.task.seed);
}

engine::RunRecord fit_from_config(const RunConfig& config, std::function<void(const engine::EpochRecord&)> on_epoch) {
    auto data = build_data(config);
    auto model = build_model(config);
    engine::FitOptions options;
    options.run_dir = config.artifacts_dir;
    options.config_snapshot = dump_config(config);
    options.on_epoch = std::move(on_epoch);
    return engine::fit(*model, data, config.task, options);
}

}  // namespace geotune::config
