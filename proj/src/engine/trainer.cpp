// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/engine/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "geotune/data/raster.hpp"
#include "geotune/error.hpp"
#include "geotune/models/checkpoint.hpp"
#include "geotune/random.hpp"
#include "geotune/strings.hpp"

namespace geotune::engine {

using nlohmann::json;
namespace F = torch::nn::functional;

void TaskConfig::validate() const {
    auto bad = [](const std::string& msg) { throw ConfigError(ErrorCode::CrossFieldError, msg); };
    if (!(lr > 0.0)) {
        bad("optimizer.lr must be positive");
    }
    if (weight_decay < 0.0) {
        bad("optimizer.weight_decay must be non-negative");
    }
    if (max_epochs < 1) {
        bad("trainer.max_epochs must be >= 1");
    }
    if (early_stop_patience < 1 || early_stop_patience >= max_epochs) {
        bad("trainer.early_stop_patience must lie in [1, max_epochs)");
    }
    if (kind != TaskKind::Regression && num_classes < 2) {
        bad("task.num_classes must be >= 2");
    }
    if (kind == TaskKind::Segmentation && ignore_index >= 0 && ignore_index < num_classes) {
        bad("task.ignore_index collides with a class index");
    }
    auto choices = monitor_choices();
    if (std::find(choices.begin(), choices.end(), monitor) == choices.end()) {
        auto hint = nearest_names(monitor, choices, 1);
        bad("unknown monitor '" + monitor + "'" + (hint.empty() ? "" : " (did you mean '" + hint.front() + "'?)"));
    }
    if (tile < 0 || stride < 0 || stride > tile) {
        bad("inference.stride must lie in [0, tile]");
    }
}

std::vector<std::string> TaskConfig::monitor_choices() const {
    std::vector<std::string> out{"train_loss", "val_loss"};
    for (const auto& m : metric_names(kind, num_classes)) {
        out.push_back("val_" + m);
    }
    return out;
}

const EpochRecord& RunRecord::best() const {
    for (const auto& e : history) {
        if (e.epoch == best_epoch) {
            return e;
        }
    }
    fail(ErrorCode::DataEmpty, "run has no recorded best epoch");
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

struct LossSum {
    torch::Tensor sum;
    int64_t count = 0;
};

LossSum loss_sum(const torch::Tensor& output, const torch::Tensor& labels, const TaskConfig& task) {
    switch (task.kind) {
        case TaskKind::Segmentation: {
            auto target = labels.to(torch::kLong);
            auto sum = F::cross_entropy(
                output, target, F::CrossEntropyFuncOptions().ignore_index(task.ignore_index).reduction(torch::kSum));
            return {sum, (target != task.ignore_index).sum().item<int64_t>()};
        }
        case TaskKind::Classification: {
            auto sum = F::cross_entropy(output, labels.to(torch::kLong),
                                        F::CrossEntropyFuncOptions().reduction(torch::kSum));
            return {sum, labels.size(0)};
        }
        case TaskKind::Regression: {
            auto sum = F::mse_loss(output.select(1, 0), labels.to(output.scalar_type()),
                                   F::MSELossFuncOptions().reduction(torch::kSum));
            return {sum, labels.numel()};
        }
    }
    fail(ErrorCode::InvalidArgument, "unknown task kind");
}

std::vector<torch::Tensor> batch_outputs(models::EncoderDecoderModel& model, const torch::Tensor& images,
                                         const TaskConfig& task) {
    if (task.tile > 0 && task.kind != TaskKind::Classification) {
        std::vector<torch::Tensor> outs;
        for (int64_t i = 0; i < images.size(0); ++i) {
            outs.push_back(infer(model, images[i], task));
        }
        return {torch::stack(outs)};
    }
    return {model.forward(images)};
}

void set_lr(torch::optim::Optimizer& opt, double lr) {
    for (auto& group : opt.param_groups()) {
        static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
    }
}

double monitored(const EpochRecord& e, const std::string& monitor) {
    if (monitor == "train_loss") {
        return e.train_loss;
    }
    if (monitor == "val_loss") {
        return e.val_loss;
    }
    auto it = e.val_metrics.find(monitor.substr(4));
    return it == e.val_metrics.end() ? std::nan("") : it->second;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) {
        fail(ErrorCode::IoError, "failed writing " + path.string());
    }
}

}  // namespace

json RunRecord::to_json() const {
    json hist = json::array();
    for (const auto& e : history) {
        json m = json::object();
        for (const auto& [k, v] : e.val_metrics) {
            m[k] = finite_or_null(v);
        }
        hist.push_back({{"epoch", e.epoch},
                        {"train_loss", finite_or_null(e.train_loss)},
                        {"val_loss", finite_or_null(e.val_loss)},
                        {"val_metrics", m},
                        {"lr", e.lr}});
    }
    json j{{"status", status},
           {"seed", seed},
           {"monitor", monitor},
           {"best_epoch", best_epoch},
           {"best_value", finite_or_null(best_value)},
           {"checkpoint", checkpoint.string()},
           {"wall_time_s", wall_time_s},
           {"history", hist},
           {"config", config_snapshot}};
    if (!error.empty()) {
        j["error"] = error;
    }
    j["test_metrics"] = test_metrics ? test_metrics->to_json() : json();
    j["test_loss"] = test_loss ? finite_or_null(*test_loss) : json();
    return j;
}

torch::Tensor task_loss(const torch::Tensor& output, const torch::Tensor& labels, const TaskConfig& task) {
    auto [sum, count] = loss_sum(output, labels, task);
    if (count == 0) {
        // Keeps the graph connected while contributing no gradient.
        return output.sum() * 0.0;
    }
    return sum / static_cast<double>(count);
}

Evaluation evaluate(models::EncoderDecoderModel& model, const data::DataModule& data, const std::string& split,
                    const TaskConfig& task) {
    const bool was_training = model.is_training();
    model.eval();
    torch::NoGradGuard no_grad;
    MetricAccumulator acc(task.kind, task.num_classes, task.ignore_index);
    double sum = 0.0;
    int64_t count = 0;
    for (const auto& batch : data.eval_batches(split)) {
        auto output = batch_outputs(model, batch.images, task).front();
        auto ls = loss_sum(output, batch.labels, task);
        sum += ls.sum.item<double>();
        count += ls.count;
        acc.add(output, batch.labels);
    }
    model.train(was_training);
    return {count > 0 ? sum / static_cast<double>(count) : std::nan(""), acc.report()};
}

std::vector<std::string> history_columns(const TaskConfig& task) {
    std::vector<std::string> cols{"epoch", "train_loss", "val_loss"};
    for (const auto& m : metric_names(task.kind, task.num_classes)) {
        cols.push_back("val_" + m);
    }
    cols.push_back("lr");
    return cols;
}

std::string history_row(const EpochRecord& e, const std::vector<std::string>& columns) {
    std::vector<std::string> cells;
    for (const auto& c : columns) {
        if (c == "epoch") {
            cells.push_back(std::to_string(e.epoch));
        } else if (c == "lr") {
            cells.push_back(csv_number(e.lr));
        } else {
            cells.push_back(csv_number(monitored(e, c)));
        }
    }
    return join(cells, ",");
}

RunRecord fit(models::EncoderDecoderModel& model, const data::DataModule& data, const TaskConfig& task,
              const FitOptions& options) {
    task.validate();
    if (data.split_size("train") == 0) {
        fail(ErrorCode::DataEmpty, "training split is empty");
    }
    if (data.split_size("val") == 0) {
        fail(ErrorCode::DataEmpty, "validation split is empty");
    }
    const auto start = std::chrono::steady_clock::now();
    RunRecord record;
    record.seed = task.seed;
    record.monitor = task.monitor;
    record.config_snapshot = options.config_snapshot;

    const bool artifacts = !options.run_dir.empty();
    const auto columns = history_columns(task);
    std::ofstream csv;
    if (artifacts) {
        fs::create_directories(options.run_dir);
        if (!options.config_snapshot.empty()) {
            write_text(options.run_dir / "config.yaml", options.config_snapshot);
        }
        csv.open(options.run_dir / "metrics.csv", std::ios::trunc);
        csv << join(columns, ",") << '\n';
    }

    torch::manual_seed(derive_seed(task.seed, "fit"));
    torch::optim::AdamW optimizer(model.trainable_parameters(),
                                  torch::optim::AdamWOptions(task.lr).weight_decay(task.weight_decay));
    const auto mode = monitor_mode(task.monitor);
    PlateauScheduler scheduler(task.lr, task.plateau, mode);
    EarlyStopping stopper(task.early_stop_patience, mode);
    std::optional<models::Checkpoint> best_state;
    double lr = task.lr;

    try {
        for (int64_t epoch = 1; epoch <= task.max_epochs; ++epoch) {
            set_lr(optimizer, lr);
            model.train();
            double sum = 0.0;
            int64_t count = 0;
            for (const auto& batch : data.train_batches(epoch)) {
                optimizer.zero_grad();
                auto output = model.forward(batch.images);
                auto ls = loss_sum(output, batch.labels, task);
                if (ls.count == 0) {
                    continue;
                }
                auto loss = ls.sum / static_cast<double>(ls.count);
                const double value = loss.item<double>();
                if (!std::isfinite(value)) {
                    fail(ErrorCode::NonFiniteLoss, "non-finite training loss at epoch " + std::to_string(epoch));
                }
                loss.backward();
                optimizer.step();
                sum += ls.sum.item<double>();
                count += ls.count;
            }
            EpochRecord e;
            e.epoch = epoch;
            e.lr = lr;
            e.train_loss = count > 0 ? sum / static_cast<double>(count) : std::nan("");
            auto val = evaluate(model, data, "val", task);
            if (!std::isfinite(val.loss) && val.report.count > 0) {
                fail(ErrorCode::NonFiniteLoss, "non-finite validation loss at epoch " + std::to_string(epoch));
            }
            e.val_loss = val.loss;
            e.val_metrics = val.report.flat();
            record.history.push_back(e);

            const double value = monitored(e, task.monitor);
            const bool stop = stopper.step(value);
            if (stopper.improved()) {
                best_state = models::capture_state(model);
                record.best_epoch = epoch;
                record.best_value = value;
            }
            lr = scheduler.step(value);
            if (artifacts) {
                csv << history_row(e, columns) << '\n';
                csv.flush();
            }
            if (options.on_epoch) {
                options.on_epoch(e);
            }
            if (stop) {
                break;
            }
        }
        if (!best_state) {
            fail(ErrorCode::NonFiniteLoss, "monitored value '" + task.monitor + "' never became finite");
        }
        models::restore_state(model, *best_state);
        if (artifacts) {
            record.checkpoint = options.run_dir / "best.ckpt";
            models::save_model(record.checkpoint, model, {{"best_epoch", record.best_epoch}});
        }
        if (data.split_size("test") > 0) {
            auto t = evaluate(model, data, "test", task);
            record.test_metrics = t.report;
            record.test_loss = t.loss;
        }
    } catch (const Error& err) {
        if (err.code() != ErrorCode::NonFiniteLoss) {
            throw;
        }
        record.status = "failed";
        record.error = err.what();
    }
    record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (artifacts) {
        write_text(options.run_dir / "report.json", record.to_json().dump(2) + "\n");
    }
    return record;
}

std::vector<int64_t> tile_origins(int64_t length, int64_t tile, int64_t stride) {
    if (tile < 1 || stride < 1 || stride > tile) {
        fail(ErrorCode::InvalidArgument, "tiling needs 1 <= stride <= tile");
    }
    std::vector<int64_t> out{0};
    if (length <= tile) {
        return out;
    }
    while (out.back() + tile < length) {
        out.push_back(std::min(out.back() + stride, length - tile));
    }
    return out;
}

namespace {

// Reflect padding on the bottom/right edges, in steps small enough for
// reflection to stay inside the current extent.
torch::Tensor pad_to(torch::Tensor x, int64_t h, int64_t w) {
    while (x.size(-2) < h || x.size(-1) < w) {
        const auto need_h = std::max<int64_t>(0, h - x.size(-2));
        const auto need_w = std::max<int64_t>(0, w - x.size(-1));
        const auto step_h = std::min(need_h, x.size(-2) - 1);
        const auto step_w = std::min(need_w, x.size(-1) - 1);
        if ((need_h > 0 && step_h == 0) || (need_w > 0 && step_w == 0)) {
            return F::pad(x, F::PadFuncOptions({0, need_w, 0, need_h}).mode(torch::kReplicate));
        }
        x = F::pad(x, F::PadFuncOptions({0, step_w, 0, step_h}).mode(torch::kReflect));
    }
    return x;
}

}  // namespace

torch::Tensor sliding_window_predict(const ForwardFn& forward, const torch::Tensor& image, int64_t tile,
                                     int64_t stride) {
    if (image.dim() != 4) {
        fail(ErrorCode::ShapeMismatch, "sliding-window input must be (T, C, H, W)");
    }
    if (stride == 0) {
        stride = tile;
    }
    const auto h = image.size(2);
    const auto w = image.size(3);
    auto x = image;
    if (h < tile || w < tile) {
        const auto frames = image.size(0);
        const auto bands = image.size(1);
        auto flat = image.reshape({1, frames * bands, h, w});
        flat = pad_to(flat, std::max(h, tile), std::max(w, tile));
        x = flat.reshape({frames, bands, flat.size(2), flat.size(3)});
    }
    const auto ys = tile_origins(x.size(2), tile, stride);
    const auto xs = tile_origins(x.size(3), tile, stride);
    torch::Tensor sum;
    auto count = torch::zeros({1, x.size(2), x.size(3)}, torch::kFloat32);
    for (auto y : ys) {
        for (auto x0 : xs) {
            auto patch = x.slice(2, y, y + tile).slice(3, x0, x0 + tile).unsqueeze(0);
            auto out = forward(patch);
            if (out.dim() != 4 || out.size(0) != 1 || out.size(2) != tile || out.size(3) != tile) {
                fail(ErrorCode::ShapeMismatch, "tile forward must return (1, K, tile, tile)");
            }
            if (!sum.defined()) {
                sum = torch::zeros({out.size(1), x.size(2), x.size(3)}, out.options());
            }
            sum.slice(1, y, y + tile).slice(2, x0, x0 + tile) += out[0];
            count.slice(1, y, y + tile).slice(2, x0, x0 + tile) += 1.0f;
        }
    }
    auto avg = sum / count;
    return avg.slice(1, 0, h).slice(2, 0, w).contiguous();
}

torch::Tensor sliding_window_predict(models::EncoderDecoderModel& model, const torch::Tensor& image, int64_t tile,
                                     int64_t stride) {
    if (model.input_size() > 0 && tile > model.input_size()) {
        fail(ErrorCode::InvalidArgument, "tile " + std::to_string(tile) + " exceeds the model input size " +
                                             std::to_string(model.input_size()));
    }
    const bool was_training = model.is_training();
    model.eval();
    torch::NoGradGuard no_grad;
    auto out = sliding_window_predict([&](const torch::Tensor& t) { return model.forward(t); }, image, tile, stride);
    model.train(was_training);
    return out;
}

torch::Tensor infer(models::EncoderDecoderModel& model, const torch::Tensor& image, const TaskConfig& task) {
    if (task.tile > 0 && task.kind != TaskKind::Classification) {
        return sliding_window_predict(model, image, task.tile, task.stride);
    }
    const bool was_training = model.is_training();
    model.eval();
    torch::NoGradGuard no_grad;
    auto out = model.forward(image.unsqueeze(0))[0];
    model.train(was_training);
    return out;
}

MetricReport test(models::EncoderDecoderModel& model, const data::DataModule& data, const TaskConfig& task,
                  const std::string& split) {
    if (data.split_size(split) == 0) {
        fail(ErrorCode::DataEmpty, "split '" + split + "' is empty");
    }
    return evaluate(model, data, split, task).report;
}

std::vector<fs::path> predict(models::EncoderDecoderModel& model, const std::vector<fs::path>& inputs,
                              const data::DataConfig& data, const TaskConfig& task, const fs::path& out_dir) {
    if (inputs.empty()) {
        fail(ErrorCode::DataEmpty, "nothing to predict");
    }
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    std::vector<std::string> rows{"id,class"};
    for (const auto& path : inputs) {
        auto image = data::load_image(path, data.pixelwise.bands);
        const auto id = data.kind == data::DatasetKind::ClassificationFolder
                            ? path.stem().string()
                            : data::sample_id(path, data.pixelwise.image_grep);
        auto out = infer(model, image, task);
        switch (task.kind) {
            case TaskKind::Segmentation: {
                auto target = out_dir / (id + "_pred.bsq");
                data::write_raster(target, out.argmax(0).to(torch::kInt16).unsqueeze(0));
                written.push_back(target);
                break;
            }
            case TaskKind::Regression: {
                auto target = out_dir / (id + "_pred.bsq");
                data::write_raster(target, out.select(0, 0).to(torch::kFloat32).unsqueeze(0));
                written.push_back(target);
                break;
            }
            case TaskKind::Classification:
                rows.push_back(id + "," + std::to_string(out.argmax(0).item<int64_t>()));
                break;
        }
    }
    if (task.kind == TaskKind::Classification) {
        auto target = out_dir / "predictions.csv";
        write_text(target, join(rows, "\n") + "\n");
        written.push_back(target);
    }
    return written;
}

}  // namespace geotune::engine
