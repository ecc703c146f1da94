// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/iterate/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "geotune/error.hpp"
#include "geotune/strings.hpp"

namespace geotune::iterate {

using nlohmann::json;

namespace {

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed(double v, int digits = 2) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string short_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string cell(const json& v) {
    if (v.is_number_float()) {
        return exact(v.get<double>());
    }
    if (v.is_number()) {
        return v.dump();
    }
    if (v.is_string()) {
        return v.get<std::string>();
    }
    return v.dump();
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) {
        fail(ErrorCode::IoError, "failed writing " + path.string());
    }
}

// Maps a parameter value to [0, 1] along its (log) range.
double unit(const ParamDef& p, const json& v) {
    if (p.kind == ParamKind::Categorical) {
        for (std::size_t i = 0; i < p.choices.size(); ++i) {
            if (p.choices[i] == v) {
                return p.choices.size() > 1 ? static_cast<double>(i) / static_cast<double>(p.choices.size() - 1) : 0.5;
            }
        }
        return 0.5;
    }
    const double x = v.get<double>();
    if (p.log_scale) {
        return (std::log10(x) - std::log10(p.low)) / (std::log10(p.high) - std::log10(p.low));
    }
    return (x - p.low) / (p.high - p.low);
}

std::string color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    // Blue to orange.
    const int r = static_cast<int>(std::lround(43 + t * (221 - 43)));
    const int g = static_cast<int>(std::lround(108 + t * (107 - 108)));
    const int b = static_cast<int>(std::lround(176 + t * (32 - 176)));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace

std::string trials_csv(const StudyState& state) {
    std::vector<std::string> header{"trial_id"};
    for (const auto& p : state.space.params) {
        header.push_back(p.path);
    }
    header.insert(header.end(), {"objective", "status", "seed"});
    std::ostringstream out;
    out << join(header, ",") << "\n";
    auto trials = state.trials;
    std::sort(trials.begin(), trials.end(), [](const auto& a, const auto& b) { return a.trial_id < b.trial_id; });
    for (const auto& t : trials) {
        std::vector<std::string> row{std::to_string(t.trial_id)};
        for (const auto& p : state.space.params) {
            auto it = t.params.find(p.path);
            row.push_back(it == t.params.end() ? "" : cell(it->second));
        }
        row.push_back(t.objective ? exact(*t.objective) : "");
        row.push_back(t.status);
        row.push_back(std::to_string(t.seed));
        out << join(row, ",") << "\n";
    }
    return out.str();
}

std::string trials_svg(const StudyState& state) {
    constexpr double W = 640, H = 420, left = 80, right = 150, top = 40, bottom = 60;
    const double pw = W - left - right;
    const double ph = H - top - bottom;

    const ParamDef* xp = nullptr;
    const ParamDef* cp = nullptr;
    for (const auto& p : state.space.params) {
        if (!xp && p.kind == ParamKind::Continuous) {
            xp = &p;
        }
    }
    if (!xp && !state.space.params.empty()) {
        xp = &state.space.params.front();
    }
    for (const auto& p : state.space.params) {
        if (&p != xp) {
            cp = &p;
            break;
        }
    }

    std::vector<const TrialRecord*> done;
    for (const auto& t : state.trials) {
        if (t.complete()) {
            done.push_back(&t);
        }
    }
    double ymin = 0.0;
    double ymax = 1.0;
    if (!done.empty()) {
        ymin = ymax = *done.front()->objective;
        for (const auto* t : done) {
            ymin = std::min(ymin, *t->objective);
            ymax = std::max(ymax, *t->objective);
        }
        const double pad = ymax > ymin ? 0.05 * (ymax - ymin) : std::max(0.05 * std::abs(ymin), 1e-6);
        ymin -= pad;
        ymax += pad;
    }
    auto sx = [&](const json& v) { return left + (xp ? unit(*xp, v) : 0.5) * pw; };
    auto sy = [&](double v) { return top + (1.0 - (v - ymin) / (ymax - ymin)) * ph; };

    const bool xlog = xp && xp->kind == ParamKind::Continuous && xp->log_scale;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << " " << H << "\">\n";
    o << "  <title>" << escape(state.benchmark + " / " + state.task) << "</title>\n";
    o << "  <rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    o << "  <rect class=\"plot-area\" x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"";
    if (xp && xp->kind == ParamKind::Continuous) {
        o << " data-x-param=\"" << escape(xp->path) << "\" data-x-min=\"" << exact(xp->low) << "\" data-x-max=\""
          << exact(xp->high) << "\" data-x-log=\"" << (xlog ? "true" : "false") << "\"";
    }
    o << " data-y-min=\"" << exact(ymin) << "\" data-y-max=\"" << exact(ymax) << "\"/>\n";

    // Axis ticks.
    o << "  <g class=\"x-axis\" font-size=\"11\" text-anchor=\"middle\">\n";
    if (xp && xp->kind == ParamKind::Continuous) {
        std::vector<double> ticks;
        if (xlog) {
            for (int e = static_cast<int>(std::ceil(std::log10(xp->low) - 1e-9));
                 e <= static_cast<int>(std::floor(std::log10(xp->high) + 1e-9)); ++e) {
                ticks.push_back(std::pow(10.0, e));
            }
        } else {
            for (int i = 0; i <= 4; ++i) {
                ticks.push_back(xp->low + (xp->high - xp->low) * i / 4.0);
            }
        }
        for (double t : ticks) {
            const double x = sx(t);
            o << "    <line x1=\"" << fixed(x) << "\" y1=\"" << top + ph << "\" x2=\"" << fixed(x) << "\" y2=\""
              << top + ph + 5 << "\" stroke=\"#444\"/>\n";
            o << "    <text x=\"" << fixed(x) << "\" y=\"" << top + ph + 18 << "\">" << short_number(t) << "</text>\n";
        }
    } else if (xp) {
        for (const auto& c : xp->choices) {
            o << "    <text x=\"" << fixed(sx(c)) << "\" y=\"" << top + ph + 18 << "\">" << escape(cell(c))
              << "</text>\n";
        }
    }
    o << "  </g>\n";
    o << "  <g class=\"y-axis\" font-size=\"11\" text-anchor=\"end\">\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = ymin + (ymax - ymin) * i / 4.0;
        o << "    <text x=\"" << left - 6 << "\" y=\"" << fixed(sy(v) + 4) << "\">" << short_number(v) << "</text>\n";
    }
    o << "  </g>\n";
    o << "  <text x=\"" << left + pw / 2 << "\" y=\"" << H - 15 << "\" font-size=\"13\" text-anchor=\"middle\">"
      << escape(xp ? xp->path + (xlog ? " (log)" : "") : "") << "</text>\n";
    o << "  <text x=\"20\" y=\"" << top + ph / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
      << top + ph / 2 << ")\">" << escape(state.monitor) << "</text>\n";
    if (cp) {
        o << "  <g class=\"legend\" font-size=\"11\">\n";
        o << "    <text x=\"" << left + pw + 15 << "\" y=\"" << top + 10 << "\">color: " << escape(cp->path)
          << "</text>\n";
        for (int i = 0; i <= 4; ++i) {
            o << "    <rect x=\"" << left + pw + 15 << "\" y=\"" << top + 20 + i * 16 << "\" width=\"12\" height=\"12\" "
              << "fill=\"" << color(i / 4.0) << "\"/>\n";
            std::string label;
            if (cp->kind == ParamKind::Continuous) {
                const double t = i / 4.0;
                const double v = cp->log_scale
                                     ? std::pow(10.0, std::log10(cp->low) + t * (std::log10(cp->high) - std::log10(cp->low)))
                                     : cp->low + t * (cp->high - cp->low);
                label = short_number(v);
            }
            o << "    <text x=\"" << left + pw + 32 << "\" y=\"" << top + 30 + i * 16 << "\">" << escape(label)
              << "</text>\n";
        }
        o << "  </g>\n";
    }

    const auto* best = state.best();
    o << "  <g class=\"trials\">\n";
    for (const auto* t : done) {
        if (t == best) {
            continue;
        }
        const double x = sx(t->params.at(xp->path));
        const double y = sy(*t->objective);
        const auto fill = cp ? color(unit(*cp, t->params.at(cp->path))) : color(0.0);
        o << "    <circle class=\"trial\" data-trial=\"" << t->trial_id << "\" cx=\"" << fixed(x) << "\" cy=\""
          << fixed(y) << "\" r=\"5\" fill=\"" << fill << "\" stroke=\"#222\" stroke-width=\"0.5\"/>\n";
    }
    if (best) {
        const double x = sx(best->params.at(xp->path));
        const double y = sy(*best->objective);
        const auto fill = cp ? color(unit(*cp, best->params.at(cp->path))) : color(0.0);
        o << "    <polygon class=\"best\" data-trial=\"" << best->trial_id << "\" points=\"" << fixed(x) << ","
          << fixed(y - 9) << " " << fixed(x + 9) << "," << fixed(y) << " " << fixed(x) << "," << fixed(y + 9) << " "
          << fixed(x - 9) << "," << fixed(y) << "\" fill=\"" << fill << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
    }
    o << "  </g>\n";
    o << "</svg>\n";
    return o.str();
}

ReportFiles emit_report(const StudyState& state, const fs::path& out_dir) {
    if (state.trials.empty()) {
        fail(ErrorCode::DataEmpty, "study has no trials to report");
    }
    fs::create_directories(out_dir);
    ReportFiles files{out_dir / "trials.csv", out_dir / "trials.svg", out_dir / "report.json"};
    write_file(files.csv, trials_csv(state));
    write_file(files.svg, trials_svg(state));

    int64_t complete = 0;
    for (const auto& t : state.trials) {
        complete += t.complete() ? 1 : 0;
    }
    json best = nullptr;
    if (const auto* b = state.best()) {
        best = b->to_json();
    }
    json curve = json::array();
    for (double v : state.best_so_far()) {
        curve.push_back(std::isfinite(v) ? json(v) : json());
    }
    json report{{"benchmark", state.benchmark},
                {"task", state.task},
                {"monitor", state.monitor},
                {"n_trials", state.trials.size()},
                {"complete", complete},
                {"failed", static_cast<int64_t>(state.trials.size()) - complete},
                {"parallelism", state.parallelism},
                {"seed", state.seed},
                {"tpe", state.tpe.to_json()},
                {"space", state.space.to_json()},
                {"best", best},
                {"best_so_far", curve}};
    write_file(files.json, report.dump(2) + "\n");
    return files;
}

std::vector<CsvTrial> read_trials_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::IoError, "cannot read " + path.string());
    }
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) {
            header.push_back(c);
        }
    }
    auto col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            fail(ErrorCode::IoError, path.string() + " lacks a '" + name + "' column");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto id_col = col("trial_id");
    const auto obj_col = col("objective");
    const auto status_col = col("status");
    std::vector<CsvTrial> out;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) {
                break;
            }
            start = comma + 1;
        }
        CsvTrial t;
        t.trial_id = std::stoll(cells.at(id_col));
        if (!cells.at(obj_col).empty()) {
            t.objective = std::strtod(cells.at(obj_col).c_str(), nullptr);
        }
        t.status = cells.at(status_col);
        out.push_back(t);
    }
    return out;
}

}  // namespace geotune::iterate
