// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/registry.hpp"

#include <charconv>
#include <cmath>
#include <numeric>

#include "geotune/error.hpp"
#include "geotune/strings.hpp"

namespace geotune {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DuplicateName: return "DuplicateName";
        case ErrorCode::InvalidName: return "InvalidName";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::AmbiguousNamespace: return "AmbiguousNamespace";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::DuplicateBand: return "DuplicateBand";
        case ErrorCode::EmptyTargetBands: return "EmptyTargetBands";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::TokenCountMismatch: return "TokenCountMismatch";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::PyramidShapeError: return "PyramidShapeError";
        case ErrorCode::NoGridInput: return "NoGridInput";
        case ErrorCode::KindMismatch: return "KindMismatch";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ResolveError: return "ResolveError";
        case ErrorCode::ShapeIncompatibility: return "ShapeIncompatibility";
        case ErrorCode::CheckpointBandMismatch: return "CheckpointBandMismatch";
        case ErrorCode::CheckpointMissing: return "CheckpointMissing";
        case ErrorCode::CheckpointFormat: return "CheckpointFormat";
        case ErrorCode::MissingSplit: return "MissingSplit";
        case ErrorCode::ClassMismatchAcrossSplits: return "ClassMismatchAcrossSplits";
        case ErrorCode::UnpairedImage: return "UnpairedImage";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::BandCountIndivisible: return "BandCountIndivisible";
        case ErrorCode::UnknownOutputBand: return "UnknownOutputBand";
        case ErrorCode::InvalidPattern: return "InvalidPattern";
        case ErrorCode::InvalidMaskValue: return "InvalidMaskValue";
        case ErrorCode::RasterFormat: return "RasterFormat";
        case ErrorCode::DataEmpty: return "DataEmpty";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::SyntaxError: return "SyntaxError";
        case ErrorCode::UnknownKey: return "UnknownKey";
        case ErrorCode::TypeError: return "TypeError";
        case ErrorCode::CrossFieldError: return "CrossFieldError";
        case ErrorCode::MissingKey: return "MissingKey";
        case ErrorCode::NoCompletedTrials: return "NoCompletedTrials";
        case ErrorCode::BenchmarkConfigError: return "BenchmarkConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

bool is_config_error(ErrorCode code) {
    switch (code) {
        case ErrorCode::SyntaxError:
        case ErrorCode::UnknownKey:
        case ErrorCode::TypeError:
        case ErrorCode::CrossFieldError:
        case ErrorCode::MissingKey:
        case ErrorCode::BenchmarkConfigError:
        case ErrorCode::NotFound:
        case ErrorCode::ResolveError:
        case ErrorCode::InvalidName:
        case ErrorCode::AmbiguousNamespace:
        case ErrorCode::ShapeIncompatibility:
        case ErrorCode::InvalidPattern:
        case ErrorCode::UnknownOutputBand:
            return true;
        default:
            return false;
    }
}

std::pair<std::string, std::string> split_qualified(const std::string& qualified) {
    auto pos = qualified.find('_');
    if (pos == std::string::npos || pos == 0) {
        return {qualified, {}};
    }
    return {qualified.substr(0, pos), qualified.substr(pos + 1)};
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> row(b.size() + 1);
    std::iota(row.begin(), row.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diagonal = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t above = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diagonal + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diagonal = above;
        }
    }
    return row[b.size()];
}

std::vector<std::string> nearest_names(std::string_view name, const std::vector<std::string>& candidates,
                                       std::size_t limit) {
    std::vector<std::pair<std::size_t, std::string>> scored;
    scored.reserve(candidates.size());
    for (const auto& c : candidates) {
        scored.emplace_back(edit_distance(name, c), c);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& l, const auto& r) { return l.first < r.first; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scored.size() && i < limit; ++i) {
        out.push_back(scored[i].second);
    }
    return out;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) {
            out += sep;
        }
        out += items[i];
    }
    return out;
}

std::string format_double(double value) {
    if (std::isnan(value)) {
        return ".nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? ".inf" : "-.inf";
    }
    char buffer[64];
    auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    std::string text(buffer, end);
    if (text.find_first_of(".eE") == std::string::npos) {
        text += ".0";
    }
    return text;
}

}  // namespace geotune
