// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace geotune {

std::size_t edit_distance(std::string_view a, std::string_view b);

/// Up to `limit` candidates closest to `name` by edit distance, nearest first.
std::vector<std::string> nearest_names(std::string_view name, const std::vector<std::string>& candidates,
                                       std::size_t limit = 3);

std::string join(const std::vector<std::string>& items, std::string_view sep);

/// Shortest decimal text that parses back to exactly `value`; always carries
/// a '.' or exponent so it reads back as floating point.
std::string format_double(double value);

}  // namespace geotune
