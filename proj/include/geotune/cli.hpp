// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace geotune {

/// Entry point of the `geotune` command. Returns 0 on success, 1 for config
/// and usage errors, 2 for runtime failures.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cli_main(int argc, char** argv);

}  // namespace geotune
