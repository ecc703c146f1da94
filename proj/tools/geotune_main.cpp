// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#include "geotune/cli.hpp"

int main(int argc, char** argv) { return geotune::cli_main(argc, argv); }
