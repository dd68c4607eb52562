// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <vector>

#include "zslpc/cli.hpp"

int main(int argc, char** argv) {
  return zslpc::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
