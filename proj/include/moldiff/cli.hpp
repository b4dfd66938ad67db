//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_CLI_HPP_
#define MOLDIFF_CLI_HPP_

#include <string>
#include <vector>

namespace moldiff::cli {

// Runs the command-line tool on argv-style arguments (program name excluded)
// and returns the process exit code. Never throws: 0 on success, 1 for
// unexpected failures, 2 for flag/config problems, 3 for file IO, 4 for bad
// data, 5 for numerical breakdown. Reports go to stdout or --out; progress
// logs go to stderr as key=value lines.
int run_cli(const std::vector<std::string>& args);

}  // namespace moldiff::cli

#endif  // MOLDIFF_CLI_HPP_
