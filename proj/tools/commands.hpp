// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lmtc::cli {

// Runs one lmtc invocation. `args` excludes the program name. Returns the
// process exit code; errors are reported on `err`.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace lmtc::cli
