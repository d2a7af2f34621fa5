#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace coxhoa::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kNumerical = 3 };

// Runs `coxhoa <args...>` writing the report (or error JSON) to `out` unless
// --out redirects it, and human-readable diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace coxhoa::cli
