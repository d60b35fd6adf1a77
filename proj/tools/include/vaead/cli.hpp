#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vaead::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kRuntime = 3 };

// Runs one `vaead` invocation. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace vaead::cli
