#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rehab::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfigError = 2,
  kIoError = 3,
  kValidationError = 4,
};

/// Runs one invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rehab::cli
