#pragma once

#include <iosfwd>

namespace mvldp::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kNumeric = 3,
  kVerificationFailed = 4,
};

// Entry point of the mvldp tool; testable in-process.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mvldp::cli
