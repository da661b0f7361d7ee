#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mvldp {

enum class ErrorKind {
  invalid_argument,
  out_of_range,
  incompatible_grids,
  invalid_control,
  numeric_error,
  unsupported,
  invariant_failure,
  diverged,
  incompatible_frozen_law,
  no_convergence,
  invalid_mdp_tilt,
  parse_error,
  file_not_found,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Single exception type for the library; the kind drives CLI exit codes and
// the machine-readable error reports.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace mvldp
