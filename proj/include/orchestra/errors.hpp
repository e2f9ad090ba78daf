#pragma once

#include <stdexcept>
#include <string>

namespace orchestra {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input rows, bad headers, unparseable numbers.
struct ParseError : Error {
  using Error::Error;
};

// Structurally valid input that breaks a domain invariant.
struct ValidationError : Error {
  using Error::Error;
};

// Bad run/workload configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Unknown ids (agents, tasks, machines).
struct LookupError : Error {
  using Error::Error;
};

// Caller broke a documented precondition.
struct ContractViolation : Error {
  using Error::Error;
};

}  // namespace orchestra
