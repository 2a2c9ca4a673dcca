#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace bevplan {

// Error taxonomy. The CLI maps these onto exit codes: usage/config -> 1,
// data/format -> 2, numerical -> 3.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor shapes or malformed geometry arguments.
struct ShapeError : Error {
  using Error::Error;
};

// Bad configuration: unknown keys, invalid primitive ids, invalid counts.
struct ConfigError : Error {
  using Error::Error;
};

// A call that violates an operation's stated contract.
struct ContractError : Error {
  using Error::Error;
};

// File decode/encode failures. Carries the byte offset where decoding broke
// and, when it applies, the record index.
struct IoError : Error {
  IoError(const std::string& msg, long long byte_offset = -1, long long record = -1)
      : Error(msg), byte_offset(byte_offset), record(record) {}
  long long byte_offset = -1;
  long long record = -1;
};

// Non-finite values or failed numerical checks.
struct NumericError : Error {
  using Error::Error;
};

// Scene evaluation failures (degenerate routes and the like).
struct EvalError : Error {
  using Error::Error;
};

constexpr double kPi = 3.14159265358979323846;

// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double w = a - 2.0 * kPi * std::floor((a + kPi) / (2.0 * kPi));
  // floor puts us in [-pi, pi); move -pi to +pi.
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

}  // namespace bevplan
