#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aae {

// Invalid configuration, bad flag values, unknown keys. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An attack that cannot be formed: window start beyond the sequence,
// CTC alignment infeasible for the reference. CLI exit code 3.
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values, diverged training, backward misuse. CLI exit code 4.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes incompatible for a tensor op.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed on-disk data; carries the byte offset where parsing failed.
struct ParseError : std::runtime_error {
  std::size_t offset;
  ParseError(std::size_t off, const std::string& msg)
      : std::runtime_error(msg + " (at byte " + std::to_string(off) + ")"),
        offset(off) {}
};

}  // namespace aae
