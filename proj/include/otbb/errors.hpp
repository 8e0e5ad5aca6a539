#pragma once

#include <stdexcept>

namespace otbb {

// Bad user input: unreadable files, malformed formats, invalid geometry,
// invalid configuration. Maps to CLI exit code 1.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : InputError {
  using InputError::InputError;
};

struct GeometryError : InputError {
  using InputError::InputError;
};

// The numerics could not proceed: nonpositive densities, Newton stagnation,
// solver failure. Maps to CLI exit code 2.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace otbb
