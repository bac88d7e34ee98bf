#pragma once

#include <stdexcept>
#include <string>

namespace crowdmap {

/// Malformed input file (syntax or schema).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Well-formed input violating a domain invariant.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem or binary-format failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training aborted (non-finite loss and similar).
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace crowdmap
