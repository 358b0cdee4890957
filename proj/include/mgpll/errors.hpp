#pragma once

#include <stdexcept>
#include <string>

namespace mgpll {

// Precondition or shape violation at a library entry point.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf surfaced by a numeric operation. Never silently propagated.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure (missing file, unwritable path).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file content; carries the offending line number when known.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
  FormatError(const std::string& file, long line, const std::string& msg)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg),
        line_number(line) {}
  long line_number = -1;
};

}  // namespace mgpll
