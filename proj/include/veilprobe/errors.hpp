#pragma once

#include <stdexcept>
#include <string>

namespace veilprobe {

// Exit-code families: 0 success, 2 validation, 3 backend, 4 numeric.
struct Error : std::runtime_error {
  int exit_code;
  Error(std::string msg, int code) : std::runtime_error(std::move(msg)), exit_code(code) {}
};

struct ValidationError : Error {
  explicit ValidationError(std::string msg) : Error(std::move(msg), 2) {}
};

// Parse failures carry the location (1-based line, or byte offset when line
// structure is already broken).
struct ParseError : Error {
  long line = -1;
  long byte_offset = -1;
  ParseError(std::string msg, long line_no, long byte_off = -1)
      : Error(std::move(msg), 2), line(line_no), byte_offset(byte_off) {}
};

struct BackendError : Error {
  explicit BackendError(std::string msg) : Error(std::move(msg), 3) {}
};

struct CapabilityError : BackendError {
  explicit CapabilityError(std::string msg) : BackendError(std::move(msg)) {}
};

struct NumericError : Error {
  explicit NumericError(std::string msg) : Error(std::move(msg), 4) {}
};

}  // namespace veilprobe
