#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spamm {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid geometry or engine configuration (non-power-of-two sizes, zero workers).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad argument values: negative thresholds, out-of-range indices, non-finite data.
class InputError : public Error {
 public:
  using Error::Error;
};

// Operation requested in a state that does not allow it (e.g. stats mid-run).
class StateError : public Error {
 public:
  using Error::Error;
};

// Problem too large for a dense code path.
class SizeError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace spamm
