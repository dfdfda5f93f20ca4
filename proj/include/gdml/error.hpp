#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gdml {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration (bad flag, bad spec file, bad topology).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Raised by transports: unreachable peers, bind/connect failures, protocol desync.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Optimizer failures: non-descent line search, divergent or non-finite CG.
class OptimizationError : public Error {
 public:
  using Error::Error;
};

}  // namespace gdml
