#pragma once

#include <stdexcept>
#include <string>

namespace rdsc {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input outside an operation's mathematical domain (log of a non-positive value,
// division by zero, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value. The message always names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Degenerate numerical state that has no meaningful result (zero-power frame,
// deep fade, non-finite loss).
class DiagnosticsError : public Error {
 public:
  using Error::Error;
};

}  // namespace rdsc
