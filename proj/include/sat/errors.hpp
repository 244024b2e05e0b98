#pragma once

#include <stdexcept>
#include <string>

namespace sat {

/// Base of every error raised by the library. Each subclass maps to a
/// distinct CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
  virtual int exit_code() const noexcept { return 1; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
  int exit_code() const noexcept override { return 8; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
  int exit_code() const noexcept override { return 7; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "usage"; }
  int exit_code() const noexcept override { return 2; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
  int exit_code() const noexcept override { return 3; }
};

/// Malformed file content. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char* kind() const noexcept override { return "parse"; }
  int exit_code() const noexcept override { return 4; }

 private:
  std::size_t line_;
};

class VersionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "version"; }
  int exit_code() const noexcept override { return 4; }
};

class ConfigMismatchError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config_mismatch"; }
  int exit_code() const noexcept override { return 5; }
};

/// Dataset references that do not resolve (unknown commodity ids).
class IntegrityError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "integrity"; }
  int exit_code() const noexcept override { return 6; }
};

}  // namespace sat
