#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mailintent {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A reference (in_reply_to, gold id) that does not resolve.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Value outside its documented domain (rates, distributions, configs).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Requested split sizes cannot be satisfied by the available pool.
class SizingError : public Error {
 public:
  SizingError(const std::string& what, std::size_t feasible)
      : Error(what + " (feasible maximum " + std::to_string(feasible) + ")"),
        feasible_(feasible) {}
  std::size_t feasible_maximum() const noexcept { return feasible_; }

 private:
  std::size_t feasible_;
};

/// Empty or otherwise unusable training input.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Tensor or class-count mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Gold labels missing for an evaluated id.
class CoverageError : public Error {
 public:
  using Error::Error;
};

}  // namespace mailintent
