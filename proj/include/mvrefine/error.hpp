#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mvrefine {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside an operation's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition (too few inputs, out-of-range parameters).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Degenerate geometric configuration (rank-deficient system, zero baseline).
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// No essential-matrix factorization places most points in front of both cameras.
class CheiralityError : public Error {
 public:
  using Error::Error;
};

/// Fewer correspondences than the estimator needs.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// RANSAC found no model with enough support.
class RobustFailureError : public Error {
 public:
  using Error::Error;
};

/// The scale/translation system of the multi-view solve is ill-conditioned.
class ScaleDegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number (0 when not line-specific).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace mvrefine
