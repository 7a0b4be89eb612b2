#pragma once

#include <stdexcept>
#include <string>

namespace spn {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Array shapes of a schedule, state or table disagree with the network.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An action was applied at a state where it violates a feasibility constraint.
class InfeasibleActionError : public Error {
 public:
  using Error::Error;
};

// A configurable size guard (state count, support size) was exceeded.
class ResourceLimitError : public Error {
 public:
  using Error::Error;
};

// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_span)
      : Error(what), last_span_(last_span) {}
  double last_span() const { return last_span_; }

 private:
  double last_span_;
};

// Violated internal structure: multichain policies, singular systems,
// successors outside the enumerated set, non-finite values.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Malformed input files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Files that cannot be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace spn
