#pragma once

#include <stdexcept>
#include <string>

namespace qslab {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A requested non-recombining tree exceeds the configured node budget.
class NodeBudgetError : public Error {
public:
  using Error::Error;
};

/// A log-space quantity left the representable range (|x| > 700).
class OverflowError : public Error {
public:
  OverflowError(const std::string& what, int step, long long node)
      : Error(what), step(step), node(node) {}
  int step;
  long long node;
};

/// A path-dependent quantity was forced onto a recombining layout.
class PathDependenceError : public Error {
public:
  using Error::Error;
};

/// An inner fixed-point / Picard iteration failed to converge.
class ConvergenceError : public Error {
public:
  using Error::Error;
};

}  // namespace qslab
