#pragma once

#include <stdexcept>
#include <string>

namespace aps {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument violated a documented precondition (index out of range,
/// parameter outside its domain, dimension mismatch).
class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what, std::string field = {})
      : Error(what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A computation ran into a numerically degenerate configuration,
/// e.g. a truncation interval carrying no posterior mass.
class NumericalDegeneracy : public Error {
 public:
  using Error::Error;
};

/// A box-constrained problem has an empty feasible set.
class Infeasible : public Error {
 public:
  using Error::Error;
};

/// The requested combination of options is not supported.
class UnsupportedConfiguration : public Error {
 public:
  using Error::Error;
};

}  // namespace aps
