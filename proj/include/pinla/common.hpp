#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pinla {

using Index = std::ptrdiff_t;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed sparse structure (missing diagonal, upper entries, pattern mismatch).
class StructuralError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Raised by the numeric factorization. `column` is the pivot in permuted
// order, `original_column` the same pivot in the caller's ordering.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(Index column, Index original_column)
      : Error("matrix not positive definite at pivot " + std::to_string(column) +
              " (original index " + std::to_string(original_column) + ")"),
        column_(column),
        original_column_(original_column) {}
  Index column() const { return column_; }
  Index original_column() const { return original_column_; }

 private:
  Index column_;
  Index original_column_;
};

class InnerDivergence : public Error {
 public:
  using Error::Error;
};

class InvalidData : public Error {
 public:
  using Error::Error;
};

// Bad model / run configuration. `key` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace pinla
