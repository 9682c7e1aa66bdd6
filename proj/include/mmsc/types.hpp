#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mmsc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Row-major M x N table: raw features, codes and pooled descriptors all use it.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Base for every error the library raises. `category()` is a short
/// machine-parsable tag that the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

/// Violated precondition: dimension mismatch, empty input, bad parameter.
class InputError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "input"; }
};

/// Malformed file content.
class FormatError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "format"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "io"; }
};

/// A pipeline stage was invoked before the stage it depends on.
class StageOrderError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "stage-order"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "config"; }
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InputError(what);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace detail

}  // namespace mmsc
