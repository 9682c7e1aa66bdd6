#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "mmsc/types.hpp"

namespace mmsc {

/// Split of a joint dictionary's rows into audio and video blocks.
struct ModalityDims {
  Eigen::Index audio = 0;
  Eigen::Index video = 0;

  Eigen::Index total() const { return audio + video; }
  bool operator==(const ModalityDims&) const = default;
};

/// N x K matrix of basis atoms (one atom per column).
///
/// Normalized dictionaries hold unit-norm columns (within 1e-9). Blocks taken
/// out of a joint dictionary keep their scale and are flagged
/// `normalized() == false`; the solvers accept both.
class Dictionary {
 public:
  static constexpr double kUnitNormTolerance = 1e-9;

  Dictionary() = default;

  /// Wraps `atoms` as-is. Throws InputError if a normalized dictionary has a
  /// column whose norm is not 1.
  explicit Dictionary(Matrix atoms, bool normalized = true,
                      std::optional<ModalityDims> dims = std::nullopt)
      : atoms_(std::move(atoms)), normalized_(normalized), dims_(dims) {
    detail::require(atoms_.rows() >= 1 && atoms_.cols() >= 1, "dictionary must be at least 1x1");
    detail::require(atoms_.allFinite(), "dictionary has non-finite entries");
    if (dims_) {
      detail::require(dims_->audio >= 1 && dims_->video >= 1, "modality dims must be positive");
      detail::require(dims_->total() == atoms_.rows(), "modality dims do not sum to input dimension");
    }
    if (normalized_) {
      for (Eigen::Index k = 0; k < atoms_.cols(); ++k) {
        const double n = atoms_.col(k).norm();
        detail::require(std::abs(n - 1.0) <= kUnitNormTolerance,
                        "atom " + std::to_string(k) + " is not unit norm");
      }
    }
  }

  /// Scales every nonzero column to unit norm. Zero columns are rejected.
  static Dictionary normalized_from(Matrix atoms, std::optional<ModalityDims> dims = std::nullopt) {
    for (Eigen::Index k = 0; k < atoms.cols(); ++k) {
      const double n = atoms.col(k).norm();
      detail::require(n > 0.0, "cannot normalize zero atom " + std::to_string(k));
      atoms.col(k) /= n;
    }
    return Dictionary(std::move(atoms), true, dims);
  }

  const Matrix& atoms() const { return atoms_; }
  Eigen::Index input_dim() const { return atoms_.rows(); }
  Eigen::Index atom_count() const { return atoms_.cols(); }
  bool normalized() const { return normalized_; }
  const std::optional<ModalityDims>& modality_dims() const { return dims_; }

 private:
  Matrix atoms_;
  bool normalized_ = true;
  std::optional<ModalityDims> dims_;
};

/// K coefficients plus the sorted indices of the nonzero ones.
class SparseCode {
 public:
  SparseCode() = default;

  explicit SparseCode(Vector coeffs, bool converged = true, int iterations = 0)
      : coeffs_(std::move(coeffs)), converged_(converged), iterations_(iterations) {
    for (Eigen::Index k = 0; k < coeffs_.size(); ++k) {
      if (coeffs_[k] != 0.0) support_.push_back(k);
    }
  }

  const Vector& coeffs() const { return coeffs_; }
  const std::vector<Eigen::Index>& support() const { return support_; }
  Eigen::Index size() const { return coeffs_.size(); }

  /// False when the solver hit its iteration budget (LASSO) or stopped on a
  /// rank-deficient support (OMP).
  bool converged() const { return converged_; }
  int iterations() const { return iterations_; }

 private:
  Vector coeffs_;
  std::vector<Eigen::Index> support_;
  bool converged_ = true;
  int iterations_ = 0;
};

struct SolverConfig {
  double lambda = 0.1;
  double tol = 1e-8;
  int max_iter = 1000;

  void validate() const {
    detail::require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and >= 0");
    detail::require(tol > 0.0, "tol must be positive");
    detail::require(max_iter >= 1, "max_iter must be positive");
  }
};

namespace detail {

inline void check_dims(const Vector& x, const Dictionary& d) {
  require(x.size() == d.input_dim(), "input has dimension " + std::to_string(x.size()) +
                                         ", dictionary expects " + std::to_string(d.input_dim()));
}

inline void check_code(const Vector& y, const Dictionary& d) {
  require(y.size() == d.atom_count(), "code has length " + std::to_string(y.size()) +
                                          ", dictionary has " + std::to_string(d.atom_count()) +
                                          " atoms");
}

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace detail

/// ||x - D y||^2
inline double reconstruction_error(const Vector& x, const Dictionary& d, const Vector& y) {
  detail::check_dims(x, d);
  detail::check_code(y, d);
  return (x - d.atoms() * y).squaredNorm();
}

/// ||x - D y||^2 + lambda ||y||_1
inline double lasso_objective(const Vector& x, const Dictionary& d, const Vector& y, double lambda) {
  return reconstruction_error(x, d, y) + lambda * y.lpNorm<1>();
}

/// Largest violation of the optimality conditions of
/// ||x - D y||^2 + lambda ||y||_1. With g = 2 D^T (x - D y): active atoms need
/// g_k = lambda sign(y_k), inactive ones |g_k| <= lambda.
inline double kkt_violation(const Vector& x, const Dictionary& d, const Vector& y, double lambda) {
  detail::check_dims(x, d);
  detail::check_code(y, d);
  const Vector g = 2.0 * (d.atoms().transpose() * (x - d.atoms() * y));
  double worst = 0.0;
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    double v;
    if (y[k] != 0.0) {
      v = std::abs(g[k] - lambda * (y[k] > 0.0 ? 1.0 : -1.0));
    } else {
      v = std::max(0.0, std::abs(g[k]) - lambda);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

/// Cyclic coordinate descent for ||x - D y||^2 + lambda ||y||_1.
///
/// Holds the Gram matrix so that batches of inputs against one dictionary pay
/// for it once. Coordinates are visited in ascending order; each update is an
/// exact minimization along that coordinate, so the objective is monotone.
/// Stops when the largest coordinate change in a sweep and the KKT violation
/// are both below `tol`.
class LassoCoder {
 public:
  LassoCoder(const Dictionary& d, SolverConfig cfg) : dict_(&d), cfg_(cfg) {
    cfg_.validate();
    gram_ = d.atoms().transpose() * d.atoms();
  }

  const Dictionary& dictionary() const { return *dict_; }
  const SolverConfig& config() const { return cfg_; }
  const Matrix& gram() const { return gram_; }

  /// `warm` seeds the iteration (must have K entries). `trace`, when given,
  /// receives the objective after every sweep, starting with the initial one.
  SparseCode encode(const Vector& x, const Vector* warm = nullptr,
                    std::vector<double>* trace = nullptr) const {
    detail::check_dims(x, *dict_);
    detail::require(x.allFinite(), "input has non-finite entries");
    const Eigen::Index k_count = dict_->atom_count();
    const double half_lambda = 0.5 * cfg_.lambda;

    const Vector c = dict_->atoms().transpose() * x;
    const double xx = x.squaredNorm();
    Vector y = Vector::Zero(k_count);
    if (warm) {
      detail::check_code(*warm, *dict_);
      y = *warm;
    }
    Vector q = gram_ * y;

    auto objective = [&] { return xx - 2.0 * c.dot(y) + y.dot(q) + cfg_.lambda * y.lpNorm<1>(); };
    if (trace) trace->push_back(objective());

    bool converged = false;
    int sweep = 0;
    while (sweep < cfg_.max_iter) {
      ++sweep;
      double max_delta = 0.0;
      for (Eigen::Index k = 0; k < k_count; ++k) {
        const double gkk = gram_(k, k);
        double next = 0.0;
        if (gkk > 0.0) {
          const double rho = c[k] - (q[k] - gkk * y[k]);
          next = detail::soft_threshold(rho, half_lambda) / gkk;
        }
        const double delta = next - y[k];
        if (delta != 0.0) {
          q.noalias() += gram_.col(k) * delta;
          y[k] = next;
          max_delta = std::max(max_delta, std::abs(delta));
        }
      }
      if (trace) trace->push_back(objective());
      if (max_delta < cfg_.tol) {
        // Drop the accumulated rounding of the incremental updates before
        // judging optimality.
        q.noalias() = gram_ * y;
        if (kkt_from_gram(c, q, y) < cfg_.tol) {
          converged = true;
          break;
        }
      }
    }
    return SparseCode(std::move(y), converged, sweep);
  }

 private:
  double kkt_from_gram(const Vector& c, const Vector& q, const Vector& y) const {
    double worst = 0.0;
    for (Eigen::Index k = 0; k < y.size(); ++k) {
      const double g = 2.0 * (c[k] - q[k]);
      const double v = y[k] != 0.0 ? std::abs(g - cfg_.lambda * (y[k] > 0.0 ? 1.0 : -1.0))
                                   : std::max(0.0, std::abs(g) - cfg_.lambda);
      worst = std::max(worst, v);
    }
    return worst;
  }

  const Dictionary* dict_;
  SolverConfig cfg_;
  Matrix gram_;
};

inline SparseCode lasso_encode(const Vector& x, const Dictionary& d, const SolverConfig& cfg) {
  return LassoCoder(d, cfg).encode(x);
}

/// Orthogonal matching pursuit: greedy atom selection with a least-squares
/// refit on the whole support after every pick, at most `s` atoms.
///
/// Stops early once the residual norm drops below 1e-12. If the next atom is
/// (numerically) in the span of the selected ones it is dropped, the pursuit
/// stops, and the result is flagged not converged. `residual_trace` receives
/// the residual norm before the first pick and after each refit.
inline SparseCode omp_encode(const Vector& x, const Dictionary& d, Eigen::Index s,
                             std::vector<double>* residual_trace = nullptr) {
  detail::check_dims(x, d);
  detail::require(x.allFinite(), "input has non-finite entries");
  detail::require(s >= 0, "sparsity bound must be nonnegative");
  detail::require(s <= d.atom_count(), "sparsity bound " + std::to_string(s) + " exceeds atom count " +
                                           std::to_string(d.atom_count()));
  constexpr double kStopResidual = 1e-12;
  constexpr double kJitter = 1e-12;
  constexpr double kRankTolerance = 1e-10;

  const Matrix& atoms = d.atoms();
  const Vector norms = atoms.colwise().norm().transpose();
  Vector residual = x;
  std::vector<Eigen::Index> selected;
  std::vector<bool> used(static_cast<std::size_t>(d.atom_count()), false);
  Vector coef;
  bool ok = true;
  if (residual_trace) residual_trace->push_back(residual.norm());

  while (static_cast<Eigen::Index>(selected.size()) < s && residual.norm() >= kStopResidual) {
    const Vector corr = atoms.transpose() * residual;
    Eigen::Index best = -1;
    double best_score = -1.0;
    for (Eigen::Index k = 0; k < d.atom_count(); ++k) {
      if (used[static_cast<std::size_t>(k)] || norms[k] == 0.0) continue;
      const double score = std::abs(corr[k]) / norms[k];
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    if (best < 0) break;

    if (!selected.empty()) {
      // Energy of the candidate atom outside the span of the current support.
      Matrix sub(atoms.rows(), static_cast<Eigen::Index>(selected.size()));
      for (std::size_t j = 0; j < selected.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = atoms.col(selected[j]);
      const Matrix g = sub.transpose() * sub;
      const Vector proj_coef = g.ldlt().solve(sub.transpose() * atoms.col(best));
      const double outside = (atoms.col(best) - sub * proj_coef).squaredNorm();
      if (outside < kRankTolerance * norms[best] * norms[best]) {
        ok = false;
        break;
      }
    }

    selected.push_back(best);
    used[static_cast<std::size_t>(best)] = true;
    const auto n_sel = static_cast<Eigen::Index>(selected.size());
    Matrix sub(atoms.rows(), n_sel);
    for (Eigen::Index j = 0; j < n_sel; ++j) sub.col(j) = atoms.col(selected[static_cast<std::size_t>(j)]);
    Matrix g = sub.transpose() * sub;
    g.diagonal().array() += kJitter;
    coef = g.ldlt().solve(sub.transpose() * x);
    residual = x - sub * coef;
    if (residual_trace) residual_trace->push_back(residual.norm());
  }

  Vector y = Vector::Zero(d.atom_count());
  for (std::size_t j = 0; j < selected.size(); ++j) y[selected[j]] = coef[static_cast<Eigen::Index>(j)];
  return SparseCode(std::move(y), ok, static_cast<int>(selected.size()));
}

}  // namespace mmsc
