#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "mmsc/rng.hpp"
#include "mmsc/sparse_solvers.hpp"
#include "mmsc/types.hpp"

namespace mmsc {

struct LearnConfig {
  Eigen::Index atom_count = 64;
  double lambda = 0.1;
  int epochs = 50;
  std::uint64_t seed = 0;
  /// Atoms used by at most this many examples in an epoch are replaced.
  int dead_usage_threshold = 0;
  /// Stop once |F_prev - F| / |F_prev| falls below this.
  double objective_tol = 1e-6;
  /// Inner coding solver; lambda is taken from `lambda` above.
  double solver_tol = 1e-8;
  int solver_max_iter = 1000;

  void validate() const {
    detail::require(atom_count >= 1, "atom count must be >= 1");
    detail::require(epochs >= 1, "epochs must be >= 1");
    detail::require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and >= 0");
    detail::require(objective_tol > 0.0, "objective_tol must be positive");
    detail::require(dead_usage_threshold >= 0, "dead_usage_threshold must be >= 0");
  }

  SolverConfig solver() const { return SolverConfig{lambda, solver_tol, solver_max_iter}; }
};

struct TrainStats {
  /// F(D, Y) = sum_i ||x_i - D y_i||^2 + lambda ||y_i||_1 after each alternation.
  std::vector<double> objective_per_epoch;
  /// Dead atoms replaced in each epoch, aligned with objective_per_epoch.
  std::vector<int> replaced_per_epoch;
  int atoms_replaced = 0;
  bool converged = false;
};

struct LearnResult {
  Dictionary dictionary;
  TrainStats stats;
  /// Codes of the training examples against the final dictionary's
  /// predecessor (the ones the last update was fitted to), one row each.
  FeatureMatrix codes;
};

/// K training rows drawn without replacement, each scaled to unit norm.
/// All-zero rows are never drawn, and a row parallel to an atom already drawn
/// is passed over while other rows remain. When fewer than K usable rows
/// exist the remainder is drawn with replacement.
inline Dictionary init_dictionary(const FeatureMatrix& examples, Eigen::Index k, std::uint64_t seed) {
  detail::require(examples.rows() >= 1, "init_dictionary needs at least one example");
  detail::require(k >= 1, "atom count must be >= 1");
  detail::require(examples.allFinite(), "examples contain non-finite values");
  std::vector<Eigen::Index> nonzero;
  for (Eigen::Index i = 0; i < examples.rows(); ++i) {
    if (examples.row(i).squaredNorm() > 0.0) nonzero.push_back(i);
  }
  detail::require(!nonzero.empty(), "all examples are zero");
  constexpr double kParallel = 1.0 - 1e-12;

  Rng rng = Rng(seed).split("init-dictionary");
  Matrix atoms(examples.cols(), k);
  const auto perm = rng.permutation(nonzero.size());
  std::vector<Eigen::Index> passed_over;
  Eigen::Index filled = 0;
  for (std::size_t p = 0; p < perm.size() && filled < k; ++p) {
    const Eigen::Index row = nonzero[perm[p]];
    const Vector v = examples.row(row).transpose() / examples.row(row).norm();
    if (filled > 0 && (atoms.leftCols(filled).transpose() * v).cwiseAbs().maxCoeff() >= kParallel) {
      passed_over.push_back(row);
      continue;
    }
    atoms.col(filled++) = v;
  }
  for (std::size_t p = 0; p < passed_over.size() && filled < k; ++p) {
    atoms.col(filled++) = examples.row(passed_over[p]).transpose() / examples.row(passed_over[p]).norm();
  }
  while (filled < k) {
    const Eigen::Index row = nonzero[rng.index(nonzero.size())];
    atoms.col(filled++) = examples.row(row).transpose() / examples.row(row).norm();
  }
  return Dictionary::normalized_from(std::move(atoms));
}

/// One pass of block-coordinate column updates with the codes held fixed.
///
/// Column j is replaced by the minimizer of sum_i ||x_i - D y_i||^2 over the
/// unit sphere, r / ||r|| with r = (X^T Y)_j - D (Y^T Y)_j + d_j (Y^T Y)_jj,
/// using the already-updated columns before it. Unused atoms are left alone, so
/// the reconstruction error cannot increase.
inline Dictionary dictionary_update_step(const FeatureMatrix& examples, const FeatureMatrix& codes,
                                         const Dictionary& d) {
  detail::require(examples.cols() == d.input_dim(), "example dimension does not match dictionary");
  detail::require(codes.cols() == d.atom_count(), "code length does not match dictionary");
  detail::require(codes.rows() == examples.rows(), "one code per example required");

  const Matrix usage_gram = codes.transpose() * codes;    // K x K
  const Matrix correlation = examples.transpose() * codes;  // N x K
  Matrix atoms = d.atoms();
  for (Eigen::Index j = 0; j < atoms.cols(); ++j) {
    const double ajj = usage_gram(j, j);
    if (ajj <= 0.0) continue;
    Vector r = correlation.col(j) - atoms * usage_gram.col(j) + atoms.col(j) * ajj;
    const double n = r.norm();
    if (n > 0.0) atoms.col(j) = r / n;
  }
  return Dictionary(std::move(atoms), d.normalized(), d.modality_dims());
}

/// Number of examples with a nonzero coefficient on each atom.
inline std::vector<int> atom_usage(const FeatureMatrix& codes) {
  std::vector<int> usage(static_cast<std::size_t>(codes.cols()), 0);
  for (Eigen::Index i = 0; i < codes.rows(); ++i) {
    for (Eigen::Index k = 0; k < codes.cols(); ++k) {
      if (codes(i, k) != 0.0) ++usage[static_cast<std::size_t>(k)];
    }
  }
  return usage;
}

/// Replaces atoms whose usage is <= `threshold` by the worst-reconstructed
/// training examples (normalized), one distinct example per atom. Ties in
/// residual are broken by a permutation drawn from `seed`.
inline std::pair<Dictionary, int> replace_dead_atoms(const Dictionary& d, const std::vector<int>& usage,
                                                     const FeatureMatrix& examples, const FeatureMatrix& codes,
                                                     int threshold, std::uint64_t seed) {
  detail::require(static_cast<Eigen::Index>(usage.size()) == d.atom_count(), "usage must have one entry per atom");
  std::vector<Eigen::Index> dead;
  for (std::size_t k = 0; k < usage.size(); ++k) {
    if (usage[k] <= threshold) dead.push_back(static_cast<Eigen::Index>(k));
  }
  if (dead.empty() || examples.rows() == 0) return {d, 0};
  detail::require(examples.cols() == d.input_dim(), "example dimension does not match dictionary");
  detail::require(codes.rows() == examples.rows() && codes.cols() == d.atom_count(), "codes shape mismatch");

  const FeatureMatrix residual = examples - codes * d.atoms().transpose();
  const Vector err = residual.rowwise().squaredNorm();
  const auto tiebreak = Rng(seed).split("dead-atoms").permutation(static_cast<std::size_t>(examples.rows()));
  std::vector<Eigen::Index> order;
  for (std::size_t p = 0; p < tiebreak.size(); ++p) {
    const auto i = static_cast<Eigen::Index>(tiebreak[p]);
    if (examples.row(i).squaredNorm() > 0.0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return err[a] > err[b]; });

  Matrix atoms = d.atoms();
  int replaced = 0;
  for (std::size_t j = 0; j < dead.size() && j < order.size(); ++j) {
    const Vector x = examples.row(order[j]).transpose();
    atoms.col(dead[j]) = x / x.norm();
    ++replaced;
  }
  return {Dictionary(std::move(atoms), d.normalized(), d.modality_dims()), replaced};
}

/// sum_i ||x_i - D y_i||^2 + lambda ||y_i||_1 over all rows.
inline double total_objective(const FeatureMatrix& examples, const FeatureMatrix& codes, const Dictionary& d,
                              double lambda) {
  const FeatureMatrix residual = examples - codes * d.atoms().transpose();
  return residual.squaredNorm() + lambda * codes.cwiseAbs().sum();
}

/// Alternates LASSO coding (warm-started from the previous codes) with
/// dictionary_update_step until the epoch budget runs out or the relative
/// objective change drops below `objective_tol`.
inline LearnResult learn_dictionary(const FeatureMatrix& examples, const LearnConfig& cfg,
                                    std::optional<ModalityDims> dims = std::nullopt) {
  cfg.validate();
  detail::require(examples.rows() >= 1 && examples.cols() >= 1, "learn_dictionary needs a non-empty example set");
  detail::require(examples.allFinite(), "examples contain non-finite values");

  const Rng root(cfg.seed);
  Dictionary d = init_dictionary(examples, cfg.atom_count, root.split("init").seed());
  if (dims) d = Dictionary(d.atoms(), true, dims);

  FeatureMatrix codes = FeatureMatrix::Zero(examples.rows(), cfg.atom_count);
  TrainStats stats;
  const SolverConfig solver = cfg.solver();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const LassoCoder coder(d, solver);
    for (Eigen::Index i = 0; i < examples.rows(); ++i) {
      const Vector warm = codes.row(i).transpose();
      codes.row(i) = coder.encode(examples.row(i).transpose(), &warm).coeffs().transpose();
    }
    d = dictionary_update_step(examples, codes, d);
    auto [replaced_dict, replaced] = replace_dead_atoms(d, atom_usage(codes), examples, codes,
                                                        cfg.dead_usage_threshold,
                                                        root.split("epoch").split(static_cast<std::uint64_t>(epoch)).seed());
    d = std::move(replaced_dict);
    stats.atoms_replaced += replaced;
    stats.replaced_per_epoch.push_back(replaced);

    const double obj = total_objective(examples, codes, d, cfg.lambda);
    const bool have_prev = !stats.objective_per_epoch.empty();
    const double prev = have_prev ? stats.objective_per_epoch.back() : 0.0;
    stats.objective_per_epoch.push_back(obj);
    if (replaced > 0) continue;  // a fresh atom has not been fitted yet
    if (have_prev) {
      const double change = std::abs(prev - obj);
      if (change == 0.0 || change < cfg.objective_tol * std::abs(prev)) {
        stats.converged = true;
        break;
      }
    } else if (obj == 0.0) {
      stats.converged = true;
      break;
    }
  }
  return {std::move(d), std::move(stats), std::move(codes)};
}

/// Codes every row of `examples` against `d`.
inline FeatureMatrix encode_rows(const FeatureMatrix& examples, const Dictionary& d, const SolverConfig& cfg) {
  detail::require(examples.cols() == d.input_dim(), "example dimension does not match dictionary");
  const LassoCoder coder(d, cfg);
  FeatureMatrix codes(examples.rows(), d.atom_count());
  for (Eigen::Index i = 0; i < examples.rows(); ++i) {
    codes.row(i) = coder.encode(examples.row(i).transpose()).coeffs().transpose();
  }
  return codes;
}

}  // namespace mmsc
