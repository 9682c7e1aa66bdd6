#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "mmsc/features.hpp"
#include "mmsc/rng.hpp"
#include "mmsc/types.hpp"

namespace mmsc {

/// Diagonal-covariance Gaussian mixture.
struct GaussianMixture {
  Vector weights;    // M
  Matrix means;      // M x N
  Matrix variances;  // M x N
  double variance_floor = 0.0;

  Eigen::Index components() const { return weights.size(); }
  Eigen::Index dim() const { return means.cols(); }
};

struct GmmFitConfig {
  Eigen::Index mixtures = 64;
  std::uint64_t seed = 0;
  int max_iter = 100;
  /// Relative log-likelihood change that ends the iteration.
  double tol = 1e-6;
  /// Floor as a fraction of the average per-dimension data variance.
  double relative_floor = 1e-4;
};

struct GmmFitStats {
  /// Total data log-likelihood after each EM iteration.
  std::vector<double> log_likelihood;
  /// Iterations in which an empty component was re-seeded.
  std::vector<int> reseed_iterations;
  bool converged = false;
};

namespace detail {

/// log N(x | mu_m, diag(var_m)) for every component, one row per input.
inline Matrix component_log_densities(const GaussianMixture& g, const FeatureMatrix& x) {
  const Eigen::Index m = g.components();
  const double log2pi = std::log(2.0 * std::numbers::pi);
  Matrix out(x.rows(), m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::ArrayXd inv = g.variances.row(k).array().inverse();
    const double log_det = g.variances.row(k).array().log().sum();
    const double constant = -0.5 * (static_cast<double>(g.dim()) * log2pi + log_det);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Eigen::ArrayXd diff = (x.row(i) - g.means.row(k)).array();
      out(i, k) = constant - 0.5 * (diff.square() * inv).sum();
    }
  }
  return out;
}

/// In place: row i becomes softmax(row i); returns the per-row log-sum-exp.
inline Vector normalize_log_rows(Matrix& logp) {
  Vector lse(logp.rows());
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double mx = logp.row(i).maxCoeff();
    const double s = (logp.row(i).array() - mx).exp().sum();
    lse[i] = mx + std::log(s);
    logp.row(i) = (logp.row(i).array() - lse[i]).exp();
  }
  return lse;
}

}  // namespace detail

/// Sum over rows of log p(x_i).
inline double gmm_log_likelihood(const GaussianMixture& g, const FeatureMatrix& x) {
  Matrix logp = detail::component_log_densities(g, x);
  logp.rowwise() += g.weights.array().log().matrix().transpose();
  return detail::normalize_log_rows(logp).sum();
}

/// Responsibilities p(m | x), computed with log-sum-exp.
inline Vector posteriors(const GaussianMixture& g, const Vector& x) {
  detail::require(x.size() == g.dim(), "posteriors: dimension mismatch");
  FeatureMatrix row = x.transpose();
  Matrix logp = detail::component_log_densities(g, row);
  logp.rowwise() += g.weights.array().log().matrix().transpose();
  detail::normalize_log_rows(logp);
  return logp.row(0).transpose();
}

/// Keeps the `ceil(fraction * M)` largest posteriors, renormalized to sum 1.
inline Vector truncate_posteriors(const Vector& p, double fraction) {
  detail::require(fraction > 0.0 && fraction <= 1.0, "sparsity fraction must be in (0, 1]");
  const auto keep = static_cast<Eigen::Index>(std::ceil(fraction * static_cast<double>(p.size()) - 1e-12));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(p.size()));
  for (Eigen::Index k = 0; k < p.size(); ++k) order[static_cast<std::size_t>(k)] = k;
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return p[a] > p[b]; });
  Vector out = Vector::Zero(p.size());
  for (Eigen::Index r = 0; r < keep; ++r) out[order[static_cast<std::size_t>(r)]] = p[order[static_cast<std::size_t>(r)]];
  const double s = out.sum();
  return s > 0.0 ? Vector(out / s) : out;
}

/// One E step plus M step. Components that receive no responsibility are
/// re-seeded at the worst-modeled point; returns true if that happened.
inline bool em_step(GaussianMixture& g, const FeatureMatrix& x, const Vector& data_var) {
  Matrix resp = detail::component_log_densities(g, x);
  resp.rowwise() += g.weights.array().log().matrix().transpose();
  const Vector lse = detail::normalize_log_rows(resp);

  const Eigen::Index n = x.rows();
  const Vector mass = resp.colwise().sum().transpose();
  bool reseeded = false;
  for (Eigen::Index k = 0; k < g.components(); ++k) {
    if (mass[k] <= 1e-10 * static_cast<double>(n)) {
      Eigen::Index worst = 0;
      lse.minCoeff(&worst);
      g.means.row(k) = x.row(worst);
      g.variances.row(k) = data_var.transpose().cwiseMax(g.variance_floor);
      g.weights[k] = 1.0 / static_cast<double>(n);
      reseeded = true;
      continue;
    }
    const Vector r = resp.col(k);
    g.weights[k] = mass[k] / static_cast<double>(n);
    g.means.row(k) = (r.transpose() * x) / mass[k];
    const FeatureMatrix centered = x.rowwise() - g.means.row(k);
    g.variances.row(k) = ((r.transpose() * centered.array().square().matrix()) / mass[k]).cwiseMax(g.variance_floor);
  }
  g.weights /= g.weights.sum();
  return reseeded;
}

/// EM fit with k-means++-style seeding of the means.
inline GaussianMixture fit_gmm_em(const FeatureMatrix& x, const GmmFitConfig& cfg, GmmFitStats* stats = nullptr) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = cfg.mixtures;
  detail::require(m >= 1, "fit_gmm_em: need at least one mixture");
  detail::require(n >= m, "fit_gmm_em: fewer rows than mixtures");
  detail::require(x.cols() >= 1 && x.allFinite(), "fit_gmm_em: invalid data");
  detail::require(cfg.tol > 0.0 && cfg.max_iter >= 1, "fit_gmm_em: invalid iteration settings");

  const Vector mean = x.colwise().mean().transpose();
  const Vector data_var = ((x.rowwise() - mean.transpose()).array().square().colwise().sum() / static_cast<double>(n))
                              .matrix()
                              .transpose();
  GaussianMixture g;
  const double avg_var = data_var.mean();
  g.variance_floor = cfg.relative_floor * (avg_var > 0.0 ? avg_var : 1.0);
  g.weights = Vector::Constant(m, 1.0 / static_cast<double>(m));
  g.means.resize(m, x.cols());
  g.variances = data_var.transpose().cwiseMax(g.variance_floor).replicate(m, 1);

  Rng rng = Rng(cfg.seed).split("gmm-init");
  Vector d2 = Vector::Constant(n, std::numeric_limits<double>::infinity());
  Eigen::Index pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
  for (Eigen::Index k = 0; k < m; ++k) {
    g.means.row(k) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (x.row(i) - g.means.row(k)).squaredNorm());
    const double total = d2.sum();
    if (total <= 0.0) {
      pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
      continue;
    }
    double target = rng.uniform() * total;
    pick = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      target -= d2[i];
      if (target < 0.0) {
        pick = i;
        break;
      }
    }
  }

  GmmFitStats local;
  double prev = gmm_log_likelihood(g, x);
  for (int it = 0; it < cfg.max_iter; ++it) {
    if (em_step(g, x, data_var)) local.reseed_iterations.push_back(it);
    const double ll = gmm_log_likelihood(g, x);
    local.log_likelihood.push_back(ll);
    if (std::abs(ll - prev) <= cfg.tol * std::abs(prev)) {
      local.converged = true;
      break;
    }
    prev = ll;
  }
  if (stats) *stats = std::move(local);
  return g;
}

/// Posterior vectors of every input, max-pooled into one length-M descriptor.
/// `sparsity_fraction` < 1 truncates each posterior before pooling.
inline Vector gmm_supervector(const GaussianMixture& g, const FeatureMatrix& inputs, double sparsity_fraction = 1.0) {
  detail::require(inputs.rows() >= 1, "gmm_supervector: empty clip");
  detail::require(inputs.cols() == g.dim(), "gmm_supervector: dimension mismatch");
  Matrix logp = detail::component_log_densities(g, inputs);
  logp.rowwise() += g.weights.array().log().matrix().transpose();
  detail::normalize_log_rows(logp);
  FeatureMatrix post(inputs.rows(), g.components());
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const Vector p = logp.row(i).transpose();
    post.row(i) = (sparsity_fraction < 1.0 ? truncate_posteriors(p, sparsity_fraction) : p).transpose();
  }
  return max_pool(post);
}

}  // namespace mmsc
