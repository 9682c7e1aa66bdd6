#pragma once

// Test-side reference implementations. None of these call into the library
// under test beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Mat random_matrix(std::mt19937_64& gen, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> nd;
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = nd(gen);
  return m;
}

inline Vec random_vector(std::mt19937_64& gen, Eigen::Index n) { return random_matrix(gen, n, 1).col(0); }

inline Mat unit_columns(Mat m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) m.col(j) /= m.col(j).norm();
  return m;
}

/// Sum of squared residual entries with explicit loops.
inline double naive_residual(const Vec& x, const Mat& d, const Vec& y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    double dy = 0.0;
    for (Eigen::Index k = 0; k < d.cols(); ++k) dy += d(i, k) * y[k];
    total += (x[i] - dy) * (x[i] - dy);
  }
  return total;
}

inline double lasso_objective(const Vec& x, const Mat& d, const Vec& y, double lambda) {
  double l1 = 0.0;
  for (Eigen::Index k = 0; k < y.size(); ++k) l1 += std::abs(y[k]);
  return naive_residual(x, d, y) + lambda * l1;
}

/// Minimizes ||x - D(u - v)||^2 + lambda * sum(u + v) over u, v >= 0 with
/// accelerated projected gradient steps (adaptive restart). Runs up to
/// `max_steps` iterations and stops early once the objective has not moved by
/// more than 1e-15 (relative) across a block of 1000 steps.
inline Vec lasso_split_pg(const Vec& x, const Mat& d, double lambda, long max_steps = 1000000) {
  const Eigen::Index k = d.cols();
  const Mat g = d.transpose() * d;
  const Vec b = d.transpose() * x;
  // Hessian of the split objective is 2 [G -G; -G G], norm 4 ||G||.
  const double lip = 4.0 * Eigen::SelfAdjointEigenSolver<Mat>(g).eigenvalues().maxCoeff();
  const double step = 1.0 / std::max(lip, 1e-12);
  Vec u = Vec::Zero(k), v = Vec::Zero(k), uz = u, vz = v;
  double t = 1.0;
  double block_start = lasso_objective(x, d, u - v, lambda);
  for (long it = 1; it <= max_steps; ++it) {
    const Vec grad_y = 2.0 * (g * (uz - vz) - b);
    const Vec un = (uz - step * (grad_y.array() + lambda).matrix()).cwiseMax(0.0);
    const Vec vn = (vz - step * (-grad_y.array() + lambda).matrix()).cwiseMax(0.0);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    // Restart momentum when it points uphill.
    const double dir = (uz - un).dot(un - u) + (vz - vn).dot(vn - v);
    if (dir > 0.0) {
      uz = un;
      vz = vn;
      t = 1.0;
    } else {
      uz = un + ((t - 1.0) / tn) * (un - u);
      vz = vn + ((t - 1.0) / tn) * (vn - v);
      t = tn;
    }
    u = un;
    v = vn;
    if (it % 1000 == 0) {
      const double obj = lasso_objective(x, d, u - v, lambda);
      if (std::abs(block_start - obj) <= 1e-15 * std::max(1.0, std::abs(obj))) break;
      block_start = obj;
    }
  }
  return u - v;
}

/// Precision at each relevant rank, computed by comparing every item with
/// every other instead of sorting.
inline double average_precision_pairwise(const std::vector<double>& scores, const std::vector<int>& rel,
                                         const std::vector<std::string>& ids) {
  const std::size_t n = scores.size();
  auto ahead = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && ids[a] < ids[b]);
  };
  double sum = 0.0;
  int total_rel = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!rel[i]) continue;
    ++total_rel;
    std::size_t rank = 1, rel_at = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && ahead(j, i)) {
        ++rank;
        rel_at += rel[j] ? 1 : 0;
      }
    }
    sum += static_cast<double>(rel_at) / static_cast<double>(rank);
  }
  return total_rel == 0 ? 0.0 : sum / total_rel;
}

/// Largest eigenpair of a symmetric 2x2 matrix [[a, b], [b, c]].
inline std::pair<double, Vec> top_eigen_2x2(double a, double b, double c) {
  const double mid = 0.5 * (a + c);
  const double rad = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
  const double lam = mid + rad;
  Vec v(2);
  if (std::abs(b) > 1e-300) {
    v << b, lam - a;
  } else {
    v << (a >= c ? 1.0 : 0.0), (a >= c ? 0.0 : 1.0);
  }
  return {lam, v / v.norm()};
}

/// Sylvester-construction Hadamard matrix of order n (power of two).
inline Mat hadamard(Eigen::Index n) {
  Mat h = Mat::Ones(1, 1);
  while (h.rows() < n) {
    Mat next(2 * h.rows(), 2 * h.cols());
    next << h, h, h, -h;
    h = next;
  }
  return h;
}

/// N x 2N dictionary with coherence 1/sqrt(N): a random rotation of
/// [I, H/sqrt(N)], columns sign-flipped and permuted at random.
inline Mat near_orthogonal_dictionary(std::mt19937_64& gen, Eigen::Index n) {
  Mat base(n, 2 * n);
  base << Mat::Identity(n, n), hadamard(n) / std::sqrt(static_cast<double>(n));
  const Mat q = Eigen::HouseholderQR<Mat>(random_matrix(gen, n, n)).householderQ();
  Mat rotated = q * base;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(2 * n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), gen);
  std::bernoulli_distribution flip(0.5);
  Mat out(n, 2 * n);
  for (Eigen::Index j = 0; j < 2 * n; ++j) out.col(j) = (flip(gen) ? -1.0 : 1.0) * rotated.col(perm[static_cast<std::size_t>(j)]);
  return out;
}

/// Sample covariance with explicit loops, divide by M-1.
inline Mat naive_covariance(const Mat& x) {
  const Eigen::Index m = x.rows(), n = x.cols();
  Vec mean = Vec::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) mean[j] += x(i, j) / static_cast<double>(m);
  Mat c = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) c(a, b) += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
  return c / static_cast<double>(m - 1);
}

}  // namespace oracle
