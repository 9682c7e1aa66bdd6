#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mmsc/types.hpp"

namespace mmsc {

/// PCA whitening: out = scales .* (basis^T (x - mean)).
struct WhiteningTransform {
  Vector mean;
  /// N x d, orthonormal columns, leading principal directions first.
  Matrix basis;
  /// 1 / sqrt(eigenvalue + eps * average eigenvalue)
  Vector scales;
  /// Kept eigenvalues, descending.
  Vector eigenvalues;
  double epsilon = 1e-5;

  Eigen::Index input_dim() const { return mean.size(); }
  Eigen::Index out_dim() const { return basis.cols(); }
};

/// Fits a whitening transform to the rows of `x` keeping `out_dim` directions.
///
/// The covariance uses the M-1 normalization. `eps` is relative to the average
/// eigenvalue. Each basis column is signed so that its largest-magnitude entry
/// is positive, which makes the fit deterministic.
inline WhiteningTransform fit_whitening(const FeatureMatrix& x, Eigen::Index out_dim, double eps = 1e-5) {
  const Eigen::Index m = x.rows();
  const Eigen::Index n = x.cols();
  detail::require(m >= 2, "fit_whitening needs at least two rows");
  detail::require(out_dim >= 1 && out_dim <= std::min(m - 1, n),
                  "whitening dimension " + std::to_string(out_dim) + " exceeds min(M-1, N) = " +
                      std::to_string(std::min(m - 1, n)));
  detail::require(eps >= 0.0, "eps must be >= 0");
  detail::require(x.allFinite(), "fit_whitening: non-finite input");

  WhiteningTransform w;
  w.epsilon = eps;
  w.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - w.mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(m - 1);

  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw InputError("fit_whitening: eigendecomposition failed");
  const Vector evals = solver.eigenvalues().cwiseMax(0.0);  // ascending
  const double avg = evals.mean();
  const double reg = eps * (avg > 0.0 ? avg : 1.0);

  w.basis.resize(n, out_dim);
  w.scales.resize(out_dim);
  w.eigenvalues.resize(out_dim);
  for (Eigen::Index j = 0; j < out_dim; ++j) {
    const Eigen::Index src = n - 1 - j;
    Vector v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    w.basis.col(j) = v;
    const double denom = evals[src] + reg;
    if (!(denom > 0.0)) throw InputError("fit_whitening: zero-variance direction with eps = 0");
    w.scales[j] = 1.0 / std::sqrt(denom);
    w.eigenvalues[j] = evals[src];
  }
  return w;
}

inline Vector apply_whitening(const WhiteningTransform& w, const Vector& x) {
  detail::require(x.size() == w.input_dim(), "apply_whitening: dimension mismatch");
  return w.scales.cwiseProduct(w.basis.transpose() * (x - w.mean));
}

inline FeatureMatrix apply_whitening_rows(const WhiteningTransform& w, const FeatureMatrix& x) {
  detail::require(x.cols() == w.input_dim(), "apply_whitening: dimension mismatch");
  FeatureMatrix out = (x.rowwise() - w.mean.transpose()) * w.basis;
  out *= w.scales.asDiagonal();
  return out;
}

/// Clip-level descriptor. `tag` names the coding variant that produced it
/// (audio, video, joint, union, cross-audio, cross-video, ...).
struct PooledFeature {
  Vector values;
  std::string clip_id;
  std::string tag;
};

/// Elementwise maximum over the rows of `codes`.
inline Vector max_pool(const FeatureMatrix& codes) {
  detail::require(codes.rows() >= 1, "max_pool needs at least one code");
  return codes.colwise().maxCoeff().transpose();
}

inline Vector max_pool(std::span<const Vector> codes) {
  detail::require(!codes.empty(), "max_pool needs at least one code");
  Vector out = codes.front();
  for (const Vector& c : codes.subspan(1)) {
    detail::require(c.size() == out.size(), "max_pool: codes differ in length");
    out = out.cwiseMax(c);
  }
  return out;
}

/// Max pooling within each keyframe's group of codes, then across keyframes.
inline Vector pool_clip(std::span<const FeatureMatrix> keyframe_groups) {
  detail::require(!keyframe_groups.empty(), "pool_clip needs at least one keyframe group");
  std::vector<Vector> per_keyframe;
  per_keyframe.reserve(keyframe_groups.size());
  for (const FeatureMatrix& g : keyframe_groups) per_keyframe.push_back(max_pool(g));
  return max_pool(std::span<const Vector>(per_keyframe));
}

}  // namespace mmsc
