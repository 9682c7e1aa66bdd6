#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mmsc/rng.hpp"
#include "mmsc/types.hpp"

namespace mmsc {

/// Linear decision function w^T x + b.
struct LinearSvm {
  Vector weights;
  double bias = 0.0;
  double c = 1.0;
};

struct SvmOptions {
  /// Stop once the maximal KKT violating pair differs by less than this.
  double eps = 1e-8;
  /// 0 picks max(1e7, 100 n).
  long long max_iter = 0;
};

struct SvmStats {
  /// Dual objective 1/2 a^T Q a - 1^T a sampled every n pair updates and at
  /// the end. Pair updates never increase it.
  std::vector<double> dual_objective;
  long long iterations = 0;
  bool converged = false;
};

/// 1/2 ||w||^2 + c sum_i max(0, 1 - y_i (w^T x_i + b))
inline double svm_primal_objective(const LinearSvm& m, const FeatureMatrix& x, const std::vector<int>& labels) {
  double hinge = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double margin = labels[static_cast<std::size_t>(i)] * (x.row(i).dot(m.weights) + m.bias);
    hinge += std::max(0.0, 1.0 - margin);
  }
  return 0.5 * m.weights.squaredNorm() + m.c * hinge;
}

/// Trains an L2-regularized hinge-loss linear SVM with an unregularized bias.
///
/// Solves the dual with sequential minimal optimization and second-order
/// working-set selection. Fully deterministic.
inline LinearSvm train_svm(const FeatureMatrix& x, const std::vector<int>& labels, double c,
                           const SvmOptions& opt = {}, SvmStats* stats = nullptr) {
  const Eigen::Index n = x.rows();
  detail::require(static_cast<Eigen::Index>(labels.size()) == n, "train_svm: one label per row required");
  detail::require(c > 0.0 && std::isfinite(c), "train_svm: c must be positive");
  detail::require(x.allFinite(), "train_svm: non-finite features");
  bool has_pos = false, has_neg = false;
  for (int l : labels) {
    detail::require(l == 1 || l == -1, "train_svm: labels must be +1 or -1");
    (l > 0 ? has_pos : has_neg) = true;
  }
  detail::require(has_pos && has_neg, "train_svm: both classes must be present");

  constexpr double kTau = 1e-12;
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = labels[static_cast<std::size_t>(i)];
  const Matrix kernel = x * x.transpose();
  const Matrix q = (y * y.transpose()).cwiseProduct(kernel);
  const Vector qd = q.diagonal();

  Vector alpha = Vector::Zero(n);
  Vector grad = Vector::Constant(n, -1.0);
  auto upper = [&](Eigen::Index t) { return alpha[t] >= c; };
  auto lower = [&](Eigen::Index t) { return alpha[t] <= 0.0; };
  auto dual = [&] { return 0.5 * alpha.dot(grad - Vector::Ones(n)); };

  const long long max_iter = opt.max_iter > 0 ? opt.max_iter : std::max<long long>(10000000LL, 100LL * n);
  SvmStats local;
  local.dual_objective.push_back(dual());
  long long iter = 0;
  while (iter < max_iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (y[t] > 0) {
        if (!upper(t) && -grad[t] >= gmax) { gmax = -grad[t]; i = t; }
      } else {
        if (!lower(t) && grad[t] >= gmax) { gmax = grad[t]; i = t; }
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    double best_obj = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n && i >= 0; ++t) {
      if (y[t] > 0) {
        if (lower(t)) continue;
        const double diff = gmax + grad[t];
        gmax2 = std::max(gmax2, grad[t]);
        if (diff > 0.0) {
          double quad = qd[i] + qd[t] - 2.0 * y[i] * q(i, t);
          if (quad <= 0.0) quad = kTau;
          const double obj = -(diff * diff) / quad;
          if (obj <= best_obj) { best_obj = obj; j = t; }
        }
      } else {
        if (upper(t)) continue;
        const double diff = gmax - grad[t];
        gmax2 = std::max(gmax2, -grad[t]);
        if (diff > 0.0) {
          double quad = qd[i] + qd[t] + 2.0 * y[i] * q(i, t);
          if (quad <= 0.0) quad = kTau;
          const double obj = -(diff * diff) / quad;
          if (obj <= best_obj) { best_obj = obj; j = t; }
        }
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < opt.eps) {
      local.converged = true;
      break;
    }
    ++iter;

    const double old_i = alpha[i];
    const double old_j = alpha[j];
    if (y[i] != y[j]) {
      double quad = qd[i] + qd[j] + 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = diff; }
      } else {
        if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = -diff; }
      }
      if (diff > 0.0) {
        if (alpha[i] > c) { alpha[i] = c; alpha[j] = c - diff; }
      } else {
        if (alpha[j] > c) { alpha[j] = c; alpha[i] = c + diff; }
      }
    } else {
      double quad = qd[i] + qd[j] - 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) { alpha[i] = c; alpha[j] = sum - c; }
      } else {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = sum; }
      }
      if (sum > c) {
        if (alpha[j] > c) { alpha[j] = c; alpha[i] = sum - c; }
      } else {
        if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = sum; }
      }
    }
    grad += q.col(i) * (alpha[i] - old_i) + q.col(j) * (alpha[j] - old_j);
    if (iter % n == 0) local.dual_objective.push_back(dual());
  }
  local.iterations = iter;
  local.dual_objective.push_back(dual());

  // Bias from the free support vectors, or the midpoint of the feasible
  // interval when none are free.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  int n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);

  LinearSvm m;
  m.c = c;
  m.weights = x.transpose() * alpha.cwiseProduct(y);
  m.bias = -rho;
  if (stats) *stats = std::move(local);
  return m;
}

inline double decision_score(const LinearSvm& m, const Vector& x) {
  detail::require(x.size() == m.weights.size(), "decision_score: dimension mismatch");
  return m.weights.dot(x) + m.bias;
}

/// One-vs-all models, one per event.
struct EventModel {
  std::vector<std::string> event_ids;
  std::vector<LinearSvm> models;
};

/// Event with the highest decision score; equal scores go to the smallest id.
inline std::string predict_event(const EventModel& em, const Vector& x) {
  detail::require(!em.models.empty() && em.models.size() == em.event_ids.size(), "predict_event: empty model");
  std::size_t best = 0;
  double best_score = decision_score(em.models[0], x);
  for (std::size_t e = 1; e < em.models.size(); ++e) {
    const double s = decision_score(em.models[e], x);
    if (s > best_score || (s == best_score && em.event_ids[e] < em.event_ids[best])) {
      best = e;
      best_score = s;
    }
  }
  return em.event_ids[best];
}

/// Fold index per example. Each class is shuffled from `seed` and dealt
/// round-robin, so every fold holds each class within +-1 example.
inline std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed) {
  detail::require(folds >= 1, "folds must be >= 1");
  std::vector<int> assignment(labels.size(), -1);
  const Rng root = Rng(seed).split("stratified-folds");
  for (int cls : {1, -1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(i);
    }
    Rng rng = root.split(cls > 0 ? "pos" : "neg");
    const auto perm = rng.permutation(members.size());
    for (std::size_t p = 0; p < perm.size(); ++p) assignment[members[perm[p]]] = static_cast<int>(p % static_cast<std::size_t>(folds));
  }
  return assignment;
}

struct CvResult {
  double best_c = 0.0;
  std::vector<double> c_grid;
  std::vector<double> mean_accuracy;
  int folds_used = 0;
  /// Set when a class had fewer examples than the requested fold count.
  bool folds_reduced = false;
};

/// Stratified k-fold selection of c by mean validation accuracy; ties go to
/// the smaller c.
inline CvResult cross_validate(const FeatureMatrix& x, const std::vector<int>& labels, int folds,
                               const std::vector<double>& c_grid, std::uint64_t seed,
                               const SvmOptions& opt = {}) {
  detail::require(!c_grid.empty(), "cross_validate: empty c grid");
  detail::require(static_cast<Eigen::Index>(labels.size()) == x.rows(), "cross_validate: one label per row required");
  detail::require(folds >= 2, "cross_validate: need at least two folds");
  const auto pos = static_cast<int>(std::count(labels.begin(), labels.end(), 1));
  const auto neg = static_cast<int>(std::count(labels.begin(), labels.end(), -1));
  detail::require(pos + neg == static_cast<int>(labels.size()), "cross_validate: labels must be +1 or -1");
  detail::require(std::min(pos, neg) >= 2, "cross_validate: each class needs at least two examples");

  CvResult res;
  res.c_grid = c_grid;
  res.folds_used = std::min({folds, pos, neg});
  res.folds_reduced = res.folds_used < folds;
  const auto assignment = stratified_folds(labels, res.folds_used, seed);

  for (double c : c_grid) {
    double acc_sum = 0.0;
    for (int f = 0; f < res.folds_used; ++f) {
      std::vector<Eigen::Index> tr, va;
      for (std::size_t i = 0; i < labels.size(); ++i) (assignment[i] == f ? va : tr).push_back(static_cast<Eigen::Index>(i));
      FeatureMatrix xt(static_cast<Eigen::Index>(tr.size()), x.cols());
      std::vector<int> yt;
      for (std::size_t r = 0; r < tr.size(); ++r) {
        xt.row(static_cast<Eigen::Index>(r)) = x.row(tr[r]);
        yt.push_back(labels[static_cast<std::size_t>(tr[r])]);
      }
      const LinearSvm m = train_svm(xt, yt, c, opt);
      int correct = 0;
      for (Eigen::Index i : va) {
        const double s = decision_score(m, x.row(i).transpose());
        const int pred = s >= 0.0 ? 1 : -1;
        if (pred == labels[static_cast<std::size_t>(i)]) ++correct;
      }
      acc_sum += static_cast<double>(correct) / static_cast<double>(va.size());
    }
    res.mean_accuracy.push_back(acc_sum / res.folds_used);
  }

  std::size_t best = 0;
  for (std::size_t g = 1; g < c_grid.size(); ++g) {
    const double a = res.mean_accuracy[g], b = res.mean_accuracy[best];
    if (a > b || (a == b && c_grid[g] < c_grid[best])) best = g;
  }
  res.best_c = c_grid[best];
  return res;
}

/// One-vs-all training: for every event, clips of that event are positives
/// and everything else (other events, background) negatives. c is chosen per
/// event by cross_validate.
inline EventModel train_event_model(const FeatureMatrix& x, const std::vector<std::string>& clip_labels,
                                    const std::vector<std::string>& events, const std::vector<double>& c_grid,
                                    int folds, std::uint64_t seed, std::vector<CvResult>* cv_out = nullptr) {
  detail::require(static_cast<Eigen::Index>(clip_labels.size()) == x.rows(), "train_event_model: label count mismatch");
  detail::require(!events.empty(), "train_event_model: no events");
  EventModel em;
  em.event_ids = events;
  std::sort(em.event_ids.begin(), em.event_ids.end());
  const Rng root = Rng(seed).split("event-model");
  for (const std::string& ev : em.event_ids) {
    std::vector<int> y;
    y.reserve(clip_labels.size());
    for (const auto& l : clip_labels) y.push_back(l == ev ? 1 : -1);
    const CvResult cv = cross_validate(x, y, folds, c_grid, root.split(ev).seed());
    em.models.push_back(train_svm(x, y, cv.best_c));
    if (cv_out) cv_out->push_back(cv);
  }
  return em;
}

}  // namespace mmsc
