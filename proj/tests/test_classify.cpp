#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "mmsc/classify.hpp"
#include "oracles.hpp"

using namespace mmsc;

namespace {

struct Blobs {
  FeatureMatrix x;
  std::vector<int> y;
};

Blobs blobs(std::mt19937_64& gen, int per_class, double separation, double spread = 1.0) {
  std::normal_distribution<double> nd(0.0, spread);
  Blobs b;
  b.x.resize(2 * per_class, 2);
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i < per_class ? 1 : -1;
    b.x(i, 0) = label * separation + nd(gen);
    b.x(i, 1) = 0.5 * label * separation + nd(gen);
    b.y.push_back(label);
  }
  return b;
}

double train_accuracy(const LinearSvm& m, const Blobs& b) {
  int ok = 0;
  for (Eigen::Index i = 0; i < b.x.rows(); ++i) {
    ok += (decision_score(m, b.x.row(i).transpose()) >= 0.0 ? 1 : -1) == b.y[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(ok) / static_cast<double>(b.x.rows());
}

LinearSvm model(Vector w, double b) {
  LinearSvm m;
  m.weights = std::move(w);
  m.bias = b;
  return m;
}

}  // namespace

TEST(Svm, OneDimensionalTwoPoints) {
  FeatureMatrix x(2, 1);
  x << 1.0, -1.0;
  const LinearSvm m = train_svm(x, {1, -1}, 1000.0);
  // Minimizer of 1/2 w^2 + c * hinge by symmetry: w = 1, b = 0.
  EXPECT_NEAR(m.weights[0], 1.0, 1e-6);
  EXPECT_NEAR(m.bias, 0.0, 1e-6);
  EXPECT_NEAR(-m.bias / m.weights[0], 0.0, 1e-6);
  EXPECT_GT(decision_score(m, x.row(0).transpose()), 0.0);
  EXPECT_LT(decision_score(m, x.row(1).transpose()), 0.0);
}

TEST(Svm, SeparableBlobsFullyClassified) {
  std::mt19937_64 gen(1);
  const Blobs b = blobs(gen, 30, 4.0, 0.5);
  EXPECT_EQ(train_accuracy(train_svm(b.x, b.y, 10.0), b), 1.0);
}

TEST(Svm, DuplicatedDataWithHalfCGivesSameWeights) {
  std::mt19937_64 gen(2);
  const Blobs b = blobs(gen, 20, 1.0);
  FeatureMatrix xx(80, 2);
  xx << b.x, b.x;
  std::vector<int> yy = b.y;
  yy.insert(yy.end(), b.y.begin(), b.y.end());
  const LinearSvm m1 = train_svm(b.x, b.y, 1.0);
  const LinearSvm m2 = train_svm(xx, yy, 0.5);
  EXPECT_LE((m1.weights - m2.weights).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_NEAR(m1.bias, m2.bias, 1e-4);
}

TEST(Svm, SelfConsistentWithLongerReferenceRun) {
  std::mt19937_64 gen(3);
  const Blobs b = blobs(gen, 40, 0.7);
  const LinearSvm m = train_svm(b.x, b.y, 2.0);
  SvmOptions ref_opt;
  ref_opt.eps = 1e-12;
  ref_opt.max_iter = 10LL * 10000000LL;
  const LinearSvm ref = train_svm(b.x, b.y, 2.0, ref_opt);
  const double f = svm_primal_objective(m, b.x, b.y);
  const double g = svm_primal_objective(ref, b.x, b.y);
  EXPECT_LE(std::abs(f - g), 1e-4 * std::abs(g));
}

TEST(Svm, PrimalNoWorseThanPerturbations) {
  std::mt19937_64 gen(4);
  const Blobs b = blobs(gen, 25, 0.8);
  const LinearSvm m = train_svm(b.x, b.y, 1.0);
  const double f = svm_primal_objective(m, b.x, b.y);
  std::normal_distribution<double> nd(0.0, 1e-3);
  for (int t = 0; t < 200; ++t) {
    LinearSvm p = m;
    p.weights[0] += nd(gen);
    p.weights[1] += nd(gen);
    p.bias += nd(gen);
    EXPECT_GE(svm_primal_objective(p, b.x, b.y), f - 1e-7);
  }
}

TEST(Svm, DualObjectiveNonIncreasing) {
  std::mt19937_64 gen(5);
  const Blobs b = blobs(gen, 60, 0.5);
  SvmStats stats;
  train_svm(b.x, b.y, 5.0, {}, &stats);
  ASSERT_GE(stats.dual_objective.size(), 2u);
  for (std::size_t i = 1; i < stats.dual_objective.size(); ++i) {
    EXPECT_LE(stats.dual_objective[i], stats.dual_objective[i - 1] + 1e-9);
  }
  EXPECT_TRUE(stats.converged);
}

TEST(Svm, DeterministicAndSingleClassRejected) {
  std::mt19937_64 gen(6);
  const Blobs b = blobs(gen, 10, 1.0);
  const LinearSvm a = train_svm(b.x, b.y, 1.0), c = train_svm(b.x, b.y, 1.0);
  EXPECT_EQ(a.weights, c.weights);
  EXPECT_EQ(a.bias, c.bias);
  EXPECT_THROW(train_svm(b.x, std::vector<int>(20, 1), 1.0), InputError);
  EXPECT_THROW(train_svm(b.x, b.y, 0.0), InputError);
}

TEST(DecisionScore, BiasLinearityAndLabelFlip) {
  const LinearSvm m = model(Eigen::Vector2d(0.5, -2.0), 0.25);
  EXPECT_EQ(decision_score(m, Vector::Zero(2)), 0.25);
  const Vector u = Eigen::Vector2d(1.0, 3.0), v = Eigen::Vector2d(-2.0, 0.5);
  EXPECT_NEAR(decision_score(m, u + v) - m.bias, (decision_score(m, u) - m.bias) + (decision_score(m, v) - m.bias), 1e-15);
  EXPECT_THROW(decision_score(m, Vector::Zero(3)), InputError);

  std::mt19937_64 gen(7);
  const Blobs b = blobs(gen, 15, 0.6);
  std::vector<int> flipped = b.y;
  for (int& l : flipped) l = -l;
  const LinearSvm p = train_svm(b.x, b.y, 1.0), q = train_svm(b.x, flipped, 1.0);
  for (Eigen::Index i = 0; i < b.x.rows(); ++i) {
    EXPECT_NEAR(decision_score(p, b.x.row(i).transpose()), -decision_score(q, b.x.row(i).transpose()), 1e-6);
  }
}

TEST(PredictEvent, Cases) {
  EventModel one{{"E7"}, {model(Eigen::Vector2d(1, 1), -5.0)}};
  EXPECT_EQ(predict_event(one, Eigen::Vector2d(3, -1)), "E7");

  EventModel two{{"E1", "E2"}, {model(Vector::Zero(1), 0.5), model(Vector::Zero(1), -0.2)}};
  EXPECT_EQ(predict_event(two, Vector::Zero(1)), "E1");

  EventModel tie{{"E2", "E1"}, {model(Vector::Zero(1), 0.3), model(Vector::Zero(1), 0.3)}};
  EXPECT_EQ(predict_event(tie, Vector::Zero(1)), "E1");
}

TEST(PredictEvent, CommonBiasShiftKeepsArgmax) {
  std::mt19937_64 gen(8);
  EventModel em;
  for (int e = 0; e < 4; ++e) {
    em.event_ids.push_back("E" + std::to_string(e));
    em.models.push_back(model(oracle::random_vector(gen, 3), oracle::random_vector(gen, 1)[0]));
  }
  EventModel shifted = em;
  for (auto& m : shifted.models) m.bias += 0.75;
  for (int t = 0; t < 50; ++t) {
    const Vector x = oracle::random_vector(gen, 3);
    EXPECT_EQ(predict_event(em, x), predict_event(shifted, x));
    EXPECT_NEAR(decision_score(shifted.models[1], x), decision_score(em.models[1], x) + 0.75, 1e-12);
  }
}

TEST(Folds, StratifiedPartition) {
  std::vector<int> labels;
  for (int i = 0; i < 23; ++i) labels.push_back(i % 3 == 0 ? 1 : -1);
  const auto a = stratified_folds(labels, 5, 11);
  EXPECT_EQ(a, stratified_folds(labels, 5, 11));
  std::map<int, std::pair<int, int>> per_fold;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ASSERT_GE(a[i], 0);
    ASSERT_LT(a[i], 5);
    (labels[i] == 1 ? per_fold[a[i]].first : per_fold[a[i]].second)++;
  }
  int pmin = 99, pmax = 0, nmin = 99, nmax = 0;
  for (int f = 0; f < 5; ++f) {
    pmin = std::min(pmin, per_fold[f].first);
    pmax = std::max(pmax, per_fold[f].first);
    nmin = std::min(nmin, per_fold[f].second);
    nmax = std::max(nmax, per_fold[f].second);
  }
  EXPECT_LE(pmax - pmin, 1);
  EXPECT_LE(nmax - nmin, 1);
}

TEST(CrossValidate, SingleValueGrid) {
  std::mt19937_64 gen(9);
  const Blobs b = blobs(gen, 10, 1.0);
  EXPECT_EQ(cross_validate(b.x, b.y, 5, {3.0}, 1).best_c, 3.0);
}

TEST(CrossValidate, SeparableDataPerfectForLargeC) {
  std::mt19937_64 gen(10);
  const Blobs b = blobs(gen, 15, 5.0, 0.3);
  const CvResult r = cross_validate(b.x, b.y, 5, {1.0, 10.0, 100.0}, 2);
  for (double acc : r.mean_accuracy) EXPECT_EQ(acc, 1.0);
  EXPECT_EQ(r.best_c, 1.0);
  EXPECT_FALSE(r.folds_reduced);
}

TEST(CrossValidate, ReducesFoldsAndRejectsEmptyGrid) {
  std::mt19937_64 gen(11);
  Blobs b = blobs(gen, 10, 1.0);
  std::vector<int> few(20, -1);
  few[0] = few[1] = few[2] = 1;
  const CvResult r = cross_validate(b.x, few, 5, {1.0}, 3);
  EXPECT_TRUE(r.folds_reduced);
  EXPECT_EQ(r.folds_used, 3);
  EXPECT_THROW(cross_validate(b.x, b.y, 5, {}, 3), InputError);
}

TEST(EventModel, OneVsAllWithBackgroundNegatives) {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> nd(0.0, 0.3);
  FeatureMatrix x(40, 3);
  std::vector<std::string> labels;
  for (int i = 0; i < 40; ++i) {
    const int cls = i % 4;
    x.row(i) << nd(gen), nd(gen), nd(gen);
    if (cls < 3) x(i, cls) += 3.0;
    labels.push_back(cls < 3 ? "E" + std::to_string(cls + 1) : "background");
  }
  std::vector<CvResult> cv;
  const EventModel em = train_event_model(x, labels, {"E3", "E1", "E2"}, {0.1, 1.0, 10.0}, 5, 4, &cv);
  EXPECT_EQ(em.event_ids, (std::vector<std::string>{"E1", "E2", "E3"}));
  EXPECT_EQ(cv.size(), 3u);
  for (int i = 0; i < 40; ++i) {
    if (labels[static_cast<std::size_t>(i)] != "background") {
      EXPECT_EQ(predict_event(em, x.row(i).transpose()), labels[static_cast<std::size_t>(i)]);
    }
  }
}
