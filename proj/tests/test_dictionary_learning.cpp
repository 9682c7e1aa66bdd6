#include <gtest/gtest.h>

#include <random>
#include <set>

#include "mmsc/dictionary_learning.hpp"
#include "oracles.hpp"

using namespace mmsc;

namespace {

FeatureMatrix random_rows(std::mt19937_64& gen, Eigen::Index m, Eigen::Index n) {
  return oracle::random_matrix(gen, m, n);
}

/// Examples x_i = D* y_i with 1-sparse positive codes over a planted
/// dictionary of well-separated atoms.
FeatureMatrix planted_examples(std::mt19937_64& gen, const Matrix& truth, Eigen::Index m) {
  std::uniform_int_distribution<Eigen::Index> pick(0, truth.cols() - 1);
  std::uniform_real_distribution<double> mag(0.5, 2.0);
  FeatureMatrix x(m, truth.rows());
  for (Eigen::Index i = 0; i < m; ++i) x.row(i) = mag(gen) * truth.col(pick(gen)).transpose();
  return x;
}

Matrix separated_atoms(std::mt19937_64& gen) {
  // Orthonormal columns from a QR factor: pairwise cosine 0.
  const Matrix q = Eigen::HouseholderQR<Matrix>(oracle::random_matrix(gen, 8, 8)).householderQ();
  return q.leftCols(4);
}

double best_abs_cosine(const Vector& atom, const Matrix& learned) {
  return (learned.transpose() * atom).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(LearnConfig, Validation) {
  LearnConfig c;
  c.atom_count = 0;
  EXPECT_THROW(c.validate(), InputError);
  c.atom_count = 2;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(InitDictionary, PermutationOfUnitRows) {
  std::mt19937_64 gen(1);
  FeatureMatrix x = random_rows(gen, 5, 3);
  for (Eigen::Index i = 0; i < 5; ++i) x.row(i).normalize();
  const Dictionary d = init_dictionary(x, 5, 42);
  std::set<Eigen::Index> matched;
  for (Eigen::Index k = 0; k < 5; ++k) {
    for (Eigen::Index i = 0; i < 5; ++i) {
      if ((d.atoms().col(k) - x.row(i).transpose()).norm() < 1e-15) matched.insert(i);
    }
  }
  EXPECT_EQ(matched.size(), 5u);
}

TEST(InitDictionary, SingleExample) {
  FeatureMatrix x(1, 2);
  x << 1.0, 0.0;
  const Dictionary d = init_dictionary(x, 1, 0);
  EXPECT_EQ(d.atoms()(0, 0), 1.0);
  EXPECT_EQ(d.atoms()(1, 0), 0.0);
}

TEST(InitDictionary, DeterministicAndSkipsZeroRows) {
  std::mt19937_64 gen(2);
  FeatureMatrix x = random_rows(gen, 6, 4);
  x.row(2).setZero();
  const Dictionary a = init_dictionary(x, 8, 9);
  const Dictionary b = init_dictionary(x, 8, 9);
  EXPECT_EQ(a.atoms(), b.atoms());
  EXPECT_TRUE(a.atoms().allFinite());
  for (Eigen::Index k = 0; k < a.atom_count(); ++k) EXPECT_NEAR(a.atoms().col(k).norm(), 1.0, 1e-12);
}

TEST(InitDictionary, EmptyOrAllZeroInputThrows) {
  EXPECT_THROW(init_dictionary(FeatureMatrix(0, 3), 2, 0), InputError);
  EXPECT_THROW(init_dictionary(FeatureMatrix::Zero(3, 3), 2, 0), InputError);
}

TEST(LearnDictionary, RankOneClosedForm) {
  FeatureMatrix x(1, 3);
  x << 3.0, -1.0, 2.0;
  LearnConfig cfg;
  cfg.atom_count = 1;
  cfg.lambda = 0.0;
  cfg.epochs = 5;
  cfg.solver_tol = 1e-12;
  const LearnResult r = learn_dictionary(x, cfg);
  const Vector expected = x.row(0).transpose() / x.row(0).norm();
  EXPECT_LE((r.dictionary.atoms().col(0) - expected).norm(), 1e-8);
  EXPECT_LE(r.stats.objective_per_epoch.back(), 1e-8);
  EXPECT_LE(r.stats.objective_per_epoch.size(), 5u);
}

TEST(LearnDictionary, PlantedRecovery) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 gen(seed);
    const Matrix truth = separated_atoms(gen);
    const FeatureMatrix x = planted_examples(gen, truth, 200);
    LearnConfig cfg;
    cfg.atom_count = 4;
    cfg.lambda = 0.01;
    cfg.epochs = 100;
    cfg.seed = seed;
    const LearnResult r = learn_dictionary(x, cfg);
    for (Eigen::Index k = 0; k < 4; ++k) EXPECT_GE(best_abs_cosine(truth.col(k), r.dictionary.atoms()), 0.99) << "seed " << seed;
  }
}

TEST(LearnDictionary, HugeLambdaGivesZeroCodes) {
  std::mt19937_64 gen(4);
  FeatureMatrix x = random_rows(gen, 10, 5);
  for (Eigen::Index i = 0; i < 10; ++i) x.row(i).normalize();
  LearnConfig cfg;
  cfg.atom_count = 6;
  cfg.lambda = 1e6;
  cfg.epochs = 3;
  const LearnResult r = learn_dictionary(x, cfg);
  EXPECT_TRUE(r.codes.isZero(0.0));
  EXPECT_NEAR(r.stats.objective_per_epoch.back(), x.squaredNorm(), 1e-12);
}

TEST(LearnDictionary, ObjectiveNonIncreasingAndUnitAtoms) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 gen(100 + seed);
    const FeatureMatrix x = random_rows(gen, 40, 6);
    LearnConfig cfg;
    cfg.atom_count = 10;
    cfg.lambda = 0.2;
    cfg.epochs = 15;
    cfg.seed = seed;
    const LearnResult r = learn_dictionary(x, cfg);
    const auto& obj = r.stats.objective_per_epoch;
    for (std::size_t e = 1; e < obj.size(); ++e) EXPECT_LE(obj[e], obj[e - 1] + 1e-9);
    for (Eigen::Index k = 0; k < r.dictionary.atom_count(); ++k) EXPECT_NEAR(r.dictionary.atoms().col(k).norm(), 1.0, 1e-9);
  }
}

TEST(LearnDictionary, BitwiseDeterministic) {
  std::mt19937_64 gen(8);
  const FeatureMatrix x = random_rows(gen, 30, 5);
  LearnConfig cfg;
  cfg.atom_count = 8;
  cfg.epochs = 5;
  cfg.seed = 77;
  const LearnResult a = learn_dictionary(x, cfg);
  const LearnResult b = learn_dictionary(x, cfg);
  EXPECT_EQ(a.dictionary.atoms(), b.dictionary.atoms());
  EXPECT_EQ(a.stats.objective_per_epoch, b.stats.objective_per_epoch);
}

TEST(LearnDictionary, RejectsNonFinite) {
  FeatureMatrix x = FeatureMatrix::Ones(3, 2);
  x(1, 1) = std::numeric_limits<double>::quiet_NaN();
  LearnConfig cfg;
  cfg.atom_count = 2;
  EXPECT_THROW(learn_dictionary(x, cfg), InputError);
}

TEST(LearnDictionary, OvercompleteAllowed) {
  std::mt19937_64 gen(12);
  const FeatureMatrix x = random_rows(gen, 20, 3);
  LearnConfig cfg;
  cfg.atom_count = 9;
  cfg.epochs = 3;
  EXPECT_EQ(learn_dictionary(x, cfg).dictionary.atom_count(), 9);
}

TEST(DictionaryUpdate, ZeroCodesLeaveDictionaryUnchanged) {
  std::mt19937_64 gen(3);
  const FeatureMatrix x = random_rows(gen, 5, 4);
  const Dictionary d(oracle::unit_columns(oracle::random_matrix(gen, 4, 3)));
  EXPECT_EQ(dictionary_update_step(x, FeatureMatrix::Zero(5, 3), d).atoms(), d.atoms());
}

TEST(DictionaryUpdate, RankOneLeastSquares) {
  FeatureMatrix x(1, 2);
  x << 0.6, 0.8;
  Matrix m(2, 1);
  m << 1.0, 0.0;
  const Dictionary d(m);
  FeatureMatrix codes(1, 1);
  codes << 1.0;
  const Dictionary u = dictionary_update_step(x, codes, d);
  EXPECT_NEAR(u.atoms()(0, 0), 0.6, 1e-12);
  EXPECT_NEAR(u.atoms()(1, 0), 0.8, 1e-12);
}

TEST(DictionaryUpdate, ReconstructionErrorDoesNotIncrease) {
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 gen(200 + trial);
    const FeatureMatrix x = random_rows(gen, 12, 5);
    const Dictionary d(oracle::unit_columns(oracle::random_matrix(gen, 5, 7)));
    const FeatureMatrix codes = encode_rows(x, d, {0.1, 1e-10, 1000});
    const double before = (x - codes * d.atoms().transpose()).squaredNorm();
    const Dictionary u = dictionary_update_step(x, codes, d);
    const double after = (x - codes * u.atoms().transpose()).squaredNorm();
    EXPECT_LE(after, before + 1e-9);
  }
}

TEST(DictionaryUpdate, DimensionMismatchThrows) {
  const Dictionary d(Matrix::Identity(3, 3));
  EXPECT_THROW(dictionary_update_step(FeatureMatrix::Zero(2, 3), FeatureMatrix::Zero(2, 2), d), InputError);
}

TEST(DeadAtoms, AllUsedUnchanged) {
  std::mt19937_64 gen(5);
  const FeatureMatrix x = random_rows(gen, 4, 3);
  const Dictionary d(Matrix::Identity(3, 3));
  const auto [out, count] = replace_dead_atoms(d, {1, 2, 1}, x, FeatureMatrix::Zero(4, 3), 0, 1);
  EXPECT_EQ(count, 0);
  EXPECT_EQ(out.atoms(), d.atoms());
}

TEST(DeadAtoms, DeadAtomTakesWorstExample) {
  FeatureMatrix x(3, 2);
  x << 1.0, 0.0, 0.1, 0.0, 0.0, 5.0;
  const Dictionary d(Matrix::Identity(2, 2));
  FeatureMatrix codes = FeatureMatrix::Zero(3, 2);
  codes(0, 0) = 1.0;
  codes(1, 0) = 0.1;
  // Direct residuals: 0, 0, 25. Example 2 is the worst.
  const auto [out, count] = replace_dead_atoms(d, {2, 0}, x, codes, 0, 3);
  EXPECT_EQ(count, 1);
  EXPECT_NEAR(out.atoms()(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(out.atoms()(1, 1), 1.0, 1e-15);
}

TEST(DeadAtoms, AllDeadReplacedByDistinctExamples) {
  std::mt19937_64 gen(6);
  const FeatureMatrix x = random_rows(gen, 6, 4);
  const Dictionary d(oracle::unit_columns(oracle::random_matrix(gen, 4, 4)));
  const auto [out, count] = replace_dead_atoms(d, {0, 0, 0, 0}, x, FeatureMatrix::Zero(6, 4), 0, 7);
  EXPECT_EQ(count, 4);
  std::set<Eigen::Index> used;
  for (Eigen::Index k = 0; k < 4; ++k) {
    for (Eigen::Index i = 0; i < 6; ++i) {
      if ((out.atoms().col(k) - x.row(i).transpose() / x.row(i).norm()).norm() < 1e-12) used.insert(i);
    }
  }
  EXPECT_EQ(used.size(), 4u);
}
