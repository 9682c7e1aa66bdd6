#include <gtest/gtest.h>

#include <random>

#include "mmsc/multimodal.hpp"
#include "oracles.hpp"

using namespace mmsc;

namespace {

Dictionary random_joint(std::mt19937_64& gen, ModalityDims dims, Eigen::Index k) {
  return Dictionary(oracle::unit_columns(oracle::random_matrix(gen, dims.total(), k)), true, dims);
}

}  // namespace

TEST(FuseInput, UnitDims) {
  const Vector f = fuse_input(Vector::Constant(1, 2.0), Vector::Constant(1, 3.0));
  EXPECT_EQ(f[0], 2.0);
  EXPECT_EQ(f[1], 3.0);
}

TEST(FuseInput, ScalesByRootDim) {
  Vector a = Vector::Zero(4);
  a[0] = 2.0;
  const Vector f = fuse_input(a, Vector::Zero(1));
  Vector expected = Vector::Zero(5);
  expected[0] = 1.0;
  EXPECT_EQ(f, expected);
}

TEST(FuseInput, NormIdentityAndLinearity) {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 20; ++t) {
    const Vector a1 = oracle::random_vector(gen, 48), v1 = oracle::random_vector(gen, 128);
    const Vector a2 = oracle::random_vector(gen, 48), v2 = oracle::random_vector(gen, 128);
    EXPECT_NEAR(fuse_input(a1, v1).squaredNorm(), a1.squaredNorm() / 48.0 + v1.squaredNorm() / 128.0, 1e-12);
    const double s = 0.7, r = -1.3;
    const Vector lhs = fuse_input(s * a1 + r * a2, s * v1 + r * v2);
    const Vector rhs = s * fuse_input(a1, v1) + r * fuse_input(a2, v2);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(FuseInput, NonFiniteThrows) {
  Vector a = Vector::Ones(2);
  a[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(fuse_input(a, Vector::Ones(2)), InputError);
}

TEST(LambdaJoint, Formula) {
  EXPECT_DOUBLE_EQ(lambda_joint_of(1.0, {1, 1}), 2.0);
  EXPECT_NEAR(lambda_joint_of(1.0, {48, 128}), 11.0 / 384.0, 1e-15);
  EXPECT_NEAR(lambda_joint_of(1.0, {48, 128}), 0.0286458, 1e-7);
  EXPECT_EQ(lambda_joint_of(0.0, {48, 128}), 0.0);
  EXPECT_NEAR(lambda_cross_of(lambda_joint_of(0.37, {48, 128}), {48, 128}), 0.37, 1e-15);
}

TEST(JointObjective, DecomposesIntoCrossModalObjectives) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> lam(0.0, 5.0);
  std::uniform_int_distribution<Eigen::Index> dim(1, 20);
  for (int t = 0; t < 200; ++t) {
    const ModalityDims dims = t % 4 == 0 ? ModalityDims{48, 128} : ModalityDims{dim(gen), dim(gen)};
    const Dictionary dj = random_joint(gen, dims, 12);
    const auto [da, dv] = split_joint(dj);
    const Vector xa = oracle::random_vector(gen, dims.audio), xv = oracle::random_vector(gen, dims.video);
    const Vector y = oracle::random_vector(gen, 12);
    const double l2 = lam(gen);
    const double l1 = lambda_joint_of(l2, dims);
    const double joint = lasso_objective(fuse_input(xa, xv), dj, y, l1);
    const double split = lasso_objective(xa, da, y, l2) / static_cast<double>(dims.audio) +
                         lasso_objective(xv, dv, y, l2) / static_cast<double>(dims.video);
    EXPECT_NEAR(joint, split, 1e-10);
  }
}

TEST(SplitJoint, UnitDims) {
  Matrix m(2, 1);
  m << 0.6, 0.8;
  const auto [a, v] = split_joint(Dictionary(m, true, ModalityDims{1, 1}));
  EXPECT_EQ(a.atoms()(0, 0), 0.6);
  EXPECT_EQ(v.atoms()(0, 0), 0.8);
  EXPECT_FALSE(a.normalized());
  EXPECT_FALSE(v.normalized());
}

TEST(SplitJoint, ScaledBlocks) {
  Matrix m(5, 1);
  m << 0.5, 0.0, 0.0, 0.0, 1.0;
  const auto [a, v] = split_joint(Dictionary(m, false, ModalityDims{4, 1}));
  Vector ea = Vector::Zero(4);
  ea[0] = 1.0;
  EXPECT_EQ(Vector(a.atoms().col(0)), ea);
  EXPECT_EQ(v.atoms()(0, 0), 1.0);
}

TEST(SplitJoint, RoundTrip) {
  std::mt19937_64 gen(3);
  for (int t = 0; t < 10; ++t) {
    const Dictionary dj = random_joint(gen, {48, 128}, 64);
    const auto [a, v] = split_joint(dj);
    EXPECT_EQ(a.input_dim(), 48);
    EXPECT_EQ(v.input_dim(), 128);
    EXPECT_LE((refuse_blocks(a, v) - dj.atoms()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SplitJoint, MissingDimsThrows) { EXPECT_THROW(split_joint(Dictionary(Matrix::Identity(2, 2))), InputError); }

TEST(CrossModal, ZeroInput) {
  const Dictionary d(Matrix::Constant(1, 1, 2.0), false);
  EXPECT_TRUE(encode_cross_modal(Vector::Zero(1), d, 0.5).coeffs().isZero(0.0));
}

TEST(CrossModal, ScalarLeastSquares) {
  const Dictionary d(Matrix::Constant(1, 1, 2.0), false);
  EXPECT_NEAR(encode_cross_modal(Vector::Constant(1, 4.0), d, 0.0, 1e-12).coeffs()[0], 2.0, 1e-12);
}

TEST(CrossModal, KktOnRandomInstances) {
  std::mt19937_64 gen(4);
  for (int t = 0; t < 10; ++t) {
    const auto [a, v] = split_joint(random_joint(gen, {6, 9}, 20));
    const Vector x = oracle::random_vector(gen, 9);
    const SparseCode c = encode_cross_modal(x, v, 0.8, 1e-8, 100000);
    EXPECT_TRUE(c.converged());
    EXPECT_LE(kkt_violation(x, v, c.coeffs(), 0.8), 1e-8);
  }
}

TEST(CrossModal, DimensionMismatchThrows) {
  const Dictionary d(Matrix::Constant(2, 1, 2.0), false);
  EXPECT_THROW(encode_cross_modal(Vector::Zero(3), d, 0.1), InputError);
}

TEST(LearnJoint, IdenticalPairsRankOne) {
  FeatureMatrix a(3, 2), v(3, 3);
  a.rowwise() = Eigen::RowVector2d(1.0, -2.0);
  v.rowwise() = Eigen::RowVector3d(0.5, 0.0, 3.0);
  LearnConfig cfg;
  cfg.atom_count = 1;
  cfg.lambda = 0.0;
  cfg.epochs = 5;
  cfg.solver_tol = 1e-12;
  const JointLearnResult r = learn_joint(a, v, cfg);
  const Vector fused = fuse_input(a.row(0).transpose(), v.row(0).transpose());
  EXPECT_LE((r.dictionary.inner.atoms().col(0) - fused / fused.norm()).norm(), 1e-8);
  EXPECT_EQ(r.dictionary.dims(), (ModalityDims{2, 3}));
  EXPECT_EQ(r.dictionary.lambda_joint, 0.0);
}

TEST(LearnJoint, PlantedRecovery) {
  std::mt19937_64 gen(5);
  const Matrix q = Eigen::HouseholderQR<Matrix>(oracle::random_matrix(gen, 16, 16)).householderQ();
  const Matrix truth = q.leftCols(4);
  std::uniform_int_distribution<int> pick(0, 3);
  std::uniform_real_distribution<double> mag(0.5, 2.0);
  FeatureMatrix a(200, 6), v(200, 10);
  for (int i = 0; i < 200; ++i) {
    const Vector fused = mag(gen) * truth.col(pick(gen));
    a.row(i) = fused.head(6).transpose() * std::sqrt(6.0);
    v.row(i) = fused.tail(10).transpose() * std::sqrt(10.0);
  }
  LearnConfig cfg;
  cfg.atom_count = 4;
  cfg.lambda = 0.001;
  cfg.epochs = 100;
  cfg.seed = 5;
  const JointLearnResult r = learn_joint(a, v, cfg);
  for (int k = 0; k < 4; ++k) {
    EXPECT_GE((r.dictionary.inner.atoms().transpose() * truth.col(k)).cwiseAbs().maxCoeff(), 0.99);
  }
}

TEST(LearnJoint, EmptyThrows) {
  LearnConfig cfg;
  cfg.atom_count = 1;
  EXPECT_THROW(learn_joint(FeatureMatrix(0, 2), FeatureMatrix(0, 3), cfg), InputError);
}

TEST(LearnJoint, InconsistentPairsThrow) {
  LearnConfig cfg;
  cfg.atom_count = 1;
  EXPECT_THROW(learn_joint(FeatureMatrix::Ones(3, 2), FeatureMatrix::Ones(2, 3), cfg), InputError);
}

TEST(Union, Lengths) {
  EXPECT_EQ(union_features(Vector::Zero(512), Vector::Zero(512)).size(), 1024);
  Vector v(2);
  v << 2.0, 3.0;
  EXPECT_EQ(union_features(Vector::Constant(1, 1.0), v), Eigen::Vector3d(1.0, 2.0, 3.0));
  EXPECT_TRUE(union_features(Vector::Zero(3), Vector::Zero(4)).isZero(0.0));
}
