#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mpslab/errors.hpp"
#include "mpslab/tensor.hpp"
#include "test_util.hpp"

using namespace mpslab;
using mpslab::testing::random_matrix;
using mpslab::testing::random_tensor;

TEST(DenseTensor, RowMajorIndexing) {
  DenseTensor t({2, 3, 4});
  std::iota(t.data().begin(), t.data().end(), 0.0);
  EXPECT_EQ(t.at({1, 2, 3}), 23.0);
  EXPECT_EQ(t.at({0, 1, 0}), 4.0);
  EXPECT_THROW(t.at({2, 0, 0}), DimensionError);
  EXPECT_THROW(t.at({0, 0}), DimensionError);
}

TEST(DenseTensor, RejectsZeroExtentAndBadData) {
  EXPECT_THROW(DenseTensor({2, 0}), InvalidArgument);
  EXPECT_THROW(DenseTensor({2, 2}, std::vector<double>(3)), DimensionError);
}

TEST(DenseTensor, PermuteMatchesLoop) {
  const DenseTensor t = random_tensor({2, 3, 4}, 1);
  const std::size_t axes[] = {2, 0, 1};
  const DenseTensor p = t.permuted(axes);
  ASSERT_EQ(p.shape(), (Shape{4, 2, 3}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(p.at({k, i, j}), t.at({i, j, k}));
}

TEST(DenseTensor, ReshapeKeepsDataAndChecksSize) {
  const DenseTensor t = random_tensor({2, 6}, 2);
  const DenseTensor r = t.reshaped({3, 4});
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(r[i], t[i]);
  EXPECT_THROW(t.reshaped({5, 2}), DimensionError);
}

TEST(DenseTensor, AsMatrixSplit) {
  const DenseTensor t = random_tensor({2, 3, 4}, 3);
  const Matrix m = t.as_matrix(2);
  ASSERT_EQ(m.rows(), 6);
  ASSERT_EQ(m.cols(), 4);
  EXPECT_EQ(m(5, 3), t.at({1, 2, 3}));
}

TEST(Contract, MatchesExplicitSum) {
  const DenseTensor a = random_tensor({3, 4, 5}, 4);
  const DenseTensor b = random_tensor({5, 2, 4}, 5);
  const DenseTensor c = contract(a, b, {{1, 2}, {2, 0}});
  ASSERT_EQ(c.shape(), (Shape{3, 2}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t l = 0; l < 5; ++l) s += a.at({i, k, l}) * b.at({l, j, k});
      EXPECT_NEAR(c.at({i, j}), s, 1e-12);
    }
}

TEST(Contract, FullContractionGivesScalar) {
  const DenseTensor a = random_tensor({3, 2}, 6);
  const DenseTensor c = contract(a, a, {{0, 0}, {1, 1}});
  EXPECT_EQ(c.order(), 0u);
  EXPECT_NEAR(c[0], a.frobenius_norm() * a.frobenius_norm(), 1e-12);
}

TEST(Contract, ExtentMismatchThrows) {
  const DenseTensor a = random_tensor({3, 2}, 7);
  EXPECT_THROW(contract(a, a, {{0, 1}}), DimensionError);
}

TEST(SvdTruncate, FullRankReconstructs) {
  const Matrix m = random_matrix(7, 5, 8);
  const SvdResult s = svd_truncate(m, 100);
  EXPECT_EQ(s.rank(), 5u);
  EXPECT_LE((s.reconstruct() - m).norm() / m.norm(), 1e-12);
  EXPECT_LE((s.left.transpose() * s.left - Matrix::Identity(5, 5)).norm(), 1e-12);
  EXPECT_LE((s.right * s.right.transpose() - Matrix::Identity(5, 5)).norm(), 1e-12);
}

TEST(SvdTruncate, DiscardedWeightIsTruncationError) {
  const Matrix m = random_matrix(8, 6, 9);
  const Eigen::JacobiSVD<Matrix> oracle(m);
  const Vector sv = oracle.singularValues();
  for (std::size_t k = 1; k <= 6; ++k) {
    const SvdResult s = svd_truncate(m, k);
    double dropped = 0.0;
    for (Eigen::Index i = static_cast<Eigen::Index>(k); i < sv.size(); ++i) dropped += sv(i) * sv(i);
    EXPECT_EQ(s.rank(), k);
    EXPECT_NEAR(s.discarded_weight, dropped, 1e-10 * m.squaredNorm());
    EXPECT_NEAR((m - s.reconstruct()).squaredNorm(), dropped, 1e-10 * m.squaredNorm());
  }
}

TEST(SvdTruncate, NumericalRankOfOuterProduct) {
  const Matrix u = random_matrix(6, 1, 10), v = random_matrix(1, 4, 11);
  EXPECT_EQ(svd_truncate(u * v, 10).rank(), 1u);
}

TEST(SvdTruncate, ZeroMatrixKeepsOneTriple) {
  const SvdResult s = svd_truncate(Matrix::Zero(3, 3), 3);
  EXPECT_EQ(s.rank(), 1u);
  EXPECT_EQ(s.discarded_weight, 0.0);
}

TEST(SvdTruncate, CutoffDropsRelativeWeight) {
  Matrix m = Matrix::Zero(3, 3);
  m(0, 0) = 10.0;
  m(1, 1) = 1e-3;
  m(2, 2) = 1.0;
  EXPECT_EQ(svd_truncate(m, 3, 1e-6).rank(), 2u);
  EXPECT_THROW(svd_truncate(m, 0), InvalidArgument);
}

TEST(SvdTruncate, Deterministic) {
  const Matrix m = random_matrix(9, 9, 12);
  const SvdResult a = svd_truncate(m, 4), b = svd_truncate(m, 4);
  EXPECT_EQ(a.left, b.left);
  EXPECT_EQ(a.right, b.right);
}

TEST(SolveLinear, ResidualIsSmall) {
  const Matrix a = random_matrix(20, 20, 13) + 20.0 * Matrix::Identity(20, 20);
  const Vector b = random_matrix(20, 1, 14);
  const Vector x = solve_linear(a, b);
  EXPECT_LE((a * x - b).norm() / b.norm(), 1e-13);
}

TEST(SolveLinear, SingularAndShapeErrors) {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 0) = 1.0;
  EXPECT_THROW(solve_linear(a, Vector::Ones(3)), SingularMatrixError);
  EXPECT_THROW(solve_linear(Matrix::Identity(3, 2), Vector::Ones(3)), DimensionError);
  EXPECT_THROW(solve_linear(Matrix::Identity(3, 3), Vector::Ones(2)), DimensionError);
}
