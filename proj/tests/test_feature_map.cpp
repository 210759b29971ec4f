#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mpslab/errors.hpp"
#include "mpslab/feature_map.hpp"

using namespace mpslab;

TEST(FeatureMap, PolynomialPowers) {
  const auto v = apply_scalar(FeatureMap::polynomial(4), 1.5);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_DOUBLE_EQ(v[0], 1.0);
  EXPECT_DOUBLE_EQ(v[1], 1.5);
  EXPECT_DOUBLE_EQ(v[2], 2.25);
  EXPECT_DOUBLE_EQ(v[3], 3.375);
}

TEST(FeatureMap, PolynomialAtZero) {
  const auto v = apply_scalar(FeatureMap::polynomial(3), 0.0);
  EXPECT_EQ(v, (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(FeatureMap, TrigonometricEndpoints) {
  const auto map = FeatureMap::trigonometric();
  auto v = apply_scalar(map, 0.0);
  EXPECT_NEAR(v[0], 1.0, 1e-15);
  EXPECT_NEAR(v[1], 0.0, 1e-15);
  v = apply_scalar(map, 1.0);
  EXPECT_NEAR(v[0], 0.0, 1e-15);
  EXPECT_NEAR(v[1], 1.0, 1e-15);
  v = apply_scalar(map, 0.5);
  EXPECT_NEAR(v[0] * v[0] + v[1] * v[1], 1.0, 1e-15);
  EXPECT_NEAR(v[0], std::cos(std::numbers::pi / 4), 1e-15);
}

TEST(FeatureMap, TrigonometricRejectsOutOfRange) {
  EXPECT_THROW(apply_scalar(FeatureMap::trigonometric(), 1.01), DomainError);
  EXPECT_THROW(apply_scalar(FeatureMap::trigonometric(), -0.1), DomainError);
}

TEST(FeatureMap, RejectsNonFiniteAndSmallDim) {
  EXPECT_THROW(apply_scalar(FeatureMap::polynomial(3), std::nan("")), DomainError);
  EXPECT_THROW(FeatureMap::polynomial(1).validate(), InvalidArgument);
  EXPECT_THROW((FeatureMap{FeatureKind::trigonometric, 3}).validate(), InvalidArgument);
}

TEST(FeatureMap, KindNamesRoundTrip) {
  for (auto k : {FeatureKind::polynomial, FeatureKind::trigonometric}) EXPECT_EQ(feature_kind_from_string(to_string(k)), k);
  EXPECT_THROW(feature_kind_from_string("fourier"), InvalidArgument);
}

TEST(Featurize, LocalsAndMaterializedOuterProduct) {
  const std::vector<double> x{0.5, -2.0, 3.0};
  const auto s = featurize(FeatureMap::polynomial(2), x);
  EXPECT_EQ(s.sites(), 3u);
  EXPECT_EQ(s.dim(), 2u);
  EXPECT_DOUBLE_EQ(s.local(1)[1], -2.0);
  const DenseTensor t = s.materialize();
  ASSERT_EQ(t.shape(), (Shape{2, 2, 2}));
  EXPECT_DOUBLE_EQ(t.at({0, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(t.at({1, 1, 1}), 0.5 * -2.0 * 3.0);
  EXPECT_DOUBLE_EQ(t.at({1, 0, 1}), 1.5);
}

TEST(Featurize, EmptyInputRejected) {
  EXPECT_THROW(featurize(FeatureMap::polynomial(3), std::vector<double>{}), InvalidArgument);
}
