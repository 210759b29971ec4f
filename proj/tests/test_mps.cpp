#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mpslab/errors.hpp"
#include "mpslab/mps.hpp"
#include "mpslab/mps_io.hpp"
#include "test_util.hpp"

using namespace mpslab;
using mpslab::testing::full_contract;
using mpslab::testing::random_sample;
using mpslab::testing::random_tensor;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

}  // namespace

TEST(Mps, ValidatesBondsAndBoundaries) {
  std::vector<DenseTensor> cores{DenseTensor({1, 2, 3}), DenseTensor({2, 2, 1})};
  EXPECT_THROW(Mps{cores}, DimensionError);
  std::vector<DenseTensor> open{DenseTensor({2, 2, 2}), DenseTensor({2, 2, 1})};
  EXPECT_THROW(Mps{open}, DimensionError);
}

TEST(Mps, EvaluateMatchesFullTensor) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t sites = 2 + seed % 5, chi = 1 + seed % 9;
    const Mps w = random_init(sites, 3, chi, 0.7, seed);
    const auto s = random_sample(sites, 3, 100 + seed);
    EXPECT_LE(rel(evaluate(w, s), full_contract(to_full_tensor(w), s.materialize())), 1e-10) << "seed " << seed;
  }
}

TEST(Mps, LabeledEvaluateMatchesFullTensor) {
  const LabelSite label{2, 4};
  const Mps w = random_init_labeled(5, 3, 6, label, 0.6, 7);
  const auto s = random_sample(5, 3, 8);
  const DenseTensor full = to_full_tensor(w);
  ASSERT_EQ(full.shape(), (Shape{3, 3, 3, 4, 3, 3}));
  const DenseTensor phi = s.materialize();
  const auto v = evaluate_labeled(w, s);
  ASSERT_EQ(v.size(), 4u);
  for (std::size_t c = 0; c < 4; ++c) {
    double acc = 0.0;
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t d = 0; d < 3; ++d)
          for (std::size_t e = 0; e < 3; ++e)
            for (std::size_t g = 0; g < 3; ++g)
              acc += full.at({a, b, d, c, e, g}) * phi.at({a, b, d, e, g});
    EXPECT_LE(rel(v[c], acc), 1e-10);
  }
  EXPECT_THROW(evaluate(w, s), InvalidArgument);
}

TEST(Mps, EvaluateRejectsWrongSample) {
  const Mps w = random_init(4, 3, 2, 1.0, 1);
  EXPECT_THROW(evaluate(w, random_sample(5, 3, 2)), DimensionError);
  EXPECT_THROW(evaluate(w, random_sample(4, 2, 2)), DimensionError);
}

TEST(Mps, NormAndInnerMatchFullTensor) {
  const Mps a = random_init(5, 3, 4, 0.8, 11), b = random_init(5, 3, 3, 0.8, 12);
  const DenseTensor fa = to_full_tensor(a), fb = to_full_tensor(b);
  EXPECT_LE(rel(a.norm_squared(), fa.frobenius_norm() * fa.frobenius_norm()), 1e-12);
  EXPECT_LE(rel(inner(a, b), full_contract(fa, fb)), 1e-12);
}

TEST(Mps, BondProfileAndParameterCount) {
  const Mps w = random_init(6, 3, 27, 1.0, 1);
  EXPECT_EQ(w.bond_profile().dims, (std::vector<std::size_t>{3, 9, 27, 9, 3}));
  EXPECT_EQ(w.bond_profile().max, 27u);
  EXPECT_EQ(w.parameter_count(), 9u + 81 + 729 + 729 + 81 + 9);
  EXPECT_EQ(max_bond_extent(6, 3, 2), 27u);
  EXPECT_EQ(max_bond_extent(4, 2, 1, LabelSite{0, 10}), 4u);
}

TEST(Compress, FullRankRoundTrip) {
  const DenseTensor t = random_tensor({3, 3, 3, 3, 3, 3}, 21);
  const Compression c = compress(t, 27);
  EXPECT_LE((to_full_tensor(c.mps) - t).frobenius_norm() / t.frobenius_norm(), 1e-10);
  EXPECT_LE(c.discarded_weight, 1e-20 * t.frobenius_norm());
  EXPECT_EQ(c.mps.gauge().kind, GaugeKind::left_canonical);
}

TEST(Compress, SingleBondTruncationErrorIsDiscardedWeight) {
  // bonds (2, 4, 2): only the middle one is cut at max_bond 3
  const DenseTensor t = random_tensor({2, 2, 2, 2}, 22);
  const Compression c = compress(t, 3);
  ASSERT_EQ(c.mps.bond_profile().dims, (std::vector<std::size_t>{2, 3, 2}));
  const double err = (to_full_tensor(c.mps) - t).frobenius_norm();
  EXPECT_NEAR(err * err, c.discarded_weight, 1e-10 * t.frobenius_norm() * t.frobenius_norm());
}

TEST(Compress, BondCapRespected) {
  const DenseTensor t = random_tensor({3, 3, 3, 3, 3, 3}, 23);
  for (std::size_t chi : {1, 2, 5, 10}) EXPECT_LE(compress(t, chi).mps.bond_profile().max, chi);
}

TEST(Truncate, RightCanonicalAndErrorBound) {
  const Mps w = random_init(6, 3, 12, 0.5, 31);
  const Compression c = truncate(w, 4);
  EXPECT_EQ(c.mps.gauge().kind, GaugeKind::right_canonical);
  for (std::size_t j = 1; j < 6; ++j) EXPECT_TRUE(is_right_orthonormal(c.mps.core(j), 1e-10));
  const double err = (to_full_tensor(c.mps) - to_full_tensor(w)).frobenius_norm();
  EXPECT_NEAR(err * err, c.discarded_weight, 1e-9 * w.norm_squared());
  const Compression same = truncate(w, 27);
  EXPECT_LE((to_full_tensor(same.mps) - to_full_tensor(w)).frobenius_norm(), 1e-10 * std::sqrt(w.norm_squared()));
}

TEST(Canonicalize, MixedGaugePreservesTensor) {
  const Mps w = random_init_labeled(6, 3, 5, LabelSite{3, 3}, 0.9, 41);
  const DenseTensor full = to_full_tensor(w);
  for (std::size_t center = 0; center < 6; ++center) {
    const Mps m = canonicalize(w, center);
    EXPECT_TRUE(m.gauge().is_mixed_at(center));
    for (std::size_t j = 0; j < center; ++j) EXPECT_TRUE(is_left_orthonormal(m.core(j), 1e-10));
    for (std::size_t j = center + 1; j < 6; ++j) EXPECT_TRUE(is_right_orthonormal(m.core(j), 1e-10));
    EXPECT_LE((to_full_tensor(m) - full).frobenius_norm() / full.frobenius_norm(), 1e-12);
    const DenseTensor& c = m.core(center);
    EXPECT_NEAR(c.frobenius_norm() * c.frobenius_norm(), w.norm_squared(), 1e-10 * w.norm_squared());
  }
}

TEST(Mps, ReplaceCoreKeepsShape) {
  Mps w = random_init(3, 2, 2, 1.0, 51);
  EXPECT_THROW(w.replace_core(1, DenseTensor({2, 2, 3})), DimensionError);
  w.replace_core(1, DenseTensor({2, 2, 2}));
  EXPECT_EQ(w.norm_squared(), 0.0);
}

TEST(MpsIo, RoundTripIsExact) {
  const Mps w = random_init_labeled(4, 3, 3, LabelSite{1, 5}, 0.3, 61);
  std::stringstream ss;
  write_mps(ss, w);
  const Mps r = read_mps(ss);
  ASSERT_EQ(r.label_site(), w.label_site());
  for (std::size_t j = 0; j < 4; ++j) {
    ASSERT_EQ(r.core(j).shape(), w.core(j).shape());
    for (std::size_t k = 0; k < w.core(j).size(); ++k) EXPECT_EQ(r.core(j)[k], w.core(j)[k]);
  }
}

TEST(MpsIo, MalformedInputRejected) {
  std::stringstream bad("mpslab-mps 9\n");
  EXPECT_THROW(read_mps(bad), FormatError);
  std::stringstream truncated("mpslab-mps 1\nsites 2\nphys 2\nlabel none\nbonds 1\ncore 0 1 2 1\n0.5\n");
  EXPECT_THROW(read_mps(truncated), FormatError);
  EXPECT_THROW(load_mps("/nonexistent/dir/model.mps"), IoError);
}
