#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "mpslab/datagen.hpp"
#include "mpslab/errors.hpp"

using namespace mpslab;

TEST(Nilpotent, IndexEqualsSize) {
  const Matrix m = build_nilpotent(5, 0.3);
  Matrix p = Matrix::Identity(5, 5);
  for (int k = 1; k < 5; ++k) p = p * m;
  EXPECT_GT(p.norm(), 0.0);
  EXPECT_NEAR(p(0, 4), std::pow(0.3, 4), 1e-15);
  EXPECT_EQ((p * m).norm(), 0.0);
}

TEST(RandomOrthogonal, IsOrthogonalAndSeeded) {
  const Matrix q = random_orthogonal(27, 5);
  EXPECT_LE((q.transpose() * q - Matrix::Identity(27, 27)).norm(), 1e-12);
  EXPECT_EQ(q, random_orthogonal(27, 5));
  EXPECT_NE(q, random_orthogonal(27, 6));
}

TEST(DeriveSeed, DistinctStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 64; ++s) seen.insert(derive_seed(7, s));
  EXPECT_EQ(seen.size(), 64u);
}

TEST(Target, FullBondProfile) {
  const Mps w = build_target_mps(TargetSpec{});
  EXPECT_EQ(w.bond_profile().dims, (std::vector<std::size_t>{27, 27, 27, 27, 27}));
  // canonical form exposes the rank, capped by f^min(j, N-j)
  const Compression c = truncate(w, 27);
  EXPECT_EQ(c.mps.bond_profile().dims, (std::vector<std::size_t>{3, 9, 27, 9, 3}));
  EXPECT_LE(c.discarded_weight, 1e-20 * w.norm_squared());
}

TEST(Target, CoefficientsScaleWithTotalDegree) {
  // Same seed, ε doubled: the coefficient of x1^s1…xN^sN must grow by 2^(Σ s).
  TargetSpec a;
  a.sites = 4;
  a.epsilon = 0.2;
  TargetSpec b = a;
  b.epsilon = 0.4;
  const DenseTensor wa = to_full_tensor(build_target_mps(a)), wb = to_full_tensor(build_target_mps(b));
  std::size_t checked = 0;
  for (std::size_t i = 0; i < wa.size(); ++i) {
    std::size_t rest = i, degree = 0;
    for (int k = 0; k < 4; ++k) {
      degree += rest % 3;
      rest /= 3;
    }
    if (std::abs(wa[i]) < 1e-12) continue;
    EXPECT_NEAR(wb[i] / wa[i], std::pow(2.0, static_cast<double>(degree)), 1e-8);
    ++checked;
  }
  EXPECT_GT(checked, 40u);
}

TEST(Target, TwoSitesSecondOrderCoefficient) {
  TargetSpec spec;
  spec.sites = 2;
  spec.epsilon = 0.5;
  const DenseTensor w1 = to_full_tensor(build_target_mps(spec));
  spec.epsilon = 0.25;
  const DenseTensor w2 = to_full_tensor(build_target_mps(spec));
  // x1·x2 carries ε²
  EXPECT_NEAR(w1.at({1, 1}) / w2.at({1, 1}), 4.0, 1e-10);
  EXPECT_NEAR(w1.at({0, 0}), w2.at({0, 0}), 1e-14);
}

TEST(Target, SmallEpsilonGivesNearlyConstantLabels) {
  // label spread is first order in eps
  auto spread = [](double eps) {
    TargetSpec spec;
    spec.epsilon = eps;
    const Mps w = build_target_mps(spec);
    const auto x = sample_features(50, spec.sites, 3);
    std::vector<double> y;
    const FeatureMap map = FeatureMap::polynomial(3);
    for (std::size_t i = 0; i < 50; ++i) y.push_back(evaluate(w, featurize(map, {x.data() + i * 6, 6})));
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    return std::pair{*hi - *lo, std::abs(y[0])};
  };
  const auto [s6, y6] = spread(1e-6);
  const auto [s5, y5] = spread(1e-5);
  (void)y5;
  EXPECT_NEAR(s6 / s5, 0.1, 1e-3);
  EXPECT_LE(s6, 1e-3 * y6);
}

TEST(Target, SharedUnitaryModeAvailable) {
  TargetSpec spec;
  spec.per_site_unitary = false;
  EXPECT_NO_THROW(build_target_mps(spec));
  spec.epsilon = 0.0;
  EXPECT_THROW(spec.validate(), InvalidArgument);
}

TEST(LabelStatistics, SampleStdDenominator) {
  const std::vector<double> y{1.0, 2.0, 3.0, 4.0};
  const auto s = label_statistics(y);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_THROW(label_statistics(std::vector<double>{2.0, 2.0}), DegenerateDataError);
}

TEST(GenerateDataset, NormalizedAndDeterministic) {
  TargetSpec spec;
  const Dataset d = generate_dataset(spec, 200, 9);
  const double mean = std::accumulate(d.labels.begin(), d.labels.end(), 0.0) / 200.0;
  double ss = 0.0;
  for (double v : d.labels) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(ss / 199.0), 1.0, 1e-12);
  const Dataset again = generate_dataset(spec, 200, 9);
  EXPECT_EQ(d.labels, again.labels);
  EXPECT_EQ(d.features, again.features);
  EXPECT_NE(d.features, generate_dataset(spec, 200, 10).features);
}

TEST(GenerateDataset, FixedStatisticsApplied) {
  const Mps target = build_target_mps(TargetSpec{});
  const NormalizationStats stats{0.5, 2.0};
  const Dataset d = generate_dataset(target, 10, 4, stats);
  const auto raw = d.raw_labels();
  const FeatureMap map = FeatureMap::polynomial(3);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_NEAR(raw[i], evaluate(target, featurize(map, d.row(i))), 1e-12);
    EXPECT_NEAR(d.labels[i], (raw[i] - 0.5) / 2.0, 1e-12);
  }
}

TEST(LabelNoise, ExactCountAndDifferentClass) {
  std::vector<int> labels(1024);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto noisy = add_label_noise(labels, 0.1, 10, seed);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      changed += noisy[i] != labels[i];
      EXPECT_GE(noisy[i], 0);
      EXPECT_LT(noisy[i], 10);
    }
    EXPECT_EQ(changed, 102u);
  }
  EXPECT_EQ(add_label_noise(labels, 0.0, 10, 1), labels);
  EXPECT_THROW(add_label_noise(labels, 1.5, 10, 1), InvalidArgument);
}

TEST(DatasetCsv, RoundTrip) {
  const Dataset d = generate_dataset(TargetSpec{}, 25, 3);
  const auto path = std::filesystem::temp_directory_path() / "mpslab_dataset_roundtrip.csv";
  write_dataset_csv(path, d);
  const Dataset r = read_dataset_csv(path);
  EXPECT_EQ(r.features, d.features);
  EXPECT_EQ(r.labels, d.labels);
  EXPECT_EQ(r.sites, d.sites);
  EXPECT_EQ(r.normalization.mean, d.normalization.mean);
  EXPECT_EQ(r.normalization.std, d.normalization.std);
  EXPECT_EQ(r.raw_labels(), d.raw_labels());
  {
    std::ofstream os(path);
    os << "x1,x2,y\n0.5,-1,2\n";
  }
  const Dataset plain = read_dataset_csv(path);
  EXPECT_EQ(plain.labels, std::vector<double>{2.0});
  EXPECT_EQ(plain.normalization.std, 1.0);
  std::filesystem::remove(path);
  EXPECT_THROW(read_dataset_csv("/nonexistent/file.csv"), IoError);
}
