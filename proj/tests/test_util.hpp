#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mpslab/feature_map.hpp"
#include "mpslab/tensor.hpp"

namespace mpslab::testing {

inline DenseTensor random_tensor(Shape shape, std::uint64_t seed) {
  DenseTensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

inline FeaturizedSample random_sample(std::size_t sites, std::size_t f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> x(sites);
  for (auto& v : x) v = normal(rng);
  return featurize(FeatureMap::polynomial(f), x);
}

// Full-tensor contraction with a materialized sample.
inline double full_contract(const DenseTensor& w, const DenseTensor& phi) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * phi[i];
  return s;
}

}  // namespace mpslab::testing
