#pragma once

#include <cstddef>

#include "mpslab/datagen.hpp"
#include "mpslab/feature_map.hpp"
#include "mpslab/mps.hpp"
#include "mpslab/tensor.hpp"

namespace mpslab {

/// Ridge normal equations in the f^N product-feature space:
///   a = λI + (1/T) Σ vec(Φᵢ) vec(Φᵢ)ᵀ,   b = (1/T) Σ yᵢ vec(Φᵢ)
/// with vec the row-major flattening over (s₁,…,s_N).
struct DesignSystem {
  Matrix a;
  Vector b;
  double lambda = 0.0;
  std::size_t samples = 0;
  std::size_t sites = 0;
  std::size_t dim = 0;
};

/// Rows are vec(Φ(xᵢ)); T × f^N.
Matrix feature_matrix(const Dataset& d, const FeatureMap& map, std::size_t max_columns = 10'000);

DesignSystem build_design_system(const Dataset& d, const FeatureMap& map, double lambda,
                                 std::size_t max_columns = 10'000);

/// LU solve of a·W = b, reshaped to (f,…,f).
DenseTensor solve_full_weight(const DesignSystem& sys);

/// ∂L/∂W = a·W − b: the loss gradient at a dense weight tensor.
Vector design_gradient(const DesignSystem& sys, const DenseTensor& w);

/// Data term (1/2T) Σ (W·Φᵢ − yᵢ)² of a dense weight tensor.
double dense_mse(const DenseTensor& w, const Dataset& d, const FeatureMap& map);

Compression inversion_and_compression(const Dataset& d, const FeatureMap& map, double lambda,
                                      std::size_t max_bond);

}  // namespace mpslab
