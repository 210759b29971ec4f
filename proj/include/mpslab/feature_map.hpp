#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mpslab/tensor.hpp"

namespace mpslab {

enum class FeatureKind { polynomial, trigonometric };

/// Local embedding of a scalar feature into an f-vector.
///   polynomial:    (1, x, x², …, x^{f−1})
///   trigonometric: (cos(πx/2), sin(πx/2)), f = 2, x ∈ [0, 1]
struct FeatureMap {
  FeatureKind kind = FeatureKind::polynomial;
  std::size_t dim = 3;

  static FeatureMap polynomial(std::size_t f) { return {FeatureKind::polynomial, f}; }
  static FeatureMap trigonometric() { return {FeatureKind::trigonometric, 2}; }

  void validate() const;
};

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& name);

/// Product-state representation of Φ(x): N local vectors of length f, stored
/// contiguously. The f^N tensor is never formed.
class FeaturizedSample {
 public:
  FeaturizedSample() = default;
  FeaturizedSample(std::size_t sites, std::size_t dim);

  std::size_t sites() const { return sites_; }
  std::size_t dim() const { return dim_; }

  std::span<const double> local(std::size_t site) const {
    return {values_.data() + site * dim_, dim_};
  }
  std::span<double> local(std::size_t site) { return {values_.data() + site * dim_, dim_}; }

  /// Outer product of the locals, shape (f,…,f). Test oracle only.
  DenseTensor materialize() const;

 private:
  std::size_t sites_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

void apply_scalar(const FeatureMap& map, double x, std::span<double> out);
std::vector<double> apply_scalar(const FeatureMap& map, double x);

FeaturizedSample featurize(const FeatureMap& map, std::span<const double> x);

}  // namespace mpslab
