#include "mpslab/feature_map.hpp"

#include <cmath>
#include <numbers>

namespace mpslab {

void FeatureMap::validate() const {
  if (dim < 2) throw InvalidArgument("feature map dimension must be >= 2");
  if (kind == FeatureKind::trigonometric && dim != 2) {
    throw InvalidArgument("trigonometric feature map has dimension 2");
  }
}

std::string to_string(FeatureKind kind) {
  return kind == FeatureKind::polynomial ? "polynomial" : "trigonometric";
}

FeatureKind feature_kind_from_string(const std::string& name) {
  if (name == "polynomial") return FeatureKind::polynomial;
  if (name == "trigonometric") return FeatureKind::trigonometric;
  throw InvalidArgument("unknown feature map kind '" + name + "'");
}

FeaturizedSample::FeaturizedSample(std::size_t sites, std::size_t dim)
    : sites_(sites), dim_(dim), values_(sites * dim, 0.0) {}

DenseTensor FeaturizedSample::materialize() const {
  DenseTensor out = DenseTensor::scalar(1.0);
  for (std::size_t j = 0; j < sites_; ++j) {
    auto loc = local(j);
    DenseTensor v({dim_}, std::vector<double>(loc.begin(), loc.end()));
    out = contract(out, v, {});
  }
  return out;
}

void apply_scalar(const FeatureMap& map, double x, std::span<double> out) {
  if (!std::isfinite(x)) throw DomainError("feature value is not finite");
  if (out.size() != map.dim) throw DimensionError("feature output buffer has wrong length");
  switch (map.kind) {
    case FeatureKind::polynomial: {
      double p = 1.0;
      for (std::size_t k = 0; k < map.dim; ++k) {
        out[k] = p;
        p *= x;
      }
      break;
    }
    case FeatureKind::trigonometric: {
      if (x < 0.0 || x > 1.0) throw DomainError("trigonometric feature map requires x in [0,1]");
      const double angle = std::numbers::pi * x / 2.0;
      out[0] = std::cos(angle);
      out[1] = std::sin(angle);
      break;
    }
  }
}

std::vector<double> apply_scalar(const FeatureMap& map, double x) {
  map.validate();
  std::vector<double> out(map.dim);
  apply_scalar(map, x, out);
  return out;
}

FeaturizedSample featurize(const FeatureMap& map, std::span<const double> x) {
  map.validate();
  if (x.empty()) throw InvalidArgument("cannot featurize an empty sample");
  FeaturizedSample s(x.size(), map.dim);
  for (std::size_t j = 0; j < x.size(); ++j) apply_scalar(map, x[j], s.local(j));
  return s;
}

}  // namespace mpslab
