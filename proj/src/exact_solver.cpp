#include "mpslab/exact_solver.hpp"

namespace mpslab {

Matrix feature_matrix(const Dataset& d, const FeatureMap& map, std::size_t max_columns) {
  map.validate();
  std::size_t cols = 1;
  for (std::size_t j = 0; j < d.sites; ++j) {
    if (cols > max_columns / map.dim) throw CapacityError("f^N exceeds the design-system size guard");
    cols *= map.dim;
  }
  const auto t = static_cast<Eigen::Index>(d.size());
  Matrix out(t, static_cast<Eigen::Index>(cols));
  std::vector<double> phi(cols), next(cols), local(map.dim);
  for (Eigen::Index i = 0; i < t; ++i) {
    auto x = d.row(static_cast<std::size_t>(i));
    std::size_t len = 1;
    phi[0] = 1.0;
    for (std::size_t j = 0; j < d.sites; ++j) {
      apply_scalar(map, x[j], local);
      for (std::size_t p = 0; p < len; ++p)
        for (std::size_t s = 0; s < map.dim; ++s) next[p * map.dim + s] = phi[p] * local[s];
      len *= map.dim;
      std::copy_n(next.begin(), len, phi.begin());
    }
    for (std::size_t c = 0; c < cols; ++c) out(i, static_cast<Eigen::Index>(c)) = phi[c];
  }
  return out;
}

DesignSystem build_design_system(const Dataset& d, const FeatureMap& map, double lambda,
                                 std::size_t max_columns) {
  if (!(lambda > 0.0)) throw InvalidArgument("ridge coefficient must be positive");
  if (d.size() == 0) throw InvalidArgument("design system needs at least one sample");
  const Matrix phi = feature_matrix(d, map, max_columns);
  const double inv_t = 1.0 / static_cast<double>(d.size());
  const Eigen::Map<const Vector> y(d.labels.data(), static_cast<Eigen::Index>(d.labels.size()));

  DesignSystem sys;
  sys.lambda = lambda;
  sys.samples = d.size();
  sys.sites = d.sites;
  sys.dim = map.dim;
  sys.a = Matrix::Identity(phi.cols(), phi.cols()) * lambda;
  sys.a.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose(), inv_t);
  sys.a.triangularView<Eigen::StrictlyUpper>() = sys.a.transpose();
  sys.b = inv_t * (phi.transpose() * y);
  return sys;
}

DenseTensor solve_full_weight(const DesignSystem& sys) {
  const Vector w = solve_linear(sys.a, sys.b);
  Shape shape(sys.sites, sys.dim);
  return DenseTensor(shape, std::vector<double>(w.data(), w.data() + w.size()));
}

Vector design_gradient(const DesignSystem& sys, const DenseTensor& w) {
  const Eigen::Map<const Vector> wv(w.data().data(), static_cast<Eigen::Index>(w.size()));
  if (wv.size() != sys.b.size()) throw DimensionError("weight tensor does not match design system");
  return sys.a * wv - sys.b;
}

double dense_mse(const DenseTensor& w, const Dataset& d, const FeatureMap& map) {
  const Matrix phi = feature_matrix(d, map);
  const Eigen::Map<const Vector> wv(w.data().data(), static_cast<Eigen::Index>(w.size()));
  if (wv.size() != phi.cols()) throw DimensionError("weight tensor does not match features");
  const Eigen::Map<const Vector> y(d.labels.data(), static_cast<Eigen::Index>(d.labels.size()));
  return 0.5 * (phi * wv - y).squaredNorm() / static_cast<double>(d.size());
}

Compression inversion_and_compression(const Dataset& d, const FeatureMap& map, double lambda,
                                      std::size_t max_bond) {
  return compress(solve_full_weight(build_design_system(d, map, lambda)), max_bond);
}

}  // namespace mpslab
