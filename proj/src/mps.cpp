#include "mpslab/mps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace mpslab {

namespace {

// f^k saturating at `cap`.
std::size_t capped_pow(std::size_t f, std::size_t k, std::size_t cap) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < k; ++i) {
    if (r >= cap / f + 1) return cap;
    r *= f;
  }
  return std::min(r, cap);
}

Shape with_bonds(const Shape& shape, std::size_t left, std::size_t right) {
  Shape out = shape;
  out.front() = left;
  out.back() = right;
  return out;
}

// Thin QR with R's diagonal made non-negative.
void thin_qr(const Matrix& m, Matrix& q, Matrix& r) {
  const Eigen::Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<Matrix> qr(m);
  q = qr.householderQ() * Matrix::Identity(m.rows(), k);
  r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (r(i, i) < 0.0) {
      r.row(i) *= -1.0;
      q.col(i) *= -1.0;
    }
  }
}

DenseTensor tensor_from(const Matrix& m, Shape shape) {
  DenseTensor t(std::move(shape));
  if (static_cast<std::size_t>(m.size()) != t.size()) throw DimensionError("matrix/tensor size mismatch");
  Eigen::Map<RowMajorMatrix>(t.data().data(), m.rows(), m.cols()) = m;
  return t;
}

void check_sample(const Mps& w, const FeaturizedSample& s) {
  if (s.sites() != w.size()) {
    throw DimensionError("sample has " + std::to_string(s.sites()) + " sites, MPS has " +
                         std::to_string(w.size()));
  }
  if (s.dim() != w.phys_dim()) throw DimensionError("feature dimension does not match MPS physical extent");
}

// v_out[b] += Σ_{a,s} v[a] φ[s] A[a,s,b] for an order-3 core.
void apply_site(const DenseTensor& core, std::span<const double> phi, const double* v, double* out) {
  const std::size_t l = core.extent(0), f = core.extent(1), r = core.extent(2);
  const double* a = core.data().data();
  for (std::size_t i = 0; i < l; ++i) {
    if (v[i] == 0.0) continue;
    for (std::size_t s = 0; s < f; ++s) {
      const double w = v[i] * phi[s];
      if (w == 0.0) continue;
      const double* row = a + (i * f + s) * r;
      for (std::size_t b = 0; b < r; ++b) out[b] += w * row[b];
    }
  }
}

}  // namespace

Gauge Gauge::mixed_at(std::size_t center, std::size_t sites) {
  if (sites == 0) return {GaugeKind::mixed, 0};
  if (center == 0) return {GaugeKind::right_canonical, 0};
  if (center + 1 == sites) return {GaugeKind::left_canonical, center};
  return {GaugeKind::mixed, center};
}

bool Gauge::is_mixed_at(std::size_t site) const { return kind != GaugeKind::none && center == site; }

Mps::Mps(std::vector<DenseTensor> cores, std::optional<LabelSite> label)
    : cores_(std::move(cores)), label_(label) {
  if (cores_.empty()) throw InvalidArgument("MPS needs at least one core");
  if (label_) {
    if (label_->site >= cores_.size()) throw InvalidArgument("label site out of range");
    if (label_->classes < 1) throw InvalidArgument("label dimension must be >= 1");
  }
  const std::size_t f = cores_.front().order() >= 2 ? cores_.front().extent(1) : 0;
  for (std::size_t j = 0; j < cores_.size(); ++j) {
    const auto& c = cores_[j];
    const bool labeled = label_ && label_->site == j;
    const std::size_t want = labeled ? 4 : 3;
    if (c.order() != want) {
      throw DimensionError("core " + std::to_string(j) + " has order " + std::to_string(c.order()) +
                           ", expected " + std::to_string(want));
    }
    if (c.extent(1) != f) throw DimensionError("physical extents differ between cores");
    if (labeled && c.extent(2) != label_->classes) throw DimensionError("label core extent does not match class count");
    if (j > 0 && c.extent(0) != right_bond(j - 1)) {
      throw DimensionError("bond extents do not match between cores " + std::to_string(j - 1) + " and " +
                           std::to_string(j));
    }
  }
  if (left_bond(0) != 1 || right_bond(cores_.size() - 1) != 1) {
    throw DimensionError("boundary bond extents must be 1");
  }
}

std::size_t Mps::open_dim(std::size_t j) const {
  return (label_ && label_->site == j) ? phys_dim() * label_->classes : phys_dim();
}

BondProfile Mps::bond_profile() const {
  BondProfile p;
  for (std::size_t j = 0; j + 1 < cores_.size(); ++j) p.dims.push_back(right_bond(j));
  p.max = p.dims.empty() ? 1 : *std::max_element(p.dims.begin(), p.dims.end());
  return p;
}

std::size_t Mps::parameter_count() const {
  std::size_t n = 0;
  for (const auto& c : cores_) n += c.size();
  return n;
}

void Mps::replace_core(std::size_t j, DenseTensor core) {
  if (core.shape() != cores_.at(j).shape()) throw DimensionError("replacement core must keep its shape");
  cores_[j] = std::move(core);
  gauge_ = {};
}

void Mps::replace_pair(std::size_t j, DenseTensor left, DenseTensor right) {
  if (j + 1 >= cores_.size()) throw InvalidArgument("replace_pair index out of range");
  const Shape& ol = cores_[j].shape();
  const Shape& orr = cores_[j + 1].shape();
  if (left.order() != ol.size() || right.order() != orr.size()) throw DimensionError("replace_pair changes core order");
  if (!std::equal(ol.begin(), ol.end() - 1, left.shape().begin()) ||
      !std::equal(orr.begin() + 1, orr.end(), right.shape().begin() + 1)) {
    throw DimensionError("replace_pair may only change the shared bond");
  }
  if (left.shape().back() != right.extent(0)) throw DimensionError("replace_pair bond extents differ");
  cores_[j] = std::move(left);
  cores_[j + 1] = std::move(right);
  gauge_ = {};
}

double inner(const Mps& a, const Mps& b) {
  if (a.size() != b.size() || a.phys_dim() != b.phys_dim() || a.label_site() != b.label_site()) {
    throw DimensionError("inner product needs MPS with identical site layout");
  }
  Matrix env = Matrix::Ones(1, 1);
  for (std::size_t j = 0; j < a.size(); ++j) {
    const auto open = static_cast<Eigen::Index>(a.open_dim(j));
    const Matrix am = a.core(j).as_matrix(1);
    const Matrix tmp = env * b.core(j).as_matrix(1);
    const auto ra = static_cast<Eigen::Index>(a.right_bond(j));
    const auto rb = static_cast<Eigen::Index>(b.right_bond(j));
    Matrix next = Matrix::Zero(ra, rb);
    for (Eigen::Index o = 0; o < open; ++o) {
      next.noalias() += am.middleCols(o * ra, ra).transpose() * tmp.middleCols(o * rb, rb);
    }
    env = std::move(next);
  }
  return env(0, 0);
}

double Mps::norm_squared() const { return inner(*this, *this); }

double evaluate(const Mps& w, const FeaturizedSample& s) {
  if (w.is_labeled()) throw InvalidArgument("evaluate called on a labeled MPS; use evaluate_labeled");
  check_sample(w, s);
  std::vector<double> v(1, 1.0), next;
  for (std::size_t j = 0; j < w.size(); ++j) {
    next.assign(w.right_bond(j), 0.0);
    apply_site(w.core(j), s.local(j), v.data(), next.data());
    v.swap(next);
  }
  return v[0];
}

std::vector<double> evaluate_labeled(const Mps& w, const FeaturizedSample& s) {
  if (!w.is_labeled()) throw InvalidArgument("evaluate_labeled needs an MPS with a label site");
  check_sample(w, s);
  const std::size_t classes = w.classes();
  const std::size_t label_site = w.label_site()->site;
  // rows × bond; rows is 1 before the label site and C afterwards.
  std::size_t rows = 1;
  std::vector<double> v(1, 1.0), next;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const auto& core = w.core(j);
    const std::size_t l = w.left_bond(j), r = w.right_bond(j);
    auto phi = s.local(j);
    if (j == label_site) {
      const std::size_t f = core.extent(1);
      next.assign(classes * r, 0.0);
      const double* a = core.data().data();
      for (std::size_t i = 0; i < l; ++i) {
        if (v[i] == 0.0) continue;
        for (std::size_t p = 0; p < f; ++p) {
          const double wgt = v[i] * phi[p];
          if (wgt == 0.0) continue;
          for (std::size_t c = 0; c < classes; ++c) {
            const double* row = a + ((i * f + p) * classes + c) * r;
            double* dst = next.data() + c * r;
            for (std::size_t b = 0; b < r; ++b) dst[b] += wgt * row[b];
          }
        }
      }
      rows = classes;
    } else {
      next.assign(rows * r, 0.0);
      for (std::size_t c = 0; c < rows; ++c) apply_site(core, phi, v.data() + c * l, next.data() + c * r);
    }
    v.swap(next);
  }
  return v;
}

DenseTensor to_full_tensor(const Mps& w, std::size_t max_entries) {
  std::size_t total = w.classes();
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (total > max_entries / w.phys_dim()) throw CapacityError("full tensor exceeds the size guard");
    total *= w.phys_dim();
  }
  if (total > max_entries) throw CapacityError("full tensor exceeds the size guard");

  DenseTensor acc = w.core(0);
  for (std::size_t j = 1; j < w.size(); ++j) acc = contract(acc, w.core(j), {{acc.order() - 1, 0}});
  // Drop the two boundary extents of 1.
  Shape shape(acc.shape().begin() + 1, acc.shape().end() - 1);
  return acc.reshaped(shape);
}

Compression compress(const DenseTensor& t, std::size_t max_bond, double cutoff) {
  if (t.order() == 0) throw InvalidArgument("compress needs a tensor with at least one axis");
  if (max_bond == 0) throw InvalidArgument("max_bond must be >= 1");
  const std::size_t n = t.order(), f = t.extent(0);
  for (auto e : t.shape()) {
    if (e != f) throw DimensionError("compress expects all axes of equal extent");
  }

  std::vector<DenseTensor> cores;
  std::vector<double> per_bond;
  double discarded = 0.0;
  Matrix rem = Eigen::Map<const RowMajorMatrix>(t.data().data(), 1, static_cast<Eigen::Index>(t.size()));
  std::size_t left = 1;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    // Row-major regrouping of (left, f, rest) as (left·f) x rest.
    const Eigen::Index rows = static_cast<Eigen::Index>(left * f);
    const Eigen::Index cols = rem.size() / rows;
    RowMajorMatrix flat = rem;  // row-major copy of (left x f·rest)
    Eigen::Map<const RowMajorMatrix> regrouped(flat.data(), rows, cols);
    SvdResult svd = svd_truncate(regrouped, max_bond, cutoff);
    const std::size_t k = svd.rank();
    cores.push_back(tensor_from(svd.left, {left, f, k}));
    per_bond.push_back(svd.discarded_weight);
    discarded += svd.discarded_weight;
    rem = svd.singular_values.asDiagonal() * svd.right;
    left = k;
  }
  RowMajorMatrix last = rem;
  cores.push_back(tensor_from(last, {left, f, 1}));

  Mps mps(std::move(cores));
  mps.set_gauge(Gauge::mixed_at(n - 1, n));
  return {std::move(mps), discarded, std::move(per_bond)};
}

Mps canonicalize(const Mps& w, std::size_t center) {
  const std::size_t n = w.size();
  if (center >= n) throw InvalidArgument("canonical center out of range");
  std::vector<DenseTensor> cores = w.cores();

  Matrix q, r;
  for (std::size_t j = 0; j < center; ++j) {
    const Matrix m = cores[j].as_matrix(cores[j].order() - 1);
    thin_qr(m, q, r);
    const auto k = static_cast<std::size_t>(q.cols());
    cores[j] = tensor_from(q, with_bonds(cores[j].shape(), cores[j].extent(0), k));
    const Matrix next = r * cores[j + 1].as_matrix(1);
    cores[j + 1] = tensor_from(next, with_bonds(cores[j + 1].shape(), k, cores[j + 1].shape().back()));
  }
  for (std::size_t j = n - 1; j > center; --j) {
    const Matrix m = cores[j].as_matrix(1);
    thin_qr(m.transpose(), q, r);
    const auto k = static_cast<std::size_t>(q.cols());
    const Matrix qt = q.transpose();
    cores[j] = tensor_from(qt, with_bonds(cores[j].shape(), k, cores[j].shape().back()));
    const Matrix prev = cores[j - 1].as_matrix(cores[j - 1].order() - 1) * r.transpose();
    cores[j - 1] = tensor_from(prev, with_bonds(cores[j - 1].shape(), cores[j - 1].extent(0), k));
  }

  Mps out(std::move(cores), w.label_site());
  out.set_gauge(Gauge::mixed_at(center, n));
  return out;
}

Compression truncate(const Mps& w, std::size_t max_bond, double cutoff) {
  if (max_bond == 0) throw InvalidArgument("max_bond must be >= 1");
  const std::size_t n = w.size();
  Mps left = canonicalize(w, n - 1);
  std::vector<DenseTensor> cores = left.cores();
  std::vector<double> per_bond(n > 0 ? n - 1 : 0, 0.0);
  double discarded = 0.0;
  for (std::size_t j = n - 1; j > 0; --j) {
    const Matrix m = cores[j].as_matrix(1);
    SvdResult svd = svd_truncate(m, max_bond, cutoff);
    const std::size_t k = svd.rank();
    cores[j] = tensor_from(svd.right, with_bonds(cores[j].shape(), k, cores[j].shape().back()));
    const Matrix us = svd.left * svd.singular_values.asDiagonal();
    const Matrix prev = cores[j - 1].as_matrix(cores[j - 1].order() - 1) * us;
    cores[j - 1] = tensor_from(prev, with_bonds(cores[j - 1].shape(), cores[j - 1].extent(0), k));
    per_bond[j - 1] = svd.discarded_weight;
    discarded += svd.discarded_weight;
  }
  Mps out(std::move(cores), w.label_site());
  out.set_gauge(Gauge::mixed_at(0, n));
  return {std::move(out), discarded, std::move(per_bond)};
}

std::size_t max_bond_extent(std::size_t sites, std::size_t f, std::size_t bond,
                            std::optional<LabelSite> label) {
  constexpr std::size_t cap = std::numeric_limits<std::size_t>::max() / 4;
  std::size_t left = capped_pow(f, bond + 1, cap);
  std::size_t right = capped_pow(f, sites - bond - 1, cap);
  if (label) {
    if (label->site <= bond) {
      left = left >= cap / label->classes ? cap : left * label->classes;
    } else {
      right = right >= cap / label->classes ? cap : right * label->classes;
    }
  }
  return std::min(left, right);
}

namespace {

Mps random_cores(std::size_t sites, std::size_t f, std::size_t chi, std::optional<LabelSite> label,
                 double scale, std::uint64_t seed) {
  if (sites == 0) throw InvalidArgument("random_init needs at least one site");
  if (chi == 0) throw InvalidArgument("random_init needs chi >= 1");
  if (f == 0) throw InvalidArgument("random_init needs f >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<DenseTensor> cores;
  std::size_t left = 1;
  for (std::size_t j = 0; j < sites; ++j) {
    const std::size_t right = (j + 1 == sites) ? 1 : std::min(chi, max_bond_extent(sites, f, j, label));
    Shape shape = (label && label->site == j) ? Shape{left, f, label->classes, right} : Shape{left, f, right};
    DenseTensor c(shape);
    for (auto& v : c.data()) v = scale * normal(rng);
    cores.push_back(std::move(c));
    left = right;
  }
  return Mps(std::move(cores), label);
}

}  // namespace

Mps random_init(std::size_t sites, std::size_t f, std::size_t chi, double scale, std::uint64_t seed) {
  return random_cores(sites, f, chi, std::nullopt, scale, seed);
}

Mps random_init_labeled(std::size_t sites, std::size_t f, std::size_t chi, LabelSite label, double scale,
                        std::uint64_t seed) {
  if (label.site >= sites) throw InvalidArgument("label site out of range");
  return random_cores(sites, f, chi, label, scale, seed);
}

bool is_left_orthonormal(const DenseTensor& core, double tol) {
  const Matrix m = core.as_matrix(core.order() - 1);
  const Matrix g = m.transpose() * m;
  return (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() <= tol;
}

bool is_right_orthonormal(const DenseTensor& core, double tol) {
  const Matrix m = core.as_matrix(1);
  const Matrix g = m * m.transpose();
  return (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace mpslab
