#include "mpslab/dmrg.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

namespace mpslab {

namespace {

constexpr double kMinProbability = 1e-300;

// Sum over the physical axis: B[a, o, b] = Σ_s φ[s] A[a, s, o, b], where o runs
// over the label axis (extent 1 for ordinary cores).
void contract_physical(const DenseTensor& core, std::span<const double> phi, std::size_t classes,
                       std::vector<double>& out) {
  const std::size_t l = core.extent(0), f = core.extent(1), r = core.shape().back();
  const std::size_t tail = classes * r;
  out.assign(l * tail, 0.0);
  const double* a = core.data().data();
  for (std::size_t i = 0; i < l; ++i) {
    double* dst = out.data() + i * tail;
    for (std::size_t s = 0; s < f; ++s) {
      const double p = phi[s];
      if (p == 0.0) continue;
      const double* src = a + (i * f + s) * tail;
      for (std::size_t k = 0; k < tail; ++k) dst[k] += p * src[k];
    }
  }
}

std::size_t label_classes_at(const Mps& w, std::size_t site) {
  return (w.label_site() && w.label_site()->site == site) ? w.label_site()->classes : 1;
}

void check_targets(const Mps& w, const SampleSet& data, LossKind kind) {
  for (const auto& s : data.inputs) {
    if (s.sites() != w.size() || s.dim() != w.phys_dim()) throw DimensionError("sample shape does not match the MPS");
  }
  if (kind == LossKind::mse) {
    if (w.is_labeled()) throw InvalidArgument("MSE loss needs an unlabeled MPS");
    if (data.targets.size() != data.size()) throw DimensionError("regression targets missing");
  } else {
    if (!w.is_labeled()) throw InvalidArgument("cross-entropy loss needs a labeled MPS");
    if (data.classes.size() != data.size()) throw DimensionError("class labels missing");
    for (int c : data.classes) {
      if (c < 0 || static_cast<std::size_t>(c) >= w.classes()) throw DimensionError("class label out of range");
    }
  }
}

// Loss on the model outputs (T × C row-major) and its 1-D restriction along a
// direction in output space.
class OutputObjective {
 public:
  OutputObjective(const SampleSet& data, LossKind kind, std::size_t outputs)
      : data_(data), kind_(kind), outputs_(outputs), inv_t_(1.0 / static_cast<double>(data.size())) {}

  double value(const std::vector<double>& out, std::size_t* clamped = nullptr) const {
    double total = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) total += sample_value(out.data() + i * outputs_, i, clamped);
    return total * inv_t_;
  }

  // ∂(data loss)/∂out.
  void gradient(const std::vector<double>& out, std::vector<double>& g) const {
    g.assign(out.size(), 0.0);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const double* v = out.data() + i * outputs_;
      double* gi = g.data() + i * outputs_;
      if (kind_ == LossKind::mse) {
        gi[0] = (v[0] - data_.targets[i]) * inv_t_;
        continue;
      }
      const auto t = static_cast<std::size_t>(data_.classes[i]);
      double norm2 = 0.0;
      for (std::size_t c = 0; c < outputs_; ++c) norm2 += v[c] * v[c];
      if (norm2 == 0.0 || v[t] == 0.0) continue;  // clamped sample: no usable gradient
      for (std::size_t c = 0; c < outputs_; ++c) gi[c] = 2.0 * v[c] / norm2 * inv_t_;
      gi[t] -= 2.0 / v[t] * inv_t_;
    }
  }

  // Value, first and second derivative of α ↦ loss(out + α·dir).
  void line_terms(const std::vector<double>& out, const std::vector<double>& dir, double alpha, double& value,
                  double& d1, double& d2) const {
    value = d1 = d2 = 0.0;
    std::vector<double> v(outputs_);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const double* o = out.data() + i * outputs_;
      const double* q = dir.data() + i * outputs_;
      for (std::size_t c = 0; c < outputs_; ++c) v[c] = o[c] + alpha * q[c];
      if (kind_ == LossKind::mse) {
        const double r = v[0] - data_.targets[i];
        value += 0.5 * r * r;
        d1 += r * q[0];
        d2 += q[0] * q[0];
        continue;
      }
      value += sample_value(v.data(), i, nullptr);
      const auto t = static_cast<std::size_t>(data_.classes[i]);
      double s = 0.0, vq = 0.0, qq = 0.0;
      for (std::size_t c = 0; c < outputs_; ++c) {
        s += v[c] * v[c];
        vq += v[c] * q[c];
        qq += q[c] * q[c];
      }
      if (s == 0.0 || v[t] == 0.0) continue;
      d1 += -2.0 * q[t] / v[t] + 2.0 * vq / s;
      d2 += 2.0 * q[t] * q[t] / (v[t] * v[t]) + 2.0 * qq / s - 4.0 * vq * vq / (s * s);
    }
    value *= inv_t_;
    d1 *= inv_t_;
    d2 *= inv_t_;
  }

 private:
  double sample_value(const double* v, std::size_t i, std::size_t* clamped) const {
    if (kind_ == LossKind::mse) {
      const double r = v[0] - data_.targets[i];
      return 0.5 * r * r;
    }
    bool hit = false;
    const double l = class_log_loss({v, outputs_}, data_.classes[i], &hit);
    if (hit && clamped) ++*clamped;
    return l;
  }

  const SampleSet& data_;
  LossKind kind_;
  std::size_t outputs_;
  double inv_t_;
};

// The model restricted to one core: out = F(core), linear in the core.
class LocalProblem {
 public:
  LocalProblem(const Mps& w, std::size_t site, const SampleSet& data, const EnvironmentCache& cache)
      : site_(site), shape_(w.core(site).shape()), samples_(data.size()) {
    cache.check_current(w, site);
    l_ = w.left_bond(site);
    f_ = w.phys_dim();
    r_ = w.right_bond(site);
    core_classes_ = label_classes_at(w, site);
    left_rows_ = cache.left_rows(site);
    right_rows_ = cache.right_rows(site);
    outputs_ = core_classes_ * left_rows_ * right_rows_;
    const auto t = static_cast<Eigen::Index>(samples_);

    if (left_rows_ == 1) {
      // P rows: L ⊗ φ.
      left_mode_ = true;
      p_.resize(t, static_cast<Eigen::Index>(l_ * f_));
      for (std::size_t i = 0; i < samples_; ++i) {
        auto lv = cache.left(site, i);
        auto phi = data.inputs[i].local(site);
        for (std::size_t a = 0; a < l_; ++a)
          for (std::size_t s = 0; s < f_; ++s) p_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a * f_ + s)) = lv[a] * phi[s];
      }
    } else {
      // Q rows: φ ⊗ R (the right block is a plain vector here).
      left_mode_ = false;
      p_.resize(t, static_cast<Eigen::Index>(f_ * r_));
      for (std::size_t i = 0; i < samples_; ++i) {
        auto rv = cache.right(site, i);
        auto phi = data.inputs[i].local(site);
        for (std::size_t s = 0; s < f_; ++s)
          for (std::size_t b = 0; b < r_; ++b) p_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s * r_ + b)) = phi[s] * rv[b];
      }
    }
    left_env_.resize(samples_);
    right_env_.resize(samples_);
    for (std::size_t i = 0; i < samples_; ++i) {
      left_env_[i] = cache.left(site, i);
      right_env_[i] = cache.right(site, i);
    }
  }

  std::size_t outputs() const { return outputs_; }

  void forward(const DenseTensor& core, std::vector<double>& out) const {
    out.assign(samples_ * outputs_, 0.0);
    const auto t = static_cast<Eigen::Index>(samples_);
    if (left_mode_) {
      const std::size_t tail = core_classes_ * r_;
      Eigen::Map<const RowMajorMatrix> a(core.data().data(), static_cast<Eigen::Index>(l_ * f_), static_cast<Eigen::Index>(tail));
      const RowMajorMatrix m = p_ * a;  // T × (C_core · r)
      for (std::size_t i = 0; i < samples_; ++i) {
        const double* mi = m.data() + static_cast<Eigen::Index>(i) * m.cols();
        const auto& rv = right_env_[i];
        double* oi = out.data() + i * outputs_;
        // out[o, cR] = Σ_b M[o, b] R[b, cR]
        for (std::size_t o = 0; o < core_classes_; ++o)
          for (std::size_t b = 0; b < r_; ++b) {
            const double x = mi[o * r_ + b];
            for (std::size_t c = 0; c < right_rows_; ++c) oi[o * right_rows_ + c] += x * rv[b * right_rows_ + c];
          }
      }
    } else {
      Eigen::Map<const RowMajorMatrix> a(core.data().data(), static_cast<Eigen::Index>(l_), static_cast<Eigen::Index>(f_ * r_));
      const RowMajorMatrix u = p_ * a.transpose();  // T × l
      for (std::size_t i = 0; i < samples_; ++i) {
        const double* ui = u.data() + static_cast<Eigen::Index>(i) * u.cols();
        const auto& lv = left_env_[i];
        double* oi = out.data() + i * outputs_;
        for (std::size_t c = 0; c < left_rows_; ++c) {
          double acc = 0.0;
          for (std::size_t a2 = 0; a2 < l_; ++a2) acc += lv[c * l_ + a2] * ui[a2];
          oi[c] = acc;
        }
      }
    }
    (void)t;
  }

  // grad = Σ_i Σ_o g[i,o] ∂out[i,o]/∂core
  DenseTensor adjoint(const std::vector<double>& g) const {
    DenseTensor grad(shape_);
    const auto t = static_cast<Eigen::Index>(samples_);
    if (left_mode_) {
      const std::size_t tail = core_classes_ * r_;
      RowMajorMatrix y = RowMajorMatrix::Zero(t, static_cast<Eigen::Index>(tail));
      for (std::size_t i = 0; i < samples_; ++i) {
        const double* gi = g.data() + i * outputs_;
        const auto& rv = right_env_[i];
        double* yi = y.data() + static_cast<Eigen::Index>(i) * y.cols();
        for (std::size_t o = 0; o < core_classes_; ++o)
          for (std::size_t b = 0; b < r_; ++b) {
            double acc = 0.0;
            for (std::size_t c = 0; c < right_rows_; ++c) acc += rv[b * right_rows_ + c] * gi[o * right_rows_ + c];
            yi[o * r_ + b] = acc;
          }
      }
      Eigen::Map<RowMajorMatrix>(grad.data().data(), static_cast<Eigen::Index>(l_ * f_), static_cast<Eigen::Index>(tail)).noalias() =
          p_.transpose() * y;
    } else {
      RowMajorMatrix z = RowMajorMatrix::Zero(t, static_cast<Eigen::Index>(l_));
      for (std::size_t i = 0; i < samples_; ++i) {
        const double* gi = g.data() + i * outputs_;
        const auto& lv = left_env_[i];
        double* zi = z.data() + static_cast<Eigen::Index>(i) * z.cols();
        for (std::size_t c = 0; c < left_rows_; ++c)
          for (std::size_t a = 0; a < l_; ++a) zi[a] += gi[c] * lv[c * l_ + a];
      }
      Eigen::Map<RowMajorMatrix>(grad.data().data(), static_cast<Eigen::Index>(l_), static_cast<Eigen::Index>(f_ * r_)).noalias() =
          z.transpose() * p_;
    }
    return grad;
  }

 private:
  std::size_t site_;
  Shape shape_;
  std::size_t samples_;
  std::size_t l_ = 1, f_ = 1, r_ = 1;
  std::size_t core_classes_ = 1, left_rows_ = 1, right_rows_ = 1, outputs_ = 1;
  bool left_mode_ = true;
  RowMajorMatrix p_;
  std::vector<std::span<const double>> left_env_, right_env_;
};

double dot(const DenseTensor& a, const DenseTensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const DenseTensor& x, DenseTensor& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

double max_abs(const DenseTensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

std::string to_string(LossKind kind) { return kind == LossKind::mse ? "mse" : "cross_entropy"; }

std::string to_string(CheckpointPolicy policy) {
  return policy == CheckpointPolicy::best_validation ? "best_validation" : "last";
}

void TrainConfig::validate() const {
  if (sweeps < 1) throw InvalidArgument("sweeps must be >= 1");
  if (cg_steps < 1) throw InvalidArgument("cg_steps must be >= 1");
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw InvalidArgument("Armijo constant must lie in (0,1)");
}

SampleSet make_regression_set(const Dataset& d, const FeatureMap& map) {
  SampleSet s;
  s.inputs.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) s.inputs.push_back(featurize(map, d.row(i)));
  s.targets = d.labels;
  return s;
}

double class_log_loss(std::span<const double> v, int true_class, bool* clamped) {
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  const double vt = v[static_cast<std::size_t>(true_class)];
  double p = norm2 > 0.0 ? vt * vt / norm2 : 0.0;
  if (!(p >= kMinProbability)) {
    p = kMinProbability;
    if (clamped) *clamped = true;
  }
  return -std::log(p);
}

double data_loss(const Mps& w, const SampleSet& data, LossKind kind) {
  check_targets(w, data, kind);
  if (data.empty()) return nan();
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (kind == LossKind::mse) {
      const double r = evaluate(w, data.inputs[i]) - data.targets[i];
      total += 0.5 * r * r;
    } else {
      total += class_log_loss(evaluate_labeled(w, data.inputs[i]), data.classes[i]);
    }
  }
  return total / static_cast<double>(data.size());
}

double loss(const Mps& w, const SampleSet& data, double lambda, LossKind kind) {
  const double reg = lambda == 0.0 ? 0.0 : 0.5 * lambda * w.norm_squared();
  return data_loss(w, data, kind) + reg;
}

// ---------------------------------------------------------------------------
// EnvironmentCache

EnvironmentCache::EnvironmentCache(const Mps& w, const SampleSet& data, std::size_t center)
    : center_(center), samples_(data.size()), left_(w.size()), right_(w.size()) {
  const std::size_t n = w.size();
  if (center >= n) throw InvalidArgument("cache center out of range");
  for (const auto& s : data.inputs) {
    if (s.sites() != n || s.dim() != w.phys_dim()) throw DimensionError("sample shape does not match the MPS");
  }
  left_[0] = Block{1, 1, std::vector<double>(samples_, 1.0), true};
  right_[n - 1] = Block{1, 1, std::vector<double>(samples_, 1.0), true};
  for (std::size_t j = 0; j < center; ++j) build_left(w, data, j + 1);
  for (std::size_t j = n - 1; j > center; --j) build_right(w, data, j - 1);
}

std::span<const double> EnvironmentCache::left(std::size_t site, std::size_t sample) const {
  const Block& b = left_.at(site);
  const std::size_t width = b.rows * b.bond;
  return {b.values.data() + sample * width, width};
}

std::span<const double> EnvironmentCache::right(std::size_t site, std::size_t sample) const {
  const Block& b = right_.at(site);
  const std::size_t width = b.rows * b.bond;
  return {b.values.data() + sample * width, width};
}

void EnvironmentCache::build_left(const Mps& w, const SampleSet& data, std::size_t site) {
  // Contract block `site−1` with core `site−1`.
  const std::size_t j = site - 1;
  const Block& in = left_[j];
  if (!in.valid) throw InternalError("left environment is stale");
  const DenseTensor& core = w.core(j);
  const std::size_t classes = label_classes_at(w, j);
  const std::size_t l = w.left_bond(j), r = w.right_bond(j);
  if (in.bond != l) throw InternalError("left environment bond does not match core");

  Block out;
  out.rows = classes > 1 ? classes : in.rows;
  out.bond = r;
  out.values.assign(samples_ * out.rows * r, 0.0);
  std::vector<double> b;
  for (std::size_t i = 0; i < samples_; ++i) {
    contract_physical(core, data.inputs[i].local(j), classes, b);  // l × classes × r
    const double* lv = in.values.data() + i * in.rows * l;
    double* dst = out.values.data() + i * out.rows * r;
    if (classes > 1) {
      for (std::size_t a = 0; a < l; ++a) {
        const double x = lv[a];
        if (x == 0.0) continue;
        const double* src = b.data() + a * classes * r;
        for (std::size_t k = 0; k < classes * r; ++k) dst[k] += x * src[k];
      }
    } else {
      for (std::size_t c = 0; c < in.rows; ++c)
        for (std::size_t a = 0; a < l; ++a) {
          const double x = lv[c * l + a];
          if (x == 0.0) continue;
          const double* src = b.data() + a * r;
          for (std::size_t k = 0; k < r; ++k) dst[c * r + k] += x * src[k];
        }
    }
  }
  out.valid = true;
  left_[site] = std::move(out);
}

void EnvironmentCache::build_right(const Mps& w, const SampleSet& data, std::size_t site) {
  // Contract core `site+1` with block `site+1`.
  const std::size_t j = site + 1;
  const Block& in = right_[j];
  if (!in.valid) throw InternalError("right environment is stale");
  const DenseTensor& core = w.core(j);
  const std::size_t classes = label_classes_at(w, j);
  const std::size_t l = w.left_bond(j), r = w.right_bond(j);
  if (in.bond != r) throw InternalError("right environment bond does not match core");

  Block out;
  out.rows = classes > 1 ? classes : in.rows;
  out.bond = l;
  out.values.assign(samples_ * l * out.rows, 0.0);
  std::vector<double> b;
  for (std::size_t i = 0; i < samples_; ++i) {
    contract_physical(core, data.inputs[i].local(j), classes, b);  // l × classes × r
    const double* rv = in.values.data() + i * r * in.rows;
    double* dst = out.values.data() + i * l * out.rows;
    for (std::size_t a = 0; a < l; ++a) {
      if (classes > 1) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double* src = b.data() + (a * classes + c) * r;
          double acc = 0.0;
          for (std::size_t k = 0; k < r; ++k) acc += src[k] * rv[k];
          dst[a * classes + c] = acc;
        }
      } else {
        const double* src = b.data() + a * r;
        for (std::size_t k = 0; k < r; ++k) {
          const double x = src[k];
          if (x == 0.0) continue;
          for (std::size_t c = 0; c < in.rows; ++c) dst[a * in.rows + c] += x * rv[k * in.rows + c];
        }
      }
    }
  }
  out.valid = true;
  right_[site] = std::move(out);
}

void EnvironmentCache::move_right(const Mps& w, const SampleSet& data) {
  if (center_ + 1 >= left_.size()) throw InvalidArgument("cannot move center past the last site");
  build_left(w, data, center_ + 1);
  right_[center_].valid = false;
  ++center_;
}

void EnvironmentCache::move_left(const Mps& w, const SampleSet& data) {
  if (center_ == 0) throw InvalidArgument("cannot move center before the first site");
  build_right(w, data, center_ - 1);
  left_[center_].valid = false;
  --center_;
}

void EnvironmentCache::check_current(const Mps& w, std::size_t site) const {
  if (site != center_) {
    throw InternalError("environment cache is centered at " + std::to_string(center_) + ", not " +
                        std::to_string(site));
  }
  if (w.size() != left_.size()) throw InternalError("environment cache built for a different MPS");
  const Block& l = left_[site];
  const Block& r = right_[site];
  if (!l.valid || !r.valid || l.bond != w.left_bond(site) || r.bond != w.right_bond(site)) {
    throw InternalError("environment cache is stale at site " + std::to_string(site));
  }
}

double EnvironmentCache::max_recombination_error(const Mps& w, const SampleSet& data) const {
  LocalProblem local(w, center_, data, *this);
  std::vector<double> out;
  local.forward(w.core(center_), out);
  double err = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (w.is_labeled()) {
      const auto v = evaluate_labeled(w, data.inputs[i]);
      for (std::size_t c = 0; c < v.size(); ++c) err = std::max(err, std::abs(v[c] - out[i * v.size() + c]));
    } else {
      err = std::max(err, std::abs(evaluate(w, data.inputs[i]) - out[i]));
    }
  }
  return err;
}

// ---------------------------------------------------------------------------
// Site gradient and update

DenseTensor gradient_site(const Mps& w, std::size_t site, const SampleSet& data, double lambda,
                          const EnvironmentCache& cache, LossKind kind) {
  if (!w.gauge().is_mixed_at(site)) throw InternalError("gradient_site needs the MPS in mixed gauge at the site");
  check_targets(w, data, kind);
  LocalProblem local(w, site, data, cache);
  OutputObjective objective(data, kind, local.outputs());
  std::vector<double> out, g;
  local.forward(w.core(site), out);
  objective.gradient(out, g);
  DenseTensor grad = local.adjoint(g);
  axpy(lambda, w.core(site), grad);
  return grad;
}

SiteUpdate optimize_site(Mps& w, std::size_t site, const SampleSet& data, const TrainConfig& config,
                         const EnvironmentCache& cache) {
  if (!w.gauge().is_mixed_at(site)) throw InternalError("optimize_site needs the MPS in mixed gauge at the site");
  check_targets(w, data, config.loss_kind);
  const Gauge gauge = w.gauge();
  const double lambda = config.lambda;

  LocalProblem local(w, site, data, cache);
  OutputObjective objective(data, config.loss_kind, local.outputs());

  SiteUpdate result;
  DenseTensor x = w.core(site);
  std::vector<double> out, q, gout;
  local.forward(x, out);
  auto objective_at = [&](const std::vector<double>& o, const DenseTensor& core, std::size_t* clamped) {
    return objective.value(o, clamped) + 0.5 * lambda * dot(core, core);
  };
  double current = objective_at(out, x, &result.clamped);
  result.loss_before = current;

  auto full_gradient = [&](const std::vector<double>& o, const DenseTensor& core) {
    objective.gradient(o, gout);
    DenseTensor g = local.adjoint(gout);
    axpy(lambda, core, g);
    return g;
  };

  DenseTensor g = full_gradient(out, x);
  DenseTensor d = -1.0 * g;
  const std::size_t restart_every = std::max<std::size_t>(x.size(), 1);
  double prev_alpha = 0.0;
  bool changed = false;

  for (std::size_t it = 0; it < config.cg_steps; ++it) {
    const double gnorm2 = dot(g, g);
    if (max_abs(g) <= 1e-15 * std::max(1.0, max_abs(x))) break;  // stationary
    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      d = -1.0 * g;
      slope = -gnorm2;
    }
    local.forward(d, q);
    const double xd = dot(x, d), dd = dot(d, d), xx = dot(x, x);

    auto phi = [&](double alpha, double& v, double& d1, double& d2) {
      objective.line_terms(out, q, alpha, v, d1, d2);
      v += 0.5 * lambda * (xx + 2.0 * alpha * xd + alpha * alpha * dd);
      d1 += lambda * (xd + alpha * dd);
      d2 += lambda * dd;
    };

    double v0, d10, d20;
    phi(0.0, v0, d10, d20);
    double alpha = 0.0;
    if (d20 > 0.0 && std::isfinite(d20)) {
      alpha = -d10 / d20;
    } else {
      alpha = prev_alpha > 0.0 ? 2.0 * prev_alpha : 1.0 / std::sqrt(gnorm2);
    }
    bool accepted = false;
    double v_new = v0;
    for (std::size_t h = 0; h <= config.max_halvings; ++h) {
      double d1, d2;
      phi(alpha, v_new, d1, d2);
      if (std::isfinite(v_new) && v_new <= v0 + config.armijo_c * alpha * d10) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      result.stalled = true;
      break;
    }

    axpy(alpha, d, x);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += alpha * q[k];
    prev_alpha = alpha;
    changed = true;
    ++result.steps;

    DenseTensor g_new = full_gradient(out, x);
    double beta = 0.0;
    if ((it + 1) % restart_every != 0) {
      double num = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) num += g_new[k] * (g_new[k] - g[k]);
      beta = std::max(0.0, num / gnorm2);
    }
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = -g_new[k] + beta * d[k];
    g = std::move(g_new);
  }

  if (changed) {
    // Recompute from scratch rather than trusting the accumulated outputs.
    local.forward(x, out);
    const double fresh = objective_at(out, x, nullptr);
    if (fresh <= current) {
      current = fresh;
      w.replace_core(site, std::move(x));
      w.set_gauge(gauge);
    }
  }
  result.loss_after = current;
  return result;
}

// ---------------------------------------------------------------------------
// Sweeping

void shift_center_right(Mps& w, std::size_t site) {
  const DenseTensor& core = w.core(site);
  const Matrix m = core.as_matrix(core.order() - 1);
  const Eigen::Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), k);
  Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (r(i, i) < 0.0) {
      r.row(i) *= -1.0;
      q.col(i) *= -1.0;
    }
  }
  Shape ls = core.shape();
  ls.back() = static_cast<std::size_t>(k);
  DenseTensor left(ls);
  Eigen::Map<RowMajorMatrix>(left.data().data(), q.rows(), q.cols()) = q;

  const DenseTensor& next = w.core(site + 1);
  Shape rs = next.shape();
  rs.front() = static_cast<std::size_t>(k);
  DenseTensor right(rs);
  const Matrix nm = r * next.as_matrix(1);
  Eigen::Map<RowMajorMatrix>(right.data().data(), nm.rows(), nm.cols()) = nm;

  w.replace_pair(site, std::move(left), std::move(right));
  w.set_gauge(Gauge::mixed_at(site + 1, w.size()));
}

void shift_center_left(Mps& w, std::size_t site) {
  const DenseTensor& core = w.core(site);
  const Matrix m = core.as_matrix(1);
  const Eigen::Index k = std::min(m.rows(), m.cols());
  const Matrix mt = m.transpose();
  Eigen::HouseholderQR<Matrix> qr(mt);
  Matrix q = qr.householderQ() * Matrix::Identity(mt.rows(), k);
  Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (r(i, i) < 0.0) {
      r.row(i) *= -1.0;
      q.col(i) *= -1.0;
    }
  }
  Shape rs = core.shape();
  rs.front() = static_cast<std::size_t>(k);
  DenseTensor right(rs);
  const Matrix qt = q.transpose();
  Eigen::Map<RowMajorMatrix>(right.data().data(), qt.rows(), qt.cols()) = qt;

  const DenseTensor& prev = w.core(site - 1);
  Shape ls = prev.shape();
  ls.back() = static_cast<std::size_t>(k);
  DenseTensor left(ls);
  const Matrix pm = prev.as_matrix(prev.order() - 1) * r.transpose();
  Eigen::Map<RowMajorMatrix>(left.data().data(), pm.rows(), pm.cols()) = pm;

  w.replace_pair(site - 1, std::move(left), std::move(right));
  w.set_gauge(Gauge::mixed_at(site - 1, w.size()));
}

void TrainTrace::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "sweep,train_loss,val_loss,test_loss\n";
  char buf[128];
  for (const auto& s : sweeps) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", s.sweep, s.train_loss, s.val_loss, s.test_loss);
    os << buf;
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

TrainResult train(const Mps& initial, const SampleSet& train_set, const SampleSet& validation,
                  const SampleSet& test, const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw InvalidArgument("training set is empty");
  check_targets(initial, train_set, config.loss_kind);
  const LossKind kind = config.loss_kind;
  const bool use_validation = config.checkpoint == CheckpointPolicy::best_validation && !validation.empty();

  using clock = std::chrono::steady_clock;
  Mps w = canonicalize(initial, 0);
  EnvironmentCache cache(w, train_set, 0);
  TrainTrace trace;

  auto record = [&](std::size_t sweep, double seconds) {
    SweepRecord rec;
    rec.sweep = sweep;
    rec.train_loss = loss(w, train_set, config.lambda, kind);
    rec.val_loss = validation.empty() ? nan() : data_loss(w, validation, kind);
    rec.test_loss = test.empty() ? nan() : data_loss(w, test, kind);
    rec.seconds = seconds;
    trace.sweeps.push_back(rec);
  };

  record(0, 0.0);
  Mps best = w;
  double best_val = trace.sweeps.back().val_loss;
  double last_update = trace.sweeps.back().train_loss;

  auto update = [&](std::size_t site) {
    const SiteUpdate u = optimize_site(w, site, train_set, config, cache);
    if (u.stalled) ++trace.stall_events;
    trace.clamped_probabilities += u.clamped;
    if (u.loss_after > last_update + 1e-12) ++trace.monotonicity_violations;
    trace.update_losses.push_back(u.loss_after);
    last_update = u.loss_after;
  };

  const std::size_t n = w.size();
  for (std::size_t sweep = 1; sweep <= config.sweeps; ++sweep) {
    const auto start = clock::now();
    for (std::size_t j = 0; j + 1 < n; ++j) {
      update(j);
      shift_center_right(w, j);
      cache.move_right(w, train_set);
    }
    for (std::size_t j = n - 1; j > 0; --j) {
      update(j);
      shift_center_left(w, j);
      cache.move_left(w, train_set);
    }
    if (n == 1) update(0);
    const double seconds = std::chrono::duration<double>(clock::now() - start).count();

    const double before = trace.sweeps.back().train_loss;
    record(sweep, seconds);
    const auto& rec = trace.sweeps.back();
    if (use_validation && rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best = w;
      trace.best_validation_sweep = sweep;
    }
    if (config.early_stop_tol > 0.0 && before - rec.train_loss < config.early_stop_tol) break;
  }

  if (!use_validation) {
    trace.best_validation_sweep = trace.sweeps.back().sweep;
    return {std::move(w), std::move(trace)};
  }
  return {std::move(best), std::move(trace)};
}

}  // namespace mpslab
