#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "mpslab/feature_map.hpp"
#include "mpslab/tensor.hpp"

namespace mpslab {

/// Site carrying the open class index and the number of classes C.
struct LabelSite {
  std::size_t site = 0;
  std::size_t classes = 0;

  bool operator==(const LabelSite&) const = default;
};

enum class GaugeKind { none, left_canonical, right_canonical, mixed };

struct Gauge {
  GaugeKind kind = GaugeKind::none;
  std::size_t center = 0;

  static Gauge mixed_at(std::size_t center, std::size_t sites);
  bool is_mixed_at(std::size_t site) const;
};

struct BondProfile {
  std::vector<std::size_t> dims;  // N−1 internal bonds
  std::size_t max = 1;
};

/// Matrix product state. Core j has shape (χ_{j−1}, f, χ_j), or
/// (χ_{j−1}, f, C, χ_j) at the label site. Boundary extents are 1.
class Mps {
 public:
  explicit Mps(std::vector<DenseTensor> cores, std::optional<LabelSite> label = std::nullopt);

  std::size_t size() const { return cores_.size(); }
  std::size_t phys_dim() const { return cores_.front().extent(1); }
  const std::optional<LabelSite>& label_site() const { return label_; }
  bool is_labeled() const { return label_.has_value(); }
  std::size_t classes() const { return label_ ? label_->classes : 1; }

  const DenseTensor& core(std::size_t j) const { return cores_.at(j); }
  const std::vector<DenseTensor>& cores() const { return cores_; }

  std::size_t left_bond(std::size_t j) const { return cores_.at(j).extent(0); }
  std::size_t right_bond(std::size_t j) const {
    const auto& c = cores_.at(j);
    return c.extent(c.order() - 1);
  }
  /// Product of the open (non-bond) extents of core j: f, or f·C at the label site.
  std::size_t open_dim(std::size_t j) const;

  BondProfile bond_profile() const;
  std::size_t parameter_count() const;

  Gauge gauge() const { return gauge_; }
  void set_gauge(Gauge g) { gauge_ = g; }

  /// Replaces core j by a tensor of identical shape. Resets the gauge record.
  void replace_core(std::size_t j, DenseTensor core);
  /// Replaces cores j and j+1 together; their shared bond may change extent.
  void replace_pair(std::size_t j, DenseTensor left, DenseTensor right);

  /// ⟨W, W⟩ via transfer matrices; never forms the full tensor.
  double norm_squared() const;

 private:
  std::vector<DenseTensor> cores_;
  std::optional<LabelSite> label_;
  Gauge gauge_;
};

double evaluate(const Mps& w, const FeaturizedSample& s);
std::vector<double> evaluate_labeled(const Mps& w, const FeaturizedSample& s);

/// Dense W^{s1…sN}; the label axis (if any) follows its site's physical axis.
DenseTensor to_full_tensor(const Mps& w, std::size_t max_entries = 10'000'000);

struct Compression {
  Mps mps;
  double discarded_weight = 0.0;
  std::vector<double> bond_discarded;  // per internal bond
};

/// Left-to-right sequence of truncated SVDs of a dense (f,…,f) tensor.
Compression compress(const DenseTensor& t, std::size_t max_bond, double cutoff = 0.0);

/// Re-truncation of an MPS: left-canonicalize, then sweep right-to-left with
/// truncated SVDs. Result is right-canonical.
Compression truncate(const Mps& w, std::size_t max_bond, double cutoff = 0.0);

/// Mixed gauge with orthogonality center `center`.
Mps canonicalize(const Mps& w, std::size_t center);

/// Largest useful bond between sites j and j+1 (entanglement-maximal profile).
std::size_t max_bond_extent(std::size_t sites, std::size_t f, std::size_t bond,
                            std::optional<LabelSite> label = std::nullopt);

Mps random_init(std::size_t sites, std::size_t f, std::size_t chi, double scale, std::uint64_t seed);
Mps random_init_labeled(std::size_t sites, std::size_t f, std::size_t chi, LabelSite label,
                        double scale, std::uint64_t seed);

bool is_left_orthonormal(const DenseTensor& core, double tol = 1e-12);
bool is_right_orthonormal(const DenseTensor& core, double tol = 1e-12);

/// Overlap ⟨a, b⟩ of two MPS on the same sites (and label site, if any).
double inner(const Mps& a, const Mps& b);

}  // namespace mpslab
