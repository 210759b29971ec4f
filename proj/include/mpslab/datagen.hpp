#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mpslab/mps.hpp"
#include "mpslab/tensor.hpp"

namespace mpslab {

/// Parameters of the label-generating MPS W_T.
struct TargetSpec {
  std::size_t sites = 6;
  std::size_t f = 3;
  double epsilon = 0.3;
  std::size_t chi_t = 27;      // nilpotent matrix size = target bond extent
  bool apply_unitary = true;   // conjugate M by random orthogonal matrices
  bool per_site_unitary = true;  // independent U per site (false: one shared U)
  std::uint64_t seed = 1;

  void validate() const;
};

/// Affine label normalization y → (y − mean) / std.
struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;
};

struct Dataset {
  std::size_t sites = 0;
  std::vector<double> features;  // samples × sites, row-major
  std::vector<double> labels;    // normalized
  NormalizationStats normalization;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * sites, sites}; }
  std::vector<double> raw_labels() const;
};

/// splitmix64 mix of (base, stream); used to derive independent sub-seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// L×L matrix with ε on the first superdiagonal.
Matrix build_nilpotent(std::size_t size, double epsilon);

/// Haar orthogonal matrix: QR of a Gaussian matrix with R's diagonal made positive.
Matrix random_orthogonal(std::size_t size, std::uint64_t seed);

/// Site j carries the stack (I, M_j x, M_j² x², …) with M_j = U_j M U_jᵀ. The
/// chain is closed by Gaussian vectors g (left) and h (right) multiplied into the
/// first and last stacks, so every coefficient of total degree n scales as εⁿ.
Mps build_target_mps(const TargetSpec& spec);

/// i.i.d. standard normal features, samples × sites row-major.
std::vector<double> sample_features(std::size_t samples, std::size_t sites, std::uint64_t seed);

/// Mean and sample standard deviation (T−1 denominator).
NormalizationStats label_statistics(std::span<const double> labels);

/// Labels from W_T normalized by their own statistics.
Dataset generate_dataset(const TargetSpec& spec, std::size_t samples, std::uint64_t seed);

/// Same, but with an explicit target and optionally fixed normalization.
Dataset generate_dataset(const Mps& target, std::size_t samples, std::uint64_t seed,
                         std::optional<NormalizationStats> stats = std::nullopt);

/// Reassigns exactly round(p·T) distinct labels to a uniformly random different class.
std::vector<int> add_label_noise(std::span<const int> labels, double fraction, std::size_t classes,
                                 std::uint64_t seed);

void write_dataset_csv(const std::filesystem::path& path, const Dataset& d);
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace mpslab
