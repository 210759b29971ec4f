#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mpslab/datagen.hpp"
#include "mpslab/feature_map.hpp"
#include "mpslab/mps.hpp"

namespace mpslab {

enum class LossKind { mse, cross_entropy };
enum class CheckpointPolicy { best_validation, last };

std::string to_string(LossKind kind);
std::string to_string(CheckpointPolicy policy);

struct TrainConfig {
  std::size_t sweeps = 50;
  std::size_t cg_steps = 5;
  double lambda = 1e-6;
  LossKind loss_kind = LossKind::mse;
  CheckpointPolicy checkpoint = CheckpointPolicy::best_validation;
  // Stop when a full sweep lowers the training objective by less than this.
  // Zero disables early stopping.
  double early_stop_tol = 1e-10;
  double armijo_c = 1e-4;
  std::size_t max_halvings = 40;

  void validate() const;
};

/// Featurized inputs with either regression targets or class indices.
struct SampleSet {
  std::vector<FeaturizedSample> inputs;
  std::vector<double> targets;
  std::vector<int> classes;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }
};

SampleSet make_regression_set(const Dataset& d, const FeatureMap& map);

/// −ln(v_t² / Σ v²), clamped at p = 1e-300. Sets `clamped` when the clamp fires.
double class_log_loss(std::span<const double> v, int true_class, bool* clamped = nullptr);

/// (1/2T) Σ (f(x) − y)² or −(1/T) Σ ln p_true. No regularizer.
double data_loss(const Mps& w, const SampleSet& data, LossKind kind);

/// data_loss + (λ/2)‖W‖², with ‖W‖² from the MPS inner product.
double loss(const Mps& w, const SampleSet& data, double lambda, LossKind kind = LossKind::mse);

/// Per-sample partial contractions around the current center site.
///
/// Left block at site j contracts sites < j; right block at site j contracts
/// sites > j. A block that already contains the label core carries an extra
/// class axis. Left blocks are valid for j ≤ center, right blocks for j ≥ center.
class EnvironmentCache {
 public:
  EnvironmentCache(const Mps& w, const SampleSet& data, std::size_t center);

  std::size_t center() const { return center_; }
  std::size_t samples() const { return samples_; }

  // Left block: rows (1 or C) × bond, row-major.
  std::size_t left_rows(std::size_t site) const { return left_.at(site).rows; }
  std::size_t left_bond(std::size_t site) const { return left_.at(site).bond; }
  std::span<const double> left(std::size_t site, std::size_t sample) const;

  // Right block: bond × rows (1 or C), row-major.
  std::size_t right_rows(std::size_t site) const { return right_.at(site).rows; }
  std::size_t right_bond(std::size_t site) const { return right_.at(site).bond; }
  std::span<const double> right(std::size_t site, std::size_t sample) const;

  /// Core `center` has just been left-orthonormalized; extend the left blocks.
  void move_right(const Mps& w, const SampleSet& data);
  /// Core `center` has just been right-orthonormalized; extend the right blocks.
  void move_left(const Mps& w, const SampleSet& data);

  /// Throws InternalError if the cache does not describe `w` at `site`.
  void check_current(const Mps& w, std::size_t site) const;

  /// Max |recombined − evaluate| over samples and outputs.
  double max_recombination_error(const Mps& w, const SampleSet& data) const;

 private:
  struct Block {
    std::size_t rows = 1;
    std::size_t bond = 1;
    std::vector<double> values;  // samples × rows × bond
    bool valid = false;
  };

  void build_left(const Mps& w, const SampleSet& data, std::size_t site);
  void build_right(const Mps& w, const SampleSet& data, std::size_t site);

  std::size_t center_ = 0;
  std::size_t samples_ = 0;
  std::vector<Block> left_;
  std::vector<Block> right_;
};

/// ∂(loss)/∂(core at site) for w in mixed gauge at `site`.
DenseTensor gradient_site(const Mps& w, std::size_t site, const SampleSet& data, double lambda,
                          const EnvironmentCache& cache, LossKind kind = LossKind::mse);

struct SiteUpdate {
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::size_t steps = 0;
  bool stalled = false;
  std::size_t clamped = 0;
};

/// Nonlinear CG (Polak–Ribière+, restarts) on one core with Armijo backtracking.
/// Replaces the core of `w` in place; the gauge stays mixed at `site`.
SiteUpdate optimize_site(Mps& w, std::size_t site, const SampleSet& data, const TrainConfig& config,
                         const EnvironmentCache& cache);

struct SweepRecord {
  std::size_t sweep = 0;
  double train_loss = 0.0;  // objective including the ridge term
  double val_loss = 0.0;    // data term; NaN when no validation set
  double test_loss = 0.0;   // data term; NaN when no test set
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<SweepRecord> sweeps;  // entry 0 is the initial model
  std::size_t best_validation_sweep = 0;
  std::vector<double> update_losses;  // objective after every site update
  std::size_t monotonicity_violations = 0;
  std::size_t stall_events = 0;
  std::size_t clamped_probabilities = 0;
  std::string optimizer = "nonlinear CG, Polak-Ribiere+ with restart, Armijo c=1e-4";

  void write_csv(const std::string& path) const;
};

struct TrainResult {
  Mps model;
  TrainTrace trace;
};

/// Alternating left→right / right→left single-site sweeps.
TrainResult train(const Mps& initial, const SampleSet& train_set, const SampleSet& validation,
                  const SampleSet& test, const TrainConfig& config);

/// Moves the orthogonality center one site to the right (left) by QR.
void shift_center_right(Mps& w, std::size_t site);
void shift_center_left(Mps& w, std::size_t site);

}  // namespace mpslab
