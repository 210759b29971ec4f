#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mpslab/datagen.hpp"
#include "mpslab/dmrg.hpp"

namespace mpslab {

enum class ScanKind { bond, trainsize, epsilon, noise };
enum class Method { inversion, dmrg, both };
enum class DataKind { synthetic, mnist };

std::string to_string(ScanKind k);
std::string to_string(Method m);
std::string to_string(DataKind d);
ScanKind scan_kind_from_string(const std::string& s);
Method method_from_string(const std::string& s);
DataKind data_kind_from_string(const std::string& s);

struct MnistOptions {
  std::string dir;               // holds train-/t10k- IDX files, optionally .gz
  std::size_t pool = 2;          // 28×28 → 14×14
  std::size_t test_count = 10000;
  double init_scale = 0.0;       // 0: 1/sqrt(f·χ)
};

struct ExperimentConfig {
  std::string scenario = "custom";
  ScanKind scan = ScanKind::bond;
  Method method = Method::inversion;
  DataKind data = DataKind::synthetic;
  TargetSpec target;
  std::vector<std::size_t> ntr{300};
  std::vector<double> eps{0.3};
  std::vector<std::size_t> chi;  // defaults to 2..27
  std::vector<double> noise{0.0};
  std::size_t replicates = 8;
  TrainConfig train;  // train.lambda is the ridge λ for both methods
  std::uint64_t seed = 1000;  // replicate r trains on seed + r
  std::size_t n_test = 1024;
  std::size_t n_val = 1024;
  std::size_t workers = 0;  // 0: hardware concurrency
  double min_success = 0.8;
  MnistOptions mnist;
  std::string out = "out";
  bool full = false;

  void validate() const;

  // Seed protocol. All are pairwise distinct and disjoint from training seeds.
  std::uint64_t training_seed(std::size_t replicate) const { return seed + replicate; }
  std::uint64_t test_seed() const;
  std::uint64_t validation_seed(std::size_t replicate) const;
  std::uint64_t noise_seed(std::size_t replicate) const;
  std::uint64_t init_seed(std::size_t replicate, std::size_t chi) const;
};

/// Preset grids fig2..fig9; `full` selects the large replicate counts.
ExperimentConfig scenario_preset(const std::string& scenario, bool full = false);

/// JSON round trip. Parsing starts from the preset named by "scenario" (and
/// "full") and overlays every other key present; unknown keys are ignored.
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);

struct RawRow {
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::size_t ntr = 0;
  double epsilon = 0.0;
  double noise = 0.0;
  std::size_t chi = 0;
  bool ok = true;
  std::string error;
  std::vector<double> values;  // aligned with ScanResult::columns
};

struct SummaryPoint {
  double axis = 0.0;
  double mean = 0.0;
  double std = 0.0;  // sample std; 0 when n = 1
  std::size_t n = 0;
};

struct Series {
  std::string name;    // e.g. "ntr=300/inversion_test"
  std::string metric;  // raw column
  std::string group;   // fixed non-axis parameters, e.g. "ntr=300"
  std::vector<SummaryPoint> points;
};

struct ScanResult {
  std::string axis_name;  // chi | ntr
  std::vector<std::string> columns;
  std::vector<RawRow> raw;
  std::vector<Series> series;
  std::size_t failed = 0;

  const Series& find(const std::string& name) const;
};

struct OptimalChi {
  std::size_t chi = 0;
  double mean = 0.0;
  double std = 0.0;
};

ScanResult run_bond_scan(const ExperimentConfig& cfg);
ScanResult run_trainsize_scan(const ExperimentConfig& cfg);
ScanResult run_epsilon_scan(const ExperimentConfig& cfg);
ScanResult run_noise_scan(const ExperimentConfig& cfg);
/// Dispatches on cfg.scan.
ScanResult run_scan(const ExperimentConfig& cfg);

/// argmin of the mean; ties go to the smaller χ.
OptimalChi find_optimal_chi(const Series& s);
OptimalChi find_optimal_chi(const ScanResult& scan);

/// Mean and sample std of one column at each axis point, from ok rows only.
std::vector<SummaryPoint> summarize(const ScanResult& scan, const std::string& column, const std::string& group);

/// raw.csv, summary.csv (first series) plus summary_<series>.csv,
/// optimal_chi.csv for χ axes, figure.svg, config.json.
void emit_outputs(const ScanResult& scan, const ExperimentConfig& cfg);

/// Byte-exact raw table as written to raw.csv.
std::string raw_csv(const ScanResult& scan);

}  // namespace mpslab
