#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "mpslab/errors.hpp"
#include "mpslab/experiments.hpp"
#include "mpslab/svg_plot.hpp"

using namespace mpslab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig quick_config() {
  ExperimentConfig c = scenario_preset("custom");
  c.target.sites = 4;
  c.target.chi_t = 9;
  c.chi = {1, 2, 3, 9};
  c.ntr = {40};
  c.replicates = 3;
  c.n_test = 64;
  c.n_val = 64;
  c.train.sweeps = 3;
  c.workers = 2;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Minimal well-formedness check: every element opened is closed in order.
bool balanced_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t pos = 0;
  while ((pos = s.find('<', pos)) != std::string::npos) {
    const std::size_t end = s.find('>', pos);
    if (end == std::string::npos) return false;
    const std::string tag = s.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty() || tag[0] == '?' || tag[0] == '!') continue;
    if (tag.back() == '/') continue;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    stack.push_back(tag.substr(0, tag.find_first_of(" \t\n")));
  }
  return stack.empty();
}

// Tiny MNIST-shaped IDX files: 4x4 images whose bright quadrant encodes the label mod 4.
fs::path write_fake_mnist(std::uint32_t train, std::uint32_t test) {
  const fs::path dir = fs::temp_directory_path() / "mpslab_fake_mnist";
  fs::create_directories(dir);
  auto u32 = [](std::string& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out += static_cast<char>((v >> shift) & 0xff);
  };
  auto write = [&](const std::string& stem, std::uint32_t count, std::uint32_t salt) {
    std::string img, lab;
    u32(img, 0x803), u32(img, count), u32(img, 4), u32(img, 4);
    u32(lab, 0x801), u32(lab, count);
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t label = (i * 7 + salt) % 10;
      for (std::uint32_t r = 0; r < 4; ++r)
        for (std::uint32_t c = 0; c < 4; ++c) {
          const bool lit = (r / 2) * 2 + c / 2 == label % 4;
          img += static_cast<char>(lit ? 200 + (i + r + c) % 50 : (i * 13 + r * 4 + c) % 40);
        }
      lab += static_cast<char>(label);
    }
    std::ofstream(dir / (stem + "-images-idx3-ubyte"), std::ios::binary) << img;
    std::ofstream(dir / (stem + "-labels-idx1-ubyte"), std::ios::binary) << lab;
  };
  write("train", train, 0);
  write("t10k", test, 3);
  return dir;
}

}  // namespace

TEST(Scenarios, PresetsValidate) {
  for (const char* s : {"fig2", "fig3", "fig4", "fig6", "fig7", "fig8", "custom"}) {
    EXPECT_NO_THROW(scenario_preset(s).validate()) << s;
  }
  for (const char* s : {"fig5", "fig9"}) {
    ExperimentConfig c = scenario_preset(s);
    EXPECT_THROW(c.validate(), InvalidArgument) << s;  // needs a data directory
    c.mnist.dir = "/data/mnist";
    EXPECT_NO_THROW(c.validate()) << s;
  }
  EXPECT_THROW(scenario_preset("fig1"), InvalidArgument);
  EXPECT_EQ(scenario_preset("fig2", true).replicates, 100u);
  EXPECT_EQ(scenario_preset("fig4", true).replicates, 32u);
  EXPECT_EQ(scenario_preset("fig4").replicates, 8u);
  EXPECT_EQ(scenario_preset("fig2").ntr.size(), 16u);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = quick_config();
  c.method = Method::both;
  c.eps = {0.1, 0.25};
  c.train.lambda = 3e-5;
  const ExperimentConfig r = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(r), config_to_json(c));
  EXPECT_THROW(config_from_json("[1,2]"), FormatError);
  EXPECT_THROW(config_from_json("{\"replicates\": \"many\"}"), FormatError);
  EXPECT_THROW(config_from_json("{\"method\": \"magic\"}"), InvalidArgument);
}

TEST(Config, ValidationRules) {
  ExperimentConfig c = quick_config();
  c.chi.clear();
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = quick_config();
  c.replicates = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = quick_config();
  c.noise = {0.1};
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Config, SeedsDisjoint) {
  const ExperimentConfig c = scenario_preset("fig4", true);
  for (std::size_t r = 0; r < c.replicates; ++r) {
    EXPECT_NE(c.test_seed(), c.training_seed(r));
    EXPECT_NE(c.validation_seed(r), c.training_seed(r));
  }
}

TEST(FindOptimalChi, Examples) {
  Series s;
  for (std::size_t chi = 2; chi <= 10; ++chi) s.points.push_back({static_cast<double>(chi), 10.0 / chi, 0.1, 4});
  EXPECT_EQ(find_optimal_chi(s).chi, 10u);
  s.points.clear();
  for (std::size_t chi = 2; chi <= 12; ++chi) {
    const double d = static_cast<double>(chi) - 7.0;
    s.points.push_back({static_cast<double>(chi), d * d + 1.0, 0.0, 4});
  }
  EXPECT_EQ(find_optimal_chi(s).chi, 7u);
  EXPECT_EQ(find_optimal_chi(s).mean, 1.0);
  s.points = {{2, 1.0, 0, 1}, {3, 0.5, 0, 1}, {4, 0.5, 0, 1}};
  EXPECT_EQ(find_optimal_chi(s).chi, 3u);
}

TEST(BondScan, SingleReplicateHasZeroSigma) {
  ExperimentConfig c = quick_config();
  c.replicates = 1;
  const ScanResult r = run_bond_scan(c);
  for (const auto& s : r.series)
    for (const auto& p : s.points) {
      EXPECT_EQ(p.std, 0.0);
      EXPECT_EQ(p.n, 1u);
    }
}

TEST(BondScan, RawTableAndAggregation) {
  const ExperimentConfig c = quick_config();
  const ScanResult r = run_bond_scan(c);
  EXPECT_EQ(r.axis_name, "chi");
  EXPECT_EQ(r.raw.size(), c.chi.size() * c.replicates);
  EXPECT_EQ(r.failed, 0u);
  const Series& s = r.find("inv_test");
  ASSERT_EQ(s.points.size(), c.chi.size());
  for (std::size_t k = 0; k < c.chi.size(); ++k) {
    std::vector<double> vals;
    for (const auto& row : r.raw)
      if (row.chi == c.chi[k]) vals.push_back(row.values[1]);
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    EXPECT_NEAR(s.points[k].mean, mean, 1e-12);
    EXPECT_NEAR(s.points[k].std, std::sqrt(ss / static_cast<double>(vals.size() - 1)), 1e-12);
    EXPECT_GE(s.points[k].std, 0.0);
  }
  const OptimalChi o = find_optimal_chi(r);
  for (const auto& p : s.points) EXPECT_LE(o.mean, p.mean);
}

TEST(BondScan, DeterministicAcrossWorkerCounts) {
  ExperimentConfig c = quick_config();
  c.method = Method::both;
  c.workers = 1;
  const std::string a = raw_csv(run_bond_scan(c));
  c.workers = 3;
  EXPECT_EQ(raw_csv(run_bond_scan(c)), a);
}

TEST(BondScan, DmrgSeriesAndMonotoneTrainer) {
  ExperimentConfig c = quick_config();
  c.method = Method::both;
  const ScanResult r = run_bond_scan(c);
  EXPECT_NO_THROW(r.find("dmrg_test"));
  EXPECT_NO_THROW(r.find("inv_test"));
  const auto col = std::find(r.columns.begin(), r.columns.end(), "dmrg_violations") - r.columns.begin();
  for (const auto& row : r.raw) EXPECT_EQ(row.values[static_cast<std::size_t>(col)], 0.0);
}

TEST(TrainsizeScan, AxisIsTrainingSize) {
  ExperimentConfig c = quick_config();
  c.chi = {9};
  c.ntr = {30, 60};
  const ScanResult r = run_trainsize_scan(c);
  EXPECT_EQ(r.axis_name, "ntr");
  ASSERT_EQ(r.series.front().points.size(), 2u);
  EXPECT_EQ(r.series.front().points[1].axis, 60.0);
  c.ntr = {30};
  EXPECT_EQ(run_trainsize_scan(c).series.front().points.size(), 1u);
}

TEST(EpsilonScan, OneSeriesGroupPerEpsilon) {
  ExperimentConfig c = quick_config();
  c.eps = {0.1, 0.3};
  const ScanResult r = run_epsilon_scan(c);
  EXPECT_NO_THROW(r.find("eps=0.1/inv_test"));
  EXPECT_NO_THROW(r.find("eps=0.3/inv_test"));
  c.eps = {0.3};
  EXPECT_EQ(raw_csv(run_epsilon_scan(c)), raw_csv(run_bond_scan(c)));
}

TEST(NoiseScan, RequiresImages) {
  EXPECT_THROW(run_noise_scan(quick_config()), InvalidArgument);
}

TEST(NoiseScan, RunsOnIdxImages) {
  ExperimentConfig c = scenario_preset("fig9");
  c.mnist.dir = write_fake_mnist(60, 30).string();
  c.mnist.test_count = 30;
  c.ntr = {40};
  c.chi = {2, 3};
  c.noise = {0.0, 0.25};
  c.train.sweeps = 2;
  c.train.cg_steps = 2;
  c.workers = 2;
  const ScanResult r = run_noise_scan(c);
  EXPECT_EQ(r.failed, 0u);
  ASSERT_EQ(r.raw.size(), 4u);
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(r.columns.begin(), r.columns.end(), name) - r.columns.begin());
  };
  for (const auto& row : r.raw) {
    ASSERT_TRUE(row.ok) << row.error;
    const double acc = row.values[col("test_accuracy")];
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
    EXPECT_NEAR(row.values[col("test_error")], 1.0 - acc, 1e-12);
    EXPECT_EQ(row.values[col("corrupted")], std::round(row.noise * 40));
    EXPECT_EQ(row.values[col("violations")], 0.0);
  }
  EXPECT_EQ(raw_csv(r), raw_csv(run_noise_scan(c)));
}

TEST(Scan, AbortsWhenReplicatesFail) {
  ExperimentConfig c = quick_config();
  c.target.sites = 11;  // 3^11 columns exceed the design-system guard
  c.target.chi_t = 3;
  c.chi = {2};
  EXPECT_THROW(run_bond_scan(c), ScanAborted);
}

TEST(EmitOutputs, FilesAndRerunFromManifest) {
  ExperimentConfig c = quick_config();
  c.out = (fs::temp_directory_path() / "mpslab_emit_a").string();
  fs::remove_all(c.out);
  const ScanResult r = run_bond_scan(c);
  emit_outputs(r, c);
  for (const char* f : {"raw.csv", "summary.csv", "figure.svg", "config.json", "optimal_chi.csv"})
    EXPECT_TRUE(fs::exists(fs::path(c.out) / f)) << f;

  std::ifstream summary(fs::path(c.out) / "summary.csv");
  std::string line;
  std::getline(summary, line);
  EXPECT_EQ(line, "axis,mean,std,n");
  std::size_t rows = 0;
  while (std::getline(summary, line)) ++rows;
  EXPECT_EQ(rows, c.chi.size());
  EXPECT_TRUE(balanced_xml(slurp(fs::path(c.out) / "figure.svg")));

  ExperimentConfig again = config_from_json(slurp(fs::path(c.out) / "config.json"));
  again.out = (fs::temp_directory_path() / "mpslab_emit_b").string();
  emit_outputs(run_scan(again), again);
  EXPECT_EQ(slurp(fs::path(c.out) / "raw.csv"), slurp(fs::path(again.out) / "raw.csv"));
}

TEST(EmitOutputs, UnwritableDirectory) {
  ExperimentConfig c = quick_config();
  c.replicates = 1;
  c.chi = {2};
  const ScanResult r = run_bond_scan(c);
  const fs::path blocker = fs::temp_directory_path() / "mpslab_blocker_file";
  std::ofstream(blocker) << "x";
  c.out = (blocker / "sub").string();
  EXPECT_THROW(emit_outputs(r, c), IoError);
}

TEST(Svg, EscapesAndBalances) {
  PlotSeries s{"a<b & c", {1, 2, 3}, {1e-3, 1e-2, 5e-3}, {1e-4, 1e-3, 2e-3}};
  PlotOptions o;
  o.title = "test \"plot\"";
  o.log_y = true;
  const std::string svg = render_svg({s}, o);
  EXPECT_NE(svg.find("a&lt;b &amp; c"), std::string::npos);
  EXPECT_TRUE(balanced_xml(svg));
  EXPECT_TRUE(balanced_xml(render_svg({}, PlotOptions{})));
}
