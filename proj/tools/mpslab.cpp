// mpslab command line: data generation, single fits, and replicated scans.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mpslab/classifier.hpp"
#include "mpslab/datagen.hpp"
#include "mpslab/dmrg.hpp"
#include "mpslab/errors.hpp"
#include "mpslab/exact_solver.hpp"
#include "mpslab/experiments.hpp"
#include "mpslab/mps_io.hpp"

namespace fs = std::filesystem;
using namespace mpslab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitValidation = 2;
constexpr int kExitAborted = 3;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(item);
  return out;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InvalidArgument("not a number: '" + s + "'");
  }
  if (used != s.size()) throw InvalidArgument("not a number: '" + s + "'");
  return v;
}

// "a..b" (inclusive, step 1), "a:b:step", "x,y,z", or a single value.
std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  if (auto dots = text.find(".."); dots != std::string::npos) {
    const double lo = to_double(text.substr(0, dots)), hi = to_double(text.substr(dots + 2));
    for (double v = lo; v <= hi + 1e-9; v += 1.0) out.push_back(v);
  } else if (text.find(':') != std::string::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw InvalidArgument("range must be start:stop:step, got '" + text + "'");
    const double lo = to_double(parts[0]), hi = to_double(parts[1]), step = to_double(parts[2]);
    if (!(step > 0)) throw InvalidArgument("range step must be positive");
    for (int k = 0;; ++k) {
      const double v = lo + k * step;
      if (v > hi + 1e-9 * step) break;
      out.push_back(v);
    }
  } else {
    for (const auto& p : split(text, ',')) out.push_back(to_double(p));
  }
  if (out.empty()) throw InvalidArgument("empty list '" + text + "'");
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (double v : parse_list(text)) {
    if (v < 0 || v != std::floor(v)) throw InvalidArgument("expected non-negative integers in '" + text + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

void report_losses(const char* tag, double train, double test) {
  std::printf("%s train_mse=%.6e", tag, train);
  if (std::isfinite(test)) std::printf(" test_mse=%.6e", test);
  std::printf("\n");
}

SampleSet maybe_set(const std::string& path, const FeatureMap& map) {
  if (path.empty()) return {};
  return make_regression_set(read_dataset_csv(path), map);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mpslab: matrix product state regression and classification"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Sample a dataset from the nilpotent target MPS");
  TargetSpec spec;
  std::size_t gen_samples = 300;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "data.csv", gen_target_out, gen_stats_from;
  gen->add_option("--sites", spec.sites, "number of features N");
  gen->add_option("--f", spec.f, "local feature dimension");
  gen->add_option("--eps", spec.epsilon, "complexity parameter epsilon");
  gen->add_option("--chi-t", spec.chi_t, "target bond dimension");
  gen->add_option("--target-seed", spec.seed, "seed of the target MPS");
  gen->add_flag("!--shared-unitary", spec.per_site_unitary, "one orthogonal conjugation for all sites");
  gen->add_option("--samples", gen_samples, "number of samples");
  gen->add_option("--seed", gen_seed, "seed of the feature draw");
  gen->add_option("--stats-from", gen_stats_from, "normalize with the statistics of this CSV's raw labels");
  gen->add_option("--out", gen_out, "output CSV");
  gen->add_option("--target-out", gen_target_out, "also write the target MPS");

  // exact
  auto* exact = app.add_subcommand("exact", "Ridge solve in the full product space, then SVD compression");
  std::string ex_train, ex_test, ex_out;
  std::size_t ex_f = 3;
  double ex_lambda = 1e-6;
  std::string ex_chi = "27";
  exact->add_option("--train", ex_train, "training CSV")->required();
  exact->add_option("--test", ex_test, "test CSV");
  exact->add_option("--f", ex_f, "polynomial feature dimension");
  exact->add_option("--lambda", ex_lambda, "ridge parameter");
  exact->add_option("--chi", ex_chi, "bond dimension(s): 5, 2..27, 2:20:2 or 4,8,16");
  exact->add_option("--out", ex_out, "write the compressed MPS (single chi only)");

  // dmrg
  auto* dmrg = app.add_subcommand("dmrg", "Single-site sweeping optimization");
  std::string dm_train, dm_val, dm_test, dm_out, dm_trace, dm_init = "inversion";
  std::size_t dm_f = 3, dm_chi = 6;
  std::uint64_t dm_seed = 1;
  TrainConfig dm_cfg;
  dmrg->add_option("--train", dm_train, "training CSV")->required();
  dmrg->add_option("--val", dm_val, "validation CSV (enables best-validation checkpointing)");
  dmrg->add_option("--test", dm_test, "test CSV");
  dmrg->add_option("--f", dm_f, "polynomial feature dimension");
  dmrg->add_option("--chi", dm_chi, "bond dimension");
  dmrg->add_option("--lambda", dm_cfg.lambda, "ridge parameter");
  dmrg->add_option("--sweeps", dm_cfg.sweeps, "full sweeps");
  dmrg->add_option("--cg-steps", dm_cfg.cg_steps, "CG steps per core");
  dmrg->add_option("--init", dm_init, "inversion | random | path to an MPS file");
  dmrg->add_option("--seed", dm_seed, "seed for random init");
  dmrg->add_option("--out", dm_out, "write the trained MPS");
  dmrg->add_option("--trace", dm_trace, "write the sweep trace CSV");

  // mnist
  auto* mn = app.add_subcommand("mnist", "Train a labeled MPS classifier on MNIST");
  std::string mn_dir, mn_out = "mnist_out";
  std::size_t mn_chi = 6, mn_ntr = 1024, mn_pool = 2, mn_test_count = 10000;
  double mn_noise = 0.0;
  std::uint64_t mn_seed = 1;
  TrainConfig mn_cfg;
  mn_cfg.sweeps = 100;
  mn_cfg.loss_kind = LossKind::cross_entropy;
  mn_cfg.checkpoint = CheckpointPolicy::last;
  mn_cfg.early_stop_tol = 0.0;
  mn->add_option("--data-dir", mn_dir, "directory with the four IDX files (optionally .gz)")->required();
  mn->add_option("--chi", mn_chi, "bond dimension");
  mn->add_option("--ntr", mn_ntr, "training images");
  mn->add_option("--pool", mn_pool, "average-pooling factor");
  mn->add_option("--test-count", mn_test_count, "test images");
  mn->add_option("--noise", mn_noise, "fraction of corrupted training labels");
  mn->add_option("--sweeps", mn_cfg.sweeps, "full sweeps");
  mn->add_option("--cg-steps", mn_cfg.cg_steps, "CG steps per core");
  mn->add_option("--lambda", mn_cfg.lambda, "ridge parameter");
  mn->add_option("--seed", mn_seed, "seed for subsampling, noise and init");
  mn->add_option("--out", mn_out, "output directory");

  // scan
  auto* scan = app.add_subcommand("scan", "Replicated scans over chi, training size, epsilon or label noise");
  std::string sc_config, sc_scenario = "custom", sc_chi, sc_ntr, sc_eps, sc_noise, sc_method, sc_kind, sc_out,
                         sc_mnist_dir;
  std::uint64_t sc_seed = 0;
  std::size_t sc_reps = 0, sc_workers = 0, sc_sweeps = 0, sc_cg = 0;
  double sc_lambda = 0;
  bool sc_full = false;
  scan->add_option("--config", sc_config, "JSON config (a previous config.json manifest reruns the scan)");
  auto* o_scenario = scan->add_option("--scenario", sc_scenario, "fig2|fig3|fig4|fig5|fig6|fig7|fig8|fig9|custom");
  auto* o_seed = scan->add_option("--seed", sc_seed, "base training seed");
  auto* o_reps = scan->add_option("--replicates", sc_reps, "training sets per point");
  auto* o_chi = scan->add_option("--chi", sc_chi, "bond dimensions, e.g. 2..27");
  auto* o_ntr = scan->add_option("--ntr", sc_ntr, "training sizes, e.g. 50:800:50");
  auto* o_eps = scan->add_option("--eps", sc_eps, "complexities, e.g. 0.1,0.2,0.3");
  auto* o_noise = scan->add_option("--noise", sc_noise, "label-noise fractions (MNIST)");
  auto* o_method = scan->add_option("--method", sc_method, "inversion|dmrg|both");
  auto* o_kind = scan->add_option("--scan", sc_kind, "bond|trainsize|epsilon|noise");
  auto* o_out = scan->add_option("--out", sc_out, "output directory");
  auto* o_workers = scan->add_option("--workers", sc_workers, "worker threads (0: all cores)");
  auto* o_lambda = scan->add_option("--lambda", sc_lambda, "ridge parameter");
  auto* o_sweeps = scan->add_option("--sweeps", sc_sweeps, "DMRG sweeps");
  auto* o_cg = scan->add_option("--cg-steps", sc_cg, "CG steps per core");
  auto* o_mnist = scan->add_option("--mnist-dir", sc_mnist_dir, "MNIST IDX directory");
  auto* o_full = scan->add_flag("--full", sc_full, "large replicate counts (100 inversion / 32 DMRG)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) {
      spec.validate();
      const Mps target = build_target_mps(spec);
      std::optional<NormalizationStats> stats;
      if (!gen_stats_from.empty()) stats = label_statistics(read_dataset_csv(gen_stats_from).raw_labels());
      const Dataset d = generate_dataset(target, gen_samples, gen_seed, stats);
      write_dataset_csv(gen_out, d);
      if (!gen_target_out.empty()) save_mps(gen_target_out, target);
      std::printf("wrote %zu samples to %s (label mean %.6g, std %.6g)\n", d.size(), gen_out.c_str(),
                  d.normalization.mean, d.normalization.std);
      return kExitOk;
    }

    if (*exact) {
      const FeatureMap map = FeatureMap::polynomial(ex_f);
      const Dataset train_data = read_dataset_csv(ex_train);
      const SampleSet train_set = make_regression_set(train_data, map);
      const SampleSet test_set = maybe_set(ex_test, map);
      const DenseTensor full = solve_full_weight(build_design_system(train_data, map, ex_lambda, 100'000));
      const auto chis = parse_size_list(ex_chi);
      if (!ex_out.empty() && chis.size() != 1) throw InvalidArgument("--out needs a single --chi");
      for (std::size_t chi : chis) {
        const Compression c = compress(full, chi);
        std::printf("chi=%zu discarded=%.6e ", chi, c.discarded_weight);
        report_losses("", data_loss(c.mps, train_set, LossKind::mse),
                      test_set.empty() ? NAN : data_loss(c.mps, test_set, LossKind::mse));
        if (!ex_out.empty()) save_mps(ex_out, c.mps);
      }
      return kExitOk;
    }

    if (*dmrg) {
      const FeatureMap map = FeatureMap::polynomial(dm_f);
      const Dataset train_data = read_dataset_csv(dm_train);
      const SampleSet train_set = make_regression_set(train_data, map);
      const SampleSet val_set = maybe_set(dm_val, map);
      const SampleSet test_set = maybe_set(dm_test, map);
      std::optional<Mps> init;
      if (dm_init == "inversion") {
        init = inversion_and_compression(train_data, map, dm_cfg.lambda, dm_chi).mps;
      } else if (dm_init == "random") {
        init = random_init(train_data.sites, dm_f, dm_chi, 1.0 / std::sqrt(static_cast<double>(dm_f * dm_chi)), dm_seed);
      } else {
        init = load_mps(dm_init);
      }
      if (val_set.empty()) dm_cfg.checkpoint = CheckpointPolicy::last;
      const TrainResult res = train(*init, train_set, val_set, test_set, dm_cfg);
      for (const auto& s : res.trace.sweeps) {
        std::printf("sweep %3zu train=%.6e val=%.6e test=%.6e (%.2fs)\n", s.sweep, s.train_loss, s.val_loss,
                    s.test_loss, s.seconds);
      }
      std::printf("checkpoint sweep %zu, %zu stalls, %zu monotonicity violations\n", res.trace.best_validation_sweep,
                  res.trace.stall_events, res.trace.monotonicity_violations);
      if (!dm_out.empty()) save_mps(dm_out, res.model);
      if (!dm_trace.empty()) res.trace.write_csv(dm_trace);
      return kExitOk;
    }

    if (*mn) {
      auto find = [&](const std::string& stem) {
        fs::path p = fs::path(mn_dir) / stem;
        if (fs::exists(p)) return p;
        p += ".gz";
        if (fs::exists(p)) return p;
        throw IoError("missing MNIST file '" + (fs::path(mn_dir) / stem).string() + "' (or .gz)");
      };
      const FeatureMap map = FeatureMap::trigonometric();
      ImageDataset pool = preprocess(load_idx(find("train-images-idx3-ubyte"), find("train-labels-idx1-ubyte")), mn_pool);
      const ImageDataset test = take(
          preprocess(load_idx(find("t10k-images-idx3-ubyte"), find("t10k-labels-idx1-ubyte")), mn_pool), mn_test_count);
      pool = take(pool, mn_ntr);
      if (mn_noise > 0.0) pool.labels = add_label_noise(pool.labels, mn_noise, pool.classes, derive_seed(mn_seed, 3));
      const SampleSet train_set = make_classification_set(pool, map);
      const SampleSet test_set = make_classification_set(test, map);
      const std::size_t sites = pool.pixels_per_image();
      const Mps init = random_init_labeled(sites, map.dim, mn_chi, LabelSite{default_label_site(sites), pool.classes},
                                           1.0 / std::sqrt(static_cast<double>(map.dim * mn_chi)), mn_seed);
      const TrainResult res = train(init, train_set, SampleSet{}, test_set, mn_cfg);
      fs::create_directories(mn_out);
      save_mps(fs::path(mn_out) / "model.mps", res.model);
      res.trace.write_csv((fs::path(mn_out) / "trace.csv").string());
      write_predictions_csv(fs::path(mn_out) / "predictions.csv", res.model, test_set);
      std::printf("train_accuracy=%.4f test_accuracy=%.4f train_loss=%.6g test_loss=%.6g clamped=%zu\n",
                  accuracy(res.model, train_set), accuracy(res.model, test_set),
                  data_loss(res.model, train_set, LossKind::cross_entropy),
                  data_loss(res.model, test_set, LossKind::cross_entropy), res.trace.clamped_probabilities);
      return kExitOk;
    }

    if (*scan) {
      nlohmann::json j = nlohmann::json::object();
      if (!sc_config.empty()) {
        std::ifstream is(sc_config);
        if (!is) throw IoError("cannot open config '" + sc_config + "'");
        std::stringstream ss;
        ss << is.rdbuf();
        try {
          j = nlohmann::json::parse(ss.str());
        } catch (const nlohmann::json::exception& e) {
          throw FormatError(std::string("invalid config JSON: ") + e.what());
        }
      }
      // explicit flags win over the file
      if (o_scenario->count()) j["scenario"] = sc_scenario;
      if (o_full->count()) j["full"] = sc_full;
      if (o_full->count() && !o_reps->count()) j.erase("replicates");
      if (o_seed->count()) j["seed"] = sc_seed;
      if (o_reps->count()) j["replicates"] = sc_reps;
      if (o_chi->count()) j["chi"] = parse_size_list(sc_chi);
      if (o_ntr->count()) j["ntr"] = parse_size_list(sc_ntr);
      if (o_eps->count()) j["eps"] = parse_list(sc_eps);
      if (o_noise->count()) j["noise"] = parse_list(sc_noise);
      if (o_method->count()) j["method"] = sc_method;
      if (o_kind->count()) j["scan"] = sc_kind;
      if (o_out->count()) j["out"] = sc_out;
      if (o_workers->count()) j["workers"] = sc_workers;
      if (o_lambda->count()) j["train"]["lambda"] = sc_lambda;
      if (o_sweeps->count()) j["train"]["sweeps"] = sc_sweeps;
      if (o_cg->count()) j["train"]["cg_steps"] = sc_cg;
      if (o_mnist->count()) j["mnist"]["dir"] = sc_mnist_dir;

      ExperimentConfig cfg = config_from_json(j.dump());
      cfg.validate();
      const ScanResult r = run_scan(cfg);
      emit_outputs(r, cfg);
      std::printf("%zu rows (%zu failed) -> %s\n", r.raw.size(), r.failed, cfg.out.c_str());
      if (r.axis_name == "chi") {
        for (const auto& s : r.series) {
          if (s.metric.find("test") == std::string::npos || s.metric.find("accuracy") != std::string::npos) continue;
          const OptimalChi o = find_optimal_chi(s);
          std::printf("%-32s chi*=%zu mean=%.6e std=%.3e\n", s.name.c_str(), o.chi, o.mean, o.std);
        }
      }
      return kExitOk;
    }
  } catch (const ScanAborted& e) {
    std::fprintf(stderr, "scan aborted: %s\n", e.what());
    return kExitAborted;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return kExitValidation;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "dimension error: %s\n", e.what());
    return kExitValidation;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "domain error: %s\n", e.what());
    return kExitValidation;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitOk;
}
