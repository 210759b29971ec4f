#include "mpslab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mpslab/classifier.hpp"
#include "mpslab/errors.hpp"
#include "mpslab/exact_solver.hpp"
#include "mpslab/svg_plot.hpp"

namespace mpslab {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "mpslab 0.1.0";

std::vector<std::size_t> chi_range(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> v;
  for (std::size_t c = lo; c <= hi; ++c) v.push_back(c);
  return v;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::filesystem::path idx_file(const std::string& dir, const std::string& stem) {
  const std::filesystem::path base = std::filesystem::path(dir) / stem;
  if (std::filesystem::exists(base)) return base;
  std::filesystem::path gz = base;
  gz += ".gz";
  if (std::filesystem::exists(gz)) return gz;
  throw IoError("missing MNIST file '" + base.string() + "' (or .gz)");
}

// Grid job: one replicate at one (ntr, ε, noise) and a set of χ values.
struct Job {
  std::size_t replicate = 0;
  std::size_t ntr = 0;
  double epsilon = 0.0;
  double noise = 0.0;
  std::vector<std::size_t> chis;
};

struct SyntheticContext {
  Mps target;
  SampleSet test;
  NormalizationStats stats;
};

std::vector<std::string> synthetic_columns(Method m) {
  std::vector<std::string> c{"inv_train", "inv_test", "inv_discarded"};
  if (m != Method::inversion) {
    for (const char* s : {"dmrg_train", "dmrg_val", "dmrg_test", "dmrg_best_sweep", "dmrg_sweeps",
                          "dmrg_violations", "dmrg_stalls"})
      c.push_back(s);
  }
  return c;
}

std::vector<std::string> mnist_columns() {
  return {"train_loss", "test_loss", "train_accuracy", "test_accuracy", "test_error", "corrupted", "violations",
          "sweeps"};
}

std::vector<std::string> series_metrics(const ExperimentConfig& cfg) {
  if (cfg.data == DataKind::mnist) {
    if (cfg.scan == ScanKind::noise) return {"test_error", "train_accuracy"};
    return {"test_accuracy", "train_accuracy", "test_loss", "train_loss"};
  }
  switch (cfg.method) {
    case Method::inversion: return {"inv_test", "inv_train"};
    case Method::dmrg: return {"dmrg_test", "dmrg_train"};
    case Method::both: return {"inv_test", "dmrg_test", "dmrg_train"};
  }
  return {};
}

double axis_value(const ScanResult& scan, const RawRow& r) {
  return scan.axis_name == "ntr" ? static_cast<double>(r.ntr) : static_cast<double>(r.chi);
}

std::string group_of(const ExperimentConfig& cfg, ScanKind kind, const RawRow& r) {
  std::vector<std::string> parts;
  if (kind == ScanKind::trainsize) {
    if (cfg.chi.size() > 1) parts.push_back("chi=" + std::to_string(r.chi));
  } else if (cfg.ntr.size() > 1) {
    parts.push_back("ntr=" + std::to_string(r.ntr));
  }
  if (cfg.eps.size() > 1) parts.push_back("eps=" + short_num(r.epsilon));
  if (cfg.noise.size() > 1) parts.push_back("noise=" + short_num(r.noise));
  std::string g;
  for (const auto& p : parts) g += (g.empty() ? "" : ",") + p;
  return g;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  return out;
}

std::vector<RawRow> run_synthetic_job(const ExperimentConfig& cfg, const Job& job, const SyntheticContext& ctx) {
  const FeatureMap map = FeatureMap::polynomial(cfg.target.f);
  const Dataset train_data = generate_dataset(ctx.target, job.ntr, cfg.training_seed(job.replicate), ctx.stats);
  const SampleSet train_set = make_regression_set(train_data, map);
  const DesignSystem sys = build_design_system(train_data, map, cfg.train.lambda, 100'000);
  const DenseTensor full = solve_full_weight(sys);

  std::optional<SampleSet> validation;
  if (cfg.method != Method::inversion) {
    const Dataset val = generate_dataset(ctx.target, cfg.n_val, cfg.validation_seed(job.replicate), ctx.stats);
    validation = make_regression_set(val, map);
  }

  std::vector<RawRow> rows;
  for (std::size_t chi : job.chis) {
    RawRow row;
    row.chi = chi;
    const Compression comp = compress(full, chi);
    row.values.push_back(data_loss(comp.mps, train_set, LossKind::mse));
    row.values.push_back(data_loss(comp.mps, ctx.test, LossKind::mse));
    row.values.push_back(comp.discarded_weight);
    if (validation) {
      TrainConfig tc = cfg.train;
      tc.loss_kind = LossKind::mse;
      const TrainResult res = train(comp.mps, train_set, *validation, ctx.test, tc);
      row.values.push_back(data_loss(res.model, train_set, LossKind::mse));
      row.values.push_back(data_loss(res.model, *validation, LossKind::mse));
      row.values.push_back(data_loss(res.model, ctx.test, LossKind::mse));
      row.values.push_back(static_cast<double>(res.trace.best_validation_sweep));
      row.values.push_back(static_cast<double>(res.trace.sweeps.size() - 1));
      row.values.push_back(static_cast<double>(res.trace.monotonicity_violations));
      row.values.push_back(static_cast<double>(res.trace.stall_events));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct MnistContext {
  ImageDataset train;
  ImageDataset test;
  SampleSet test_set;
};

std::vector<RawRow> run_mnist_job(const ExperimentConfig& cfg, const Job& job, const MnistContext& ctx) {
  const FeatureMap map = FeatureMap::trigonometric();
  if (job.ntr > ctx.train.count) throw InvalidArgument("N_tr exceeds the MNIST training pool");

  std::vector<std::size_t> order(ctx.train.count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.training_seed(job.replicate));
  std::shuffle(order.begin(), order.end(), rng);

  ImageDataset subset;
  subset.count = job.ntr;
  subset.height = ctx.train.height;
  subset.width = ctx.train.width;
  subset.classes = ctx.train.classes;
  for (std::size_t k = 0; k < job.ntr; ++k) {
    const auto img = ctx.train.image(order[k]);
    subset.pixels.insert(subset.pixels.end(), img.begin(), img.end());
    subset.labels.push_back(ctx.train.labels[order[k]]);
  }
  std::size_t corrupted = 0;
  if (job.noise > 0.0) {
    const auto noisy = add_label_noise(subset.labels, job.noise, subset.classes, cfg.noise_seed(job.replicate));
    for (std::size_t k = 0; k < noisy.size(); ++k) corrupted += noisy[k] != subset.labels[k];
    subset.labels = noisy;
  }
  const SampleSet train_set = make_classification_set(subset, map);
  const std::size_t sites = subset.pixels_per_image();
  const LabelSite label{default_label_site(sites), subset.classes};

  std::vector<RawRow> rows;
  for (std::size_t chi : job.chis) {
    const double scale = cfg.mnist.init_scale > 0.0 ? cfg.mnist.init_scale
                                                    : 1.0 / std::sqrt(static_cast<double>(map.dim * chi));
    const Mps init = random_init_labeled(sites, map.dim, chi, label, scale, cfg.init_seed(job.replicate, chi));
    TrainConfig tc = cfg.train;
    tc.loss_kind = LossKind::cross_entropy;
    tc.checkpoint = CheckpointPolicy::last;
    const TrainResult res = train(init, train_set, SampleSet{}, SampleSet{}, tc);
    RawRow row;
    row.chi = chi;
    const double test_acc = accuracy(res.model, ctx.test_set);
    row.values = {data_loss(res.model, train_set, LossKind::cross_entropy),
                  data_loss(res.model, ctx.test_set, LossKind::cross_entropy),
                  accuracy(res.model, train_set),
                  test_acc,
                  1.0 - test_acc,
                  static_cast<double>(corrupted),
                  static_cast<double>(res.trace.monotonicity_violations),
                  static_cast<double>(res.trace.sweeps.size() - 1)};
    rows.push_back(std::move(row));
  }
  return rows;
}

void check_success(const ScanResult& scan, const ExperimentConfig& cfg, ScanKind kind) {
  std::map<std::pair<std::string, double>, std::pair<std::size_t, std::size_t>> tally;  // ok, total
  for (const auto& r : scan.raw) {
    auto& t = tally[{group_of(cfg, kind, r), axis_value(scan, r)}];
    t.first += r.ok;
    ++t.second;
  }
  for (const auto& [key, t] : tally) {
    if (static_cast<double>(t.first) < cfg.min_success * static_cast<double>(t.second)) {
      std::string first_error;
      for (const auto& r : scan.raw) {
        if (!r.ok) {
          first_error = r.error;
          break;
        }
      }
      throw ScanAborted("only " + std::to_string(t.first) + " of " + std::to_string(t.second) +
                        " replicates succeeded at " + scan.axis_name + "=" + short_num(key.second) +
                        (key.first.empty() ? "" : " (" + key.first + ")") + "; first error: " + first_error);
    }
  }
}

ScanResult run_grid(const ExperimentConfig& cfg, ScanKind kind) {
  cfg.validate();
  ScanResult scan;
  scan.axis_name = kind == ScanKind::trainsize ? "ntr" : "chi";
  const bool per_chi_jobs = cfg.data == DataKind::mnist || cfg.method != Method::inversion;
  scan.columns = cfg.data == DataKind::mnist ? mnist_columns() : synthetic_columns(cfg.method);

  // Shared, read-only state built once before the pool starts.
  std::map<double, SyntheticContext> synthetic;
  std::optional<MnistContext> mnist;
  if (cfg.data == DataKind::synthetic) {
    const FeatureMap map = FeatureMap::polynomial(cfg.target.f);
    for (double e : cfg.eps) {
      TargetSpec spec = cfg.target;
      spec.epsilon = e;
      Mps target = build_target_mps(spec);
      // the shared test set is normalized by its own statistics
      const Dataset test = generate_dataset(target, cfg.n_test, cfg.test_seed());
      synthetic.emplace(e, SyntheticContext{std::move(target), make_regression_set(test, map), test.normalization});
    }
  } else {
    MnistContext ctx;
    ctx.train = preprocess(load_idx(idx_file(cfg.mnist.dir, "train-images-idx3-ubyte"),
                                    idx_file(cfg.mnist.dir, "train-labels-idx1-ubyte")),
                           cfg.mnist.pool);
    ctx.test = take(preprocess(load_idx(idx_file(cfg.mnist.dir, "t10k-images-idx3-ubyte"),
                                        idx_file(cfg.mnist.dir, "t10k-labels-idx1-ubyte")),
                               cfg.mnist.pool),
                    cfg.mnist.test_count);
    ctx.test_set = make_classification_set(ctx.test, FeatureMap::trigonometric());
    mnist = std::move(ctx);
  }

  std::vector<Job> jobs;
  for (std::size_t ntr : cfg.ntr)
    for (double e : cfg.eps)
      for (double p : cfg.noise)
        for (std::size_t r = 0; r < cfg.replicates; ++r) {
          if (per_chi_jobs) {
            for (std::size_t chi : cfg.chi) jobs.push_back({r, ntr, e, p, {chi}});
          } else {
            jobs.push_back({r, ntr, e, p, cfg.chi});
          }
        }

  std::vector<std::vector<RawRow>> results(jobs.size());
  const std::size_t workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    std::vector<RawRow> rows;
    try {
      rows = cfg.data == DataKind::synthetic ? run_synthetic_job(cfg, job, synthetic.at(job.epsilon))
                                             : run_mnist_job(cfg, job, *mnist);
    } catch (const std::exception& e) {
      rows.clear();
      for (std::size_t chi : job.chis) {
        RawRow row;
        row.chi = chi;
        row.ok = false;
        row.error = e.what();
        row.values.assign(scan.columns.size(), std::numeric_limits<double>::quiet_NaN());
        rows.push_back(std::move(row));
      }
    }
    for (auto& row : rows) {
      row.replicate = job.replicate;
      row.seed = cfg.training_seed(job.replicate);
      row.ntr = job.ntr;
      row.epsilon = job.epsilon;
      row.noise = job.noise;
    }
    results[i] = std::move(rows);
  });

  for (auto& rows : results)
    for (auto& row : rows) {
      scan.failed += !row.ok;
      scan.raw.push_back(std::move(row));
    }

  // Deterministic row order: group parameters, axis, replicate.
  std::stable_sort(scan.raw.begin(), scan.raw.end(), [&](const RawRow& a, const RawRow& b) {
    const auto key = [&](const RawRow& r) {
      return std::make_tuple(r.ntr, r.epsilon, r.noise, r.chi, r.replicate);
    };
    if (kind == ScanKind::trainsize) {
      return std::make_tuple(a.chi, a.epsilon, a.noise, a.ntr, a.replicate) <
             std::make_tuple(b.chi, b.epsilon, b.noise, b.ntr, b.replicate);
    }
    return key(a) < key(b);
  });

  std::vector<std::string> groups;
  for (const auto& r : scan.raw) {
    const std::string g = group_of(cfg, kind, r);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  for (const auto& g : groups)
    for (const auto& m : series_metrics(cfg)) {
      Series s;
      s.group = g;
      s.metric = m;
      s.name = g.empty() ? m : g + "/" + m;
      scan.series.push_back(std::move(s));
    }
  // summarize() matches rows to groups through this config
  for (auto& s : scan.series) {
    std::map<double, std::vector<double>> by_axis;
    const auto col = static_cast<std::size_t>(
        std::find(scan.columns.begin(), scan.columns.end(), s.metric) - scan.columns.begin());
    for (const auto& r : scan.raw) {
      if (group_of(cfg, kind, r) != s.group) continue;
      auto& bucket = by_axis[axis_value(scan, r)];
      if (r.ok) bucket.push_back(r.values[col]);
    }
    for (const auto& [x, vals] : by_axis) {
      SummaryPoint p;
      p.axis = x;
      p.n = vals.size();
      if (p.n > 0) {
        p.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(p.n);
        double ss = 0.0;
        for (double v : vals) ss += (v - p.mean) * (v - p.mean);
        p.std = p.n > 1 ? std::sqrt(ss / static_cast<double>(p.n - 1)) : 0.0;
      } else {
        p.mean = p.std = std::numeric_limits<double>::quiet_NaN();
      }
      s.points.push_back(p);
    }
  }

  check_success(scan, cfg, kind);
  return scan;
}

json train_to_json(const TrainConfig& t) {
  return {{"sweeps", t.sweeps},
          {"cg_steps", t.cg_steps},
          {"lambda", t.lambda},
          {"loss", to_string(t.loss_kind)},
          {"checkpoint", to_string(t.checkpoint)},
          {"early_stop_tol", t.early_stop_tol},
          {"armijo_c", t.armijo_c},
          {"max_halvings", t.max_halvings}};
}

}  // namespace

std::string to_string(ScanKind k) {
  switch (k) {
    case ScanKind::bond: return "bond";
    case ScanKind::trainsize: return "trainsize";
    case ScanKind::epsilon: return "epsilon";
    case ScanKind::noise: return "noise";
  }
  return "?";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::inversion: return "inversion";
    case Method::dmrg: return "dmrg";
    case Method::both: return "both";
  }
  return "?";
}

std::string to_string(DataKind d) { return d == DataKind::synthetic ? "synthetic" : "mnist"; }

ScanKind scan_kind_from_string(const std::string& s) {
  if (s == "bond") return ScanKind::bond;
  if (s == "trainsize") return ScanKind::trainsize;
  if (s == "epsilon") return ScanKind::epsilon;
  if (s == "noise") return ScanKind::noise;
  throw InvalidArgument("unknown scan kind '" + s + "'");
}

Method method_from_string(const std::string& s) {
  if (s == "inversion") return Method::inversion;
  if (s == "dmrg") return Method::dmrg;
  if (s == "both") return Method::both;
  throw InvalidArgument("unknown method '" + s + "'");
}

DataKind data_kind_from_string(const std::string& s) {
  if (s == "synthetic") return DataKind::synthetic;
  if (s == "mnist") return DataKind::mnist;
  throw InvalidArgument("unknown data kind '" + s + "'");
}

std::uint64_t ExperimentConfig::test_seed() const { return derive_seed(seed, 0x7e575eedULL); }
std::uint64_t ExperimentConfig::validation_seed(std::size_t r) const { return derive_seed(seed + r, 0x7a1dULL); }
std::uint64_t ExperimentConfig::noise_seed(std::size_t r) const { return derive_seed(seed + r, 0x0153ULL); }
std::uint64_t ExperimentConfig::init_seed(std::size_t r, std::size_t c) const {
  return derive_seed(derive_seed(seed + r, 0x1417ULL), c);
}

void ExperimentConfig::validate() const {
  if (ntr.empty() || eps.empty() || chi.empty() || noise.empty()) throw InvalidArgument("scan lists must be non-empty");
  if (replicates < 1) throw InvalidArgument("replicates must be >= 1");
  for (auto n : ntr)
    if (n < 2) throw InvalidArgument("N_tr must be >= 2");
  for (auto c : chi)
    if (c < 1) throw InvalidArgument("chi must be >= 1");
  for (double e : eps) {
    TargetSpec t = target;
    t.epsilon = e;
    t.validate();
  }
  for (double p : noise)
    if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("noise fraction must lie in [0, 1)");
  if (n_test < 2) throw InvalidArgument("test set needs at least two samples");
  if (method != Method::inversion && data == DataKind::synthetic && n_val < 1)
    throw InvalidArgument("DMRG scans need a validation set");
  if (!(min_success > 0.0 && min_success <= 1.0)) throw InvalidArgument("min_success must lie in (0, 1]");
  if (scan == ScanKind::noise && data != DataKind::mnist) throw InvalidArgument("noise scans run on MNIST");
  if (data == DataKind::synthetic) {
    for (double p : noise)
      if (p != 0.0) throw InvalidArgument("label noise applies to MNIST only");
  } else {
    if (method != Method::dmrg) throw InvalidArgument("MNIST supports the dmrg method only");
    if (mnist.dir.empty()) throw InvalidArgument("MNIST scans need a data directory");
  }
  train.validate();

  std::set<std::uint64_t> seen;
  for (std::size_t r = 0; r < replicates; ++r) seen.insert(training_seed(r));
  auto claim = [&](std::uint64_t s, const char* what) {
    if (!seen.insert(s).second) throw InvalidArgument(std::string(what) + " seed collides with another seed");
  };
  claim(test_seed(), "test");
  if (method != Method::inversion) {
    for (std::size_t r = 0; r < replicates; ++r) claim(validation_seed(r), "validation");
  }
}

ExperimentConfig scenario_preset(const std::string& scenario, bool full) {
  ExperimentConfig c;
  c.scenario = scenario;
  c.full = full;
  c.chi = chi_range(2, 27);
  const std::size_t inversion_reps = full ? 100 : 8;
  const std::size_t dmrg_reps = full ? 32 : 8;
  std::vector<double> eps_wide;
  for (int k = 1; k <= 10; ++k) eps_wide.push_back(k / 10.0);

  auto mnist = [&](ScanKind kind) {
    c.scan = kind;
    c.method = Method::dmrg;
    c.data = DataKind::mnist;
    c.ntr = {1024};
    c.eps = {0.3};
    c.chi = chi_range(2, 20);
    c.replicates = 1;
    c.train.sweeps = 100;
    c.train.cg_steps = 5;
    c.train.loss_kind = LossKind::cross_entropy;
    c.train.checkpoint = CheckpointPolicy::last;
    c.train.early_stop_tol = 0.0;
    c.n_val = 0;
  };

  if (scenario == "fig2") {
    c.ntr.clear();
    for (std::size_t n = 50; n <= 800; n += 50) c.ntr.push_back(n);
    c.replicates = inversion_reps;
  } else if (scenario == "fig3") {
    c.scan = ScanKind::epsilon;
    c.eps = {0.1, 0.2, 0.3};
    c.replicates = inversion_reps;
  } else if (scenario == "fig4") {
    c.method = Method::both;
    c.replicates = dmrg_reps;
  } else if (scenario == "fig6") {
    c.method = Method::both;
    c.eps = {1.0};
    c.replicates = dmrg_reps;
  } else if (scenario == "fig7") {
    c.scan = ScanKind::epsilon;
    c.eps = eps_wide;
    c.replicates = inversion_reps;
  } else if (scenario == "fig8") {
    c.scan = ScanKind::epsilon;
    c.method = Method::both;
    c.eps = eps_wide;
    c.replicates = dmrg_reps;
  } else if (scenario == "fig5") {
    mnist(ScanKind::bond);
  } else if (scenario == "fig9") {
    mnist(ScanKind::noise);
    c.noise = {0.0, 0.1, 0.2};
  } else if (scenario == "custom") {
    c.replicates = inversion_reps;
  } else {
    throw InvalidArgument("unknown scenario '" + scenario + "'");
  }
  c.target.epsilon = c.eps.front();
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  json j{{"scenario", c.scenario},
         {"scan", to_string(c.scan)},
         {"method", to_string(c.method)},
         {"data", to_string(c.data)},
         {"target",
          {{"sites", c.target.sites},
           {"f", c.target.f},
           {"epsilon", c.target.epsilon},
           {"chi_t", c.target.chi_t},
           {"apply_unitary", c.target.apply_unitary},
           {"per_site_unitary", c.target.per_site_unitary},
           {"seed", c.target.seed}}},
         {"ntr", c.ntr},
         {"eps", c.eps},
         {"chi", c.chi},
         {"noise", c.noise},
         {"replicates", c.replicates},
         {"train", train_to_json(c.train)},
         {"seed", c.seed},
         {"n_test", c.n_test},
         {"n_val", c.n_val},
         {"workers", c.workers},
         {"min_success", c.min_success},
         {"mnist",
          {{"dir", c.mnist.dir},
           {"pool", c.mnist.pool},
           {"test_count", c.mnist.test_count},
           {"init_scale", c.mnist.init_scale}}},
         {"out", c.out},
         {"full", c.full}};
  return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid config JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config JSON must be an object");
  try {
    ExperimentConfig c = scenario_preset(j.value("scenario", std::string("custom")), j.value("full", false));
    auto get = [&](const json& obj, const char* key, auto& field) {
      if (obj.contains(key)) field = obj.at(key).get<std::decay_t<decltype(field)>>();
    };
    if (j.contains("scan")) c.scan = scan_kind_from_string(j.at("scan").get<std::string>());
    if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
    if (j.contains("data")) c.data = data_kind_from_string(j.at("data").get<std::string>());
    if (j.contains("target")) {
      const json& t = j.at("target");
      get(t, "sites", c.target.sites);
      get(t, "f", c.target.f);
      get(t, "epsilon", c.target.epsilon);
      get(t, "chi_t", c.target.chi_t);
      get(t, "apply_unitary", c.target.apply_unitary);
      get(t, "per_site_unitary", c.target.per_site_unitary);
      get(t, "seed", c.target.seed);
    }
    get(j, "ntr", c.ntr);
    get(j, "eps", c.eps);
    get(j, "chi", c.chi);
    get(j, "noise", c.noise);
    get(j, "replicates", c.replicates);
    if (j.contains("train")) {
      const json& t = j.at("train");
      get(t, "sweeps", c.train.sweeps);
      get(t, "cg_steps", c.train.cg_steps);
      get(t, "lambda", c.train.lambda);
      get(t, "early_stop_tol", c.train.early_stop_tol);
      get(t, "armijo_c", c.train.armijo_c);
      get(t, "max_halvings", c.train.max_halvings);
      if (t.contains("loss")) {
        const auto s = t.at("loss").get<std::string>();
        if (s == "mse") c.train.loss_kind = LossKind::mse;
        else if (s == "cross_entropy") c.train.loss_kind = LossKind::cross_entropy;
        else throw InvalidArgument("unknown loss '" + s + "'");
      }
      if (t.contains("checkpoint")) {
        const auto s = t.at("checkpoint").get<std::string>();
        if (s == "best_validation") c.train.checkpoint = CheckpointPolicy::best_validation;
        else if (s == "last") c.train.checkpoint = CheckpointPolicy::last;
        else throw InvalidArgument("unknown checkpoint policy '" + s + "'");
      }
    }
    get(j, "seed", c.seed);
    get(j, "n_test", c.n_test);
    get(j, "n_val", c.n_val);
    get(j, "workers", c.workers);
    get(j, "min_success", c.min_success);
    if (j.contains("mnist")) {
      const json& m = j.at("mnist");
      get(m, "dir", c.mnist.dir);
      get(m, "pool", c.mnist.pool);
      get(m, "test_count", c.mnist.test_count);
      get(m, "init_scale", c.mnist.init_scale);
    }
    get(j, "out", c.out);
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad config field: ") + e.what());
  }
}

const Series& ScanResult::find(const std::string& name) const {
  for (const auto& s : series)
    if (s.name == name) return s;
  throw InvalidArgument("no series named '" + name + "'");
}

ScanResult run_bond_scan(const ExperimentConfig& cfg) { return run_grid(cfg, ScanKind::bond); }
ScanResult run_trainsize_scan(const ExperimentConfig& cfg) { return run_grid(cfg, ScanKind::trainsize); }
ScanResult run_epsilon_scan(const ExperimentConfig& cfg) { return run_grid(cfg, ScanKind::epsilon); }

ScanResult run_noise_scan(const ExperimentConfig& cfg) {
  if (cfg.data != DataKind::mnist) throw InvalidArgument("noise scans run on MNIST");
  return run_grid(cfg, ScanKind::noise);
}

ScanResult run_scan(const ExperimentConfig& cfg) {
  switch (cfg.scan) {
    case ScanKind::bond: return run_bond_scan(cfg);
    case ScanKind::trainsize: return run_trainsize_scan(cfg);
    case ScanKind::epsilon: return run_epsilon_scan(cfg);
    case ScanKind::noise: return run_noise_scan(cfg);
  }
  throw InternalError("unreachable scan kind");
}

OptimalChi find_optimal_chi(const Series& s) {
  OptimalChi best;
  bool have = false;
  for (const auto& p : s.points) {
    if (!std::isfinite(p.mean)) continue;
    // points are in ascending χ, so strict < keeps the smaller χ on ties
    if (!have || p.mean < best.mean) {
      best = {static_cast<std::size_t>(p.axis), p.mean, p.std};
      have = true;
    }
  }
  if (!have) throw InvalidArgument("series '" + s.name + "' has no finite points");
  return best;
}

OptimalChi find_optimal_chi(const ScanResult& scan) {
  if (scan.axis_name != "chi") throw InvalidArgument("optimal chi needs a bond-dimension scan");
  if (scan.series.empty()) throw InvalidArgument("scan has no series");
  return find_optimal_chi(scan.series.front());
}

std::vector<SummaryPoint> summarize(const ScanResult& scan, const std::string& column, const std::string& group) {
  for (const auto& s : scan.series)
    if (s.metric == column && s.group == group) return s.points;
  throw InvalidArgument("no series for column '" + column + "' in group '" + group + "'");
}

std::string raw_csv(const ScanResult& scan) {
  std::ostringstream os;
  os << "replicate,seed,ntr,epsilon,noise,chi,status";
  for (const auto& c : scan.columns) os << ',' << c;
  os << ",error\n";
  for (const auto& r : scan.raw) {
    os << r.replicate << ',' << r.seed << ',' << r.ntr << ',' << fmt(r.epsilon) << ',' << fmt(r.noise) << ','
       << r.chi << ',' << (r.ok ? "ok" : "failed");
    for (double v : r.values) os << ',' << fmt(v);
    std::string err = r.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << ",\"" << err << "\"\n";
  }
  return os.str();
}

void emit_outputs(const ScanResult& scan, const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");

  auto write = [](const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << text;
    if (!os) throw IoError("failed writing '" + path.string() + "'");
  };
  auto summary_text = [&](const Series& s) {
    std::string t = "axis,mean,std,n\n";
    for (const auto& p : s.points) t += fmt(p.axis) + "," + fmt(p.mean) + "," + fmt(p.std) + "," + std::to_string(p.n) + "\n";
    return t;
  };

  write(dir / "raw.csv", raw_csv(scan));
  if (!scan.series.empty()) write(dir / "summary.csv", summary_text(scan.series.front()));
  for (const auto& s : scan.series) write(dir / ("summary_" + sanitize(s.name) + ".csv"), summary_text(s));

  if (scan.axis_name == "chi") {
    std::string t = "group,metric,chi_star,mean,std\n";
    for (const auto& s : scan.series) {
      if (s.metric.find("test") == std::string::npos || s.metric.find("accuracy") != std::string::npos) continue;
      if (std::none_of(s.points.begin(), s.points.end(), [](const SummaryPoint& p) { return std::isfinite(p.mean); }))
        continue;
      const OptimalChi o = find_optimal_chi(s);
      t += "\"" + s.group + "\"," + s.metric + "," + std::to_string(o.chi) + "," + fmt(o.mean) + "," + fmt(o.std) + "\n";
    }
    write(dir / "optimal_chi.csv", t);
  }

  std::vector<PlotSeries> plot;
  for (const auto& s : scan.series) {
    PlotSeries p;
    p.name = s.name;
    for (const auto& pt : s.points) {
      p.x.push_back(pt.axis);
      p.y.push_back(pt.mean);
      p.band.push_back(pt.std);
    }
    plot.push_back(std::move(p));
  }
  PlotOptions opt;
  opt.title = cfg.scenario + ": " + to_string(cfg.scan) + " scan (mean, ±σ)";
  opt.x_label = scan.axis_name == "chi" ? "bond dimension χ" : "training samples N_tr";
  opt.y_label = cfg.data == DataKind::mnist ? "value" : "loss";
  opt.log_y = cfg.data == DataKind::synthetic;
  write_svg(dir / "figure.svg", plot, opt);

  json manifest = json::parse(config_to_json(cfg));
  json seeds;
  std::vector<std::uint64_t> training, validation, noise;
  for (std::size_t r = 0; r < cfg.replicates; ++r) {
    training.push_back(cfg.training_seed(r));
    if (cfg.method != Method::inversion && cfg.data == DataKind::synthetic) validation.push_back(cfg.validation_seed(r));
    if (cfg.data == DataKind::mnist) noise.push_back(cfg.noise_seed(r));
  }
  seeds["training"] = training;
  seeds["test"] = cfg.test_seed();
  seeds["validation"] = validation;
  seeds["noise"] = noise;
  seeds["target"] = cfg.target.seed;
  manifest["seeds"] = seeds;
  manifest["software"] = kVersion;
  manifest["normalization"] = "test set normalized by its own statistics; the same statistics applied to train and validation";
  manifest["feature_map"] = cfg.data == DataKind::mnist ? "trigonometric f=2" : "polynomial f=" + std::to_string(cfg.target.f);
  manifest["failed_rows"] = scan.failed;
  write(dir / "config.json", manifest.dump(2) + "\n");
}

}  // namespace mpslab
