#include "mpslab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "mpslab/feature_map.hpp"

namespace mpslab {

void TargetSpec::validate() const {
  if (sites < 1) throw InvalidArgument("target needs at least one site");
  if (f < 2) throw InvalidArgument("target feature dimension must be >= 2");
  if (chi_t < 2) throw InvalidArgument("target bond dimension chi_t must be >= 2");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("epsilon must be positive");
}

std::vector<double> Dataset::raw_labels() const {
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] * normalization.std + normalization.mean;
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix build_nilpotent(std::size_t size, double epsilon) {
  if (size < 1) throw InvalidArgument("nilpotent matrix size must be >= 1");
  const auto n = static_cast<Eigen::Index>(size);
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) m(i, i + 1) = epsilon;
  return m;
}

Matrix random_orthogonal(std::size_t size, std::uint64_t seed) {
  if (size < 1) throw InvalidArgument("orthogonal matrix size must be >= 1");
  const auto n = static_cast<Eigen::Index>(size);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (r(i, i) < 0.0) q.col(i) *= -1.0;
  }
  return q;
}

Mps build_target_mps(const TargetSpec& spec) {
  spec.validate();
  const std::size_t n = spec.sites, f = spec.f, chi = spec.chi_t;
  const auto L = static_cast<Eigen::Index>(chi);

  std::mt19937_64 rng(derive_seed(spec.seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector g(L), h(L);
  for (Eigen::Index i = 0; i < L; ++i) g(i) = normal(rng);
  for (Eigen::Index i = 0; i < L; ++i) h(i) = normal(rng);

  const Matrix m = build_nilpotent(chi, spec.epsilon);
  std::vector<Matrix> powers(f);
  powers[0] = Matrix::Identity(L, L);
  for (std::size_t k = 1; k < f; ++k) powers[k] = powers[k - 1] * m;

  // slices[k] = U M^k Uᵀ for the given site.
  auto site_slices = [&](std::size_t site) {
    std::vector<Matrix> out(f);
    if (!spec.apply_unitary) {
      out = powers;
      return out;
    }
    const std::uint64_t stream = spec.per_site_unitary ? 1 + site : 1;
    const Matrix u = random_orthogonal(chi, derive_seed(spec.seed, stream));
    for (std::size_t k = 0; k < f; ++k) out[k] = u * powers[k] * u.transpose();
    return out;
  };

  std::vector<DenseTensor> cores;
  for (std::size_t j = 0; j < n; ++j) {
    const auto slices = site_slices(j);
    const bool first = j == 0, last = j + 1 == n;
    const std::size_t l = first ? 1 : chi, r = last ? 1 : chi;
    DenseTensor core({l, f, r});
    for (std::size_t k = 0; k < f; ++k) {
      Matrix slice = slices[k];
      if (first) slice = g.transpose() * slice;
      if (last) slice = slice * h;
      for (std::size_t a = 0; a < l; ++a)
        for (std::size_t b = 0; b < r; ++b)
          core.at({a, k, b}) = slice(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
    cores.push_back(std::move(core));
  }
  return Mps(std::move(cores));
}

std::vector<double> sample_features(std::size_t samples, std::size_t sites, std::uint64_t seed) {
  if (samples < 1 || sites < 1) throw InvalidArgument("sample_features needs T, N >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(samples * sites);
  for (auto& v : x) v = normal(rng);
  return x;
}

NormalizationStats label_statistics(std::span<const double> labels) {
  if (labels.size() < 2) throw DegenerateDataError("label statistics need at least two samples");
  const double n = static_cast<double>(labels.size());
  const double mean = std::accumulate(labels.begin(), labels.end(), 0.0) / n;
  double ss = 0.0;
  for (double y : labels) ss += (y - mean) * (y - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0) || !std::isfinite(sd)) throw DegenerateDataError("labels have zero variance");
  return {mean, sd};
}

Dataset generate_dataset(const Mps& target, std::size_t samples, std::uint64_t seed,
                         std::optional<NormalizationStats> stats) {
  if (target.is_labeled()) throw InvalidArgument("regression target must not carry a label index");
  const std::size_t n = target.size();
  const FeatureMap map = FeatureMap::polynomial(target.phys_dim());
  Dataset d;
  d.sites = n;
  d.seed = seed;
  d.features = sample_features(samples, n, seed);
  d.labels.resize(samples);
  for (std::size_t i = 0; i < samples; ++i) d.labels[i] = evaluate(target, featurize(map, d.row(i)));
  d.normalization = stats ? *stats : label_statistics(d.labels);
  if (!(d.normalization.std > 0.0)) throw DegenerateDataError("normalization std must be positive");
  for (auto& y : d.labels) y = (y - d.normalization.mean) / d.normalization.std;
  return d;
}

Dataset generate_dataset(const TargetSpec& spec, std::size_t samples, std::uint64_t seed) {
  if (samples < 2) throw InvalidArgument("generate_dataset needs T >= 2");
  return generate_dataset(build_target_mps(spec), samples, seed);
}

std::vector<int> add_label_noise(std::span<const int> labels, double fraction, std::size_t classes,
                                 std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidArgument("noise fraction must lie in [0,1]");
  std::vector<int> out(labels.begin(), labels.end());
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(labels.size())));
  if (count == 0) return out;
  if (classes < 2) throw InvalidArgument("label noise needs at least two classes");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(labels.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::uniform_int_distribution<std::size_t> shift(1, classes - 1);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = idx[k];
    const auto old = static_cast<std::size_t>(out[i]);
    out[i] = static_cast<int>((old + shift(rng)) % classes);
  }
  return out;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  char buf[96];
  // labels are stored normalized; keep the affine map so raw labels can be recovered
  std::snprintf(buf, sizeof buf, "# normalization mean=%.17g std=%.17g\n", d.normalization.mean,
                d.normalization.std);
  os << buf;
  for (std::size_t j = 0; j < d.sites; ++j) os << 'x' << (j + 1) << ',';
  os << "y\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (double v : d.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", d.labels[i]);
    os << buf << '\n';
  }
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  Dataset d;
  std::size_t lineno = 0;
  bool have_header = false;
  while ((have_header = static_cast<bool>(std::getline(is, line)))) {
    ++lineno;
    if (line.empty() || line[0] != '#') break;
    double mean = 0.0, sd = 1.0;
    if (std::sscanf(line.c_str(), "# normalization mean=%lf std=%lf", &mean, &sd) == 2) {
      if (!(sd > 0.0) || !std::isfinite(mean)) throw FormatError("dataset CSV: bad normalization line");
      d.normalization = {mean, sd};
    }
  }
  if (!have_header) throw FormatError("dataset CSV is empty");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2 || line.substr(line.rfind(',') + 1) != "y" || line.rfind("x1", 0) != 0) {
    throw FormatError("dataset CSV header must be x1,...,xN,y");
  }
  d.sites = columns - 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw FormatError("dataset CSV line " + std::to_string(lineno) + ": bad number");
      if (c < d.sites) {
        d.features.push_back(v);
      } else if (c == d.sites) {
        d.labels.push_back(v);
      }
      ++c;
    }
    if (c != columns) throw FormatError("dataset CSV line " + std::to_string(lineno) + ": wrong column count");
  }
  return d;
}

}  // namespace mpslab
