#include "mpslab/mps_io.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace mpslab {

namespace {

void expect(std::istream& is, const std::string& word) {
  std::string got;
  if (!(is >> got) || got != word) {
    throw FormatError("MPS record: expected '" + word + "', found '" + got + "'");
  }
}

template <typename T>
T read_value(std::istream& is, const char* what) {
  T v{};
  if (!(is >> v)) throw FormatError(std::string("MPS record: could not read ") + what);
  return v;
}

}  // namespace

void write_mps(std::ostream& os, const Mps& w) {
  os << "mpslab-mps " << kMpsFormatVersion << '\n';
  os << "sites " << w.size() << '\n';
  os << "phys " << w.phys_dim() << '\n';
  if (w.label_site()) {
    os << "label " << w.label_site()->site << ' ' << w.label_site()->classes << '\n';
  } else {
    os << "label none\n";
  }
  os << "bonds";
  for (auto d : w.bond_profile().dims) os << ' ' << d;
  os << '\n';
  char buf[32];
  for (std::size_t j = 0; j < w.size(); ++j) {
    const auto& c = w.core(j);
    os << "core " << j;
    for (auto e : c.shape()) os << ' ' << e;
    os << '\n';
    for (std::size_t i = 0; i < c.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", c[i]);
      os << (i ? " " : "") << buf;
    }
    os << '\n';
  }
}

Mps read_mps(std::istream& is) {
  expect(is, "mpslab-mps");
  const int version = read_value<int>(is, "version");
  if (version != kMpsFormatVersion) {
    throw FormatError("MPS record: unsupported version " + std::to_string(version));
  }
  expect(is, "sites");
  const auto sites = read_value<std::size_t>(is, "site count");
  expect(is, "phys");
  const auto phys = read_value<std::size_t>(is, "physical dimension");
  expect(is, "label");
  std::string tok;
  if (!(is >> tok)) throw FormatError("MPS record: missing label field");
  std::optional<LabelSite> label;
  if (tok != "none") {
    LabelSite ls;
    ls.site = std::stoul(tok);
    ls.classes = read_value<std::size_t>(is, "label dimension");
    label = ls;
  }
  expect(is, "bonds");
  std::vector<std::size_t> bonds(sites > 0 ? sites - 1 : 0);
  for (auto& b : bonds) b = read_value<std::size_t>(is, "bond extent");

  std::vector<DenseTensor> cores;
  for (std::size_t j = 0; j < sites; ++j) {
    expect(is, "core");
    if (read_value<std::size_t>(is, "core index") != j) throw FormatError("MPS record: cores out of order");
    const std::size_t order = (label && label->site == j) ? 4 : 3;
    Shape shape(order);
    for (auto& e : shape) e = read_value<std::size_t>(is, "core extent");
    if (shape[1] != phys) throw FormatError("MPS record: core physical extent differs from header");
    if (j > 0 && shape.front() != bonds[j - 1]) throw FormatError("MPS record: core bond differs from bond profile");
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = read_value<double>(is, "core value");
    cores.emplace_back(std::move(shape), std::move(data));
  }
  return Mps(std::move(cores), label);
}

void save_mps(const std::filesystem::path& path, const Mps& w) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  write_mps(os, w);
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

Mps load_mps(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return read_mps(is);
}

}  // namespace mpslab
