#include "mpslab/classifier.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>

#include "mpslab/errors.hpp"

namespace mpslab {

namespace {

// gzread passes plain files through unchanged, so one reader covers both.
std::vector<unsigned char> read_maybe_gzip(const std::filesystem::path& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (!file) throw IoError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes;
  unsigned char buf[1 << 16];
  for (;;) {
    const int n = gzread(file, buf, sizeof buf);
    if (n < 0) {
      int code = 0;
      const std::string msg = gzerror(file, &code);
      gzclose(file);
      throw FormatError("'" + path.string() + "': decompression failed at byte " + std::to_string(bytes.size()) +
                        ": " + msg);
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), buf, buf + n);
  }
  gzclose(file);
  return bytes;
}

class IdxReader {
 public:
  IdxReader(std::vector<unsigned char> bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

  std::uint32_t u32() {
    need(4, "header field");
    const std::uint32_t v = (std::uint32_t{bytes_[pos_]} << 24) | (std::uint32_t{bytes_[pos_ + 1]} << 16) |
                            (std::uint32_t{bytes_[pos_ + 2]} << 8) | std::uint32_t{bytes_[pos_ + 3]};
    pos_ += 4;
    return v;
  }

  std::span<const unsigned char> block(std::size_t n, const char* what) {
    need(n, what);
    std::span<const unsigned char> out(bytes_.data() + pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t offset() const { return pos_; }
  const std::string& name() const { return name_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("'" + name_ + "': truncated " + what + " at byte offset " + std::to_string(bytes_.size()) +
                        " (needed " + std::to_string(n) + " bytes from offset " + std::to_string(pos_) + ")");
    }
  }

  std::vector<unsigned char> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void ImageDataset::validate() const {
  if (count < 1) throw InvalidArgument("image dataset is empty");
  if (pixels.size() != count * height * width) throw DimensionError("pixel buffer does not match count×H×W");
  if (labels.size() != count) throw DimensionError("label count does not match image count");
  for (double p : pixels) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("pixel outside [0, 1]");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw DomainError("label out of range");
  }
}

ImageDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  IdxReader img(read_maybe_gzip(images_path), images_path.string());
  IdxReader lab(read_maybe_gzip(labels_path), labels_path.string());

  const std::uint32_t img_magic = img.u32();
  if (img_magic != 0x00000803) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", img_magic);
    throw FormatError("'" + img.name() + "': bad image magic " + buf + " at byte offset 0");
  }
  const std::uint32_t n_img = img.u32();
  const std::uint32_t rows = img.u32();
  const std::uint32_t cols = img.u32();

  const std::uint32_t lab_magic = lab.u32();
  if (lab_magic != 0x00000801) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", lab_magic);
    throw FormatError("'" + lab.name() + "': bad label magic " + buf + " at byte offset 0");
  }
  const std::uint32_t n_lab = lab.u32();
  if (n_img != n_lab) {
    throw FormatError("image count " + std::to_string(n_img) + " (byte offset 4 of '" + img.name() +
                      "') does not match label count " + std::to_string(n_lab) + " (byte offset 4 of '" + lab.name() +
                      "')");
  }

  ImageDataset d;
  d.count = n_img;
  d.height = rows;
  d.width = cols;
  const std::size_t total = std::size_t{n_img} * rows * cols;
  auto raw = img.block(total, "pixel data");
  d.pixels.resize(total);
  for (std::size_t i = 0; i < total; ++i) d.pixels[i] = raw[i] / 255.0;

  const std::size_t label_start = lab.offset();
  auto lraw = lab.block(n_lab, "label data");
  d.labels.resize(n_lab);
  for (std::size_t i = 0; i < n_lab; ++i) {
    if (lraw[i] >= d.classes) {
      throw FormatError("'" + lab.name() + "': label " + std::to_string(lraw[i]) + " out of range at byte offset " +
                        std::to_string(label_start + i));
    }
    d.labels[i] = lraw[i];
  }
  return d;
}

ImageDataset preprocess(const ImageDataset& d, std::size_t factor) {
  if (factor < 1 || d.height % factor != 0 || d.width % factor != 0) {
    throw InvalidArgument("pooling factor " + std::to_string(factor) + " does not divide " + std::to_string(d.height) +
                          "x" + std::to_string(d.width));
  }
  if (factor == 1) return d;
  ImageDataset out;
  out.count = d.count;
  out.height = d.height / factor;
  out.width = d.width / factor;
  out.labels = d.labels;
  out.classes = d.classes;
  out.pixels.assign(out.count * out.height * out.width, 0.0);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t n = 0; n < d.count; ++n) {
    const double* src = d.pixels.data() + n * d.height * d.width;
    double* dst = out.pixels.data() + n * out.height * out.width;
    for (std::size_t r = 0; r < out.height; ++r)
      for (std::size_t c = 0; c < out.width; ++c) {
        double s = 0.0;
        for (std::size_t a = 0; a < factor; ++a)
          for (std::size_t b = 0; b < factor; ++b) s += src[(r * factor + a) * d.width + c * factor + b];
        // keep the average inside [0, 1] despite rounding
        dst[r * out.width + c] = std::clamp(s * inv, 0.0, 1.0);
      }
  }
  return out;
}

ImageDataset take(const ImageDataset& d, std::size_t count) {
  if (count >= d.count) return d;
  ImageDataset out = d;
  out.count = count;
  out.pixels.resize(count * d.pixels_per_image());
  out.labels.resize(count);
  return out;
}

std::size_t default_label_site(std::size_t sites) {
  if (sites < 1) throw InvalidArgument("need at least one site");
  return sites / 2;
}

std::vector<double> class_probabilities(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  if (!(s > 0.0)) throw DegenerateDataError("all-zero class output: probabilities undefined");
  std::vector<double> p(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = v[i] * v[i] / s;
  return p;
}

std::vector<double> predict_proba(const Mps& w, const FeaturizedSample& s) {
  if (!w.is_labeled()) throw InvalidArgument("predict_proba needs a labeled MPS");
  return class_probabilities(evaluate_labeled(w, s));
}

std::size_t predict_class(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

SampleSet make_classification_set(const ImageDataset& d, const FeatureMap& map) {
  d.validate();
  SampleSet s;
  s.inputs.reserve(d.count);
  for (std::size_t i = 0; i < d.count; ++i) s.inputs.push_back(featurize(map, d.image(i)));
  s.classes = d.labels;
  return s;
}

double cross_entropy(const Mps& w, const ImageDataset& d, const FeatureMap& map) {
  return data_loss(w, make_classification_set(d, map), LossKind::cross_entropy);
}

double accuracy(const Mps& w, const SampleSet& s) {
  if (s.empty()) throw InvalidArgument("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    // argmax of v² equals argmax of p; an all-zero v predicts class 0
    const auto v = evaluate_labeled(w, s.inputs[i]);
    std::vector<double> sq(v.size());
    for (std::size_t c = 0; c < v.size(); ++c) sq[c] = v[c] * v[c];
    if (static_cast<int>(predict_class(sq)) == s.classes[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(s.size());
}

double accuracy(const Mps& w, const ImageDataset& d, const FeatureMap& map) {
  return accuracy(w, make_classification_set(d, map));
}

void write_predictions_csv(const std::filesystem::path& path, const Mps& w, const SampleSet& s) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << "index,true,predicted";
  for (std::size_t c = 0; c < w.classes(); ++c) os << ",p" << c;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto p = predict_proba(w, s.inputs[i]);
    os << i << ',' << s.classes[i] << ',' << predict_class(p);
    for (double x : p) {
      std::snprintf(buf, sizeof buf, ",%.17g", x);
      os << buf;
    }
    os << '\n';
  }
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace mpslab
