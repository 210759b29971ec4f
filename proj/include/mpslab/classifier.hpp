#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "mpslab/dmrg.hpp"
#include "mpslab/feature_map.hpp"
#include "mpslab/mps.hpp"

namespace mpslab {

/// Grayscale images with pixels in [0, 1] and class labels in [0, classes).
struct ImageDataset {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // count × height × width, row-major
  std::vector<int> labels;
  std::size_t classes = 10;

  std::size_t pixels_per_image() const { return height * width; }
  std::span<const double> image(std::size_t i) const {
    return {pixels.data() + i * pixels_per_image(), pixels_per_image()};
  }
  void validate() const;
};

/// Reads an IDX image/label pair; either file may be gzip-compressed.
ImageDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// factor × factor average pooling.
ImageDataset preprocess(const ImageDataset& d, std::size_t factor = 2);

/// First `count` images (all if count exceeds the size).
ImageDataset take(const ImageDataset& d, std::size_t count);

/// Site of the label index for an image with `sites` pixels: the center site.
std::size_t default_label_site(std::size_t sites);

/// pℓ = vℓ² / Σ v². Throws DegenerateDataError on an all-zero v.
std::vector<double> class_probabilities(std::span<const double> v);
std::vector<double> predict_proba(const Mps& w, const FeaturizedSample& s);

/// argmax p with ties to the lower index.
std::size_t predict_class(std::span<const double> p);

SampleSet make_classification_set(const ImageDataset& d, const FeatureMap& map);

/// −(1/T) Σ ln p_true, p clamped at 1e-300.
double cross_entropy(const Mps& w, const ImageDataset& d, const FeatureMap& map);
double accuracy(const Mps& w, const ImageDataset& d, const FeatureMap& map);
double accuracy(const Mps& w, const SampleSet& s);

/// `index,true,predicted,p0..p{C-1}`.
void write_predictions_csv(const std::filesystem::path& path, const Mps& w, const SampleSet& s);

}  // namespace mpslab
