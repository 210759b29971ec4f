#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mpslab {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> band;  // ±band around y; empty for none
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  int width = 720;
  int height = 480;
};

/// Line plot with shaded bands, as a standalone SVG document.
std::string render_svg(const std::vector<PlotSeries>& series, const PlotOptions& options);
void write_svg(const std::filesystem::path& path, const std::vector<PlotSeries>& series, const PlotOptions& options);

}  // namespace mpslab
