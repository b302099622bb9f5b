#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "minaf/dsp/spectrogram.hpp"

namespace minaf::plot {

/// Grid rows are drawn bottom to top (row 0 at the bottom), columns left to
/// right, colors scaled linearly between lo and hi.
void write_heatmap_png(const dsp::RealGrid& grid, double lo, double hi, const std::filesystem::path& path,
                       int scale = 2);
/// Same, with lo and hi taken from the grid.
void write_heatmap_png(const dsp::RealGrid& grid, const std::filesystem::path& path, int scale = 2);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct HLine {
  double y = 0.0;
  std::string label;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<HLine> markers;
  bool log_x = false;
};

void write_svg(const LineChart& chart, const std::filesystem::path& path);

/// Schroeder curve of a prediction (and its reference when given), with the
/// -5 and -65 dB levels marked.
void write_edc_svg(const dsp::Waveform& pred, const dsp::Waveform* gt, const std::filesystem::path& path,
                   const std::string& title = "EDC");

}  // namespace minaf::plot
