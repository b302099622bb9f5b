#include "minaf/pipeline/plot.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "minaf/common/error.hpp"

namespace minaf::plot {

namespace {

// Five-stop approximation of viridis.
std::array<unsigned char, 3> colormap(double v) {
  static constexpr double stops[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  if (!std::isfinite(v)) v = 0.0;
  v = std::clamp(v, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(v));
  const double f = v - i;
  std::array<unsigned char, 3> c{};
  for (int k = 0; k < 3; ++k) {
    c[static_cast<std::size_t>(k)] =
        static_cast<unsigned char>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  }
  return c;
}

struct PngFile {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngFile() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

void write_heatmap_png(const dsp::RealGrid& grid, double lo, double hi, const std::filesystem::path& path,
                       int scale) {
  require(grid.rows() > 0 && grid.cols() > 0, "heatmap: empty grid");
  require(scale >= 1, "heatmap: scale must be >= 1");
  const auto width = static_cast<png_uint_32>(grid.cols() * static_cast<std::size_t>(scale));
  const auto height = static_cast<png_uint_32>(grid.rows() * static_cast<std::size_t>(scale));
  const double span = hi > lo ? hi - lo : 1.0;

  PngFile f;
  f.fp = std::fopen(path.c_str(), "wb");
  if (!f.fp) throw DataError("cannot write " + path.string());
  f.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!f.png) throw DataError("png: cannot create writer");
  f.info = png_create_info_struct(f.png);
  if (!f.info) throw DataError("png: cannot create info");
  if (setjmp(png_jmpbuf(f.png))) throw DataError("png: write failed for " + path.string());
  png_init_io(f.png, f.fp);
  png_set_IHDR(f.png, f.info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(f.png, f.info);

  std::vector<png_byte> row(static_cast<std::size_t>(width) * 3);
  for (png_uint_32 y = 0; y < height; ++y) {
    const std::size_t r = grid.rows() - 1 - y / static_cast<png_uint_32>(scale);
    for (png_uint_32 x = 0; x < width; ++x) {
      const std::size_t c = x / static_cast<png_uint_32>(scale);
      const auto rgb = colormap((grid.at(r, c) - lo) / span);
      std::copy(rgb.begin(), rgb.end(), row.begin() + static_cast<std::ptrdiff_t>(3 * x));
    }
    png_write_row(f.png, row.data());
  }
  png_write_end(f.png, nullptr);
}

void write_heatmap_png(const dsp::RealGrid& grid, const std::filesystem::path& path, int scale) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : grid.data()) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  write_heatmap_png(grid, lo, hi, path, scale);
}

void write_svg(const LineChart& chart, const std::filesystem::path& path) {
  constexpr double W = 640, H = 420, L = 70, R = 150, Tm = 40, B = 55;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto tx = [&](double x) { return chart.log_x ? std::log10(x) : x; };
  for (const auto& s : chart.series) {
    require(s.x.size() == s.y.size(), "chart: series '" + s.name + "' has mismatched lengths");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || !std::isfinite(tx(s.x[i]))) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  for (const auto& m : chart.markers) {
    y0 = std::min(y0, m.y);
    y1 = std::max(y1, m.y);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (tx(x) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return Tm + (y1 - y) / (y1 - y0) * (H - Tm - B); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(chart.title)
     << "</text>\n";
  os << "<rect x=\"" << L << "\" y=\"" << Tm << "\" width=\"" << W - L - R << "\" height=\"" << H - Tm - B
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0;
    const double xv = x0 + (x1 - x0) * i / 4.0;
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
    const double xs = L + (W - L - R) * i / 4.0;
    os << "<text x=\"" << xs << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
       << fmt(chart.log_x ? std::pow(10.0, xv) : xv) << "</text>\n";
  }
  os << "<text x=\"" << L + (W - L - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
     << escape(chart.x_label) << "</text>\n";
  os << "<text transform=\"translate(16," << Tm + (H - Tm - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(chart.y_label) << "</text>\n";
  for (const auto& m : chart.markers) {
    os << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << py(m.y) << "\" y2=\"" << py(m.y)
       << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    os << "<text x=\"" << W - R + 4 << "\" y=\"" << py(m.y) + 4 << "\" fill=\"gray\">" << escape(m.label)
       << "</text>\n";
  }
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const char* color = kPalette[k % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || !std::isfinite(tx(s.x[i]))) continue;
      os << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    os << "\"/>\n";
    if (s.x.size() <= 16) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.y[i]) || !std::isfinite(tx(s.x[i]))) continue;
        os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << color
           << "\"/>\n";
      }
    }
    const double ly = Tm + 20 + 18 * static_cast<double>(k);
    os << "<line x1=\"" << W - R + 10 << "\" x2=\"" << W - R + 30 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 34 << "\" y=\"" << ly + 4 << "\">" << escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";

  std::ofstream out(path);
  out << os.str();
  if (!out) throw DataError("cannot write " + path.string());
}

void write_edc_svg(const dsp::Waveform& pred, const dsp::Waveform* gt, const std::filesystem::path& path,
                   const std::string& title) {
  LineChart c;
  c.title = title;
  c.x_label = "time (s)";
  c.y_label = "energy (dB)";
  auto add = [&](const dsp::Waveform& w, const std::string& name) {
    std::vector<double> edc;
    try {
      edc = dsp::schroeder_edc(w);
    } catch (const InvalidArgument&) {
      return;  // silent signal
    }
    Series s;
    s.name = name;
    // Every 4th sample keeps the file small.
    for (std::size_t i = 0; i < edc.size(); i += 4) {
      s.x.push_back(static_cast<double>(i) / w.fs);
      s.y.push_back(edc[i]);
    }
    c.series.push_back(std::move(s));
  };
  if (gt) add(*gt, "ground truth");
  add(pred, "predicted");
  c.markers = {{-5.0, "-5 dB"}, {-65.0, "-65 dB"}};
  write_svg(c, path);
}

}  // namespace minaf::plot
