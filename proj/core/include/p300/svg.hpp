#pragma once

#include <optional>
#include <string>
#include <vector>

namespace p300 {

struct SvgSeries {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> band;  // optional +- half width around y, same length
  bool error_bars{false};    // render the band as vertical bars instead of a fill
};

struct SvgSpan {  // vertical highlight between two x values
  double x0{0.0};
  double x1{0.0};
  std::string color{"#fde1a8"};
  std::string label;
};

struct SvgPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgSeries> series;
  std::vector<SvgSpan> spans;
  int width{760};
  int height{420};
  std::optional<double> y_min;
  std::optional<double> y_max;
};

/// Self-contained deterministic SVG line plot.
std::string render_svg(const SvgPlot& plot);

}  // namespace p300
