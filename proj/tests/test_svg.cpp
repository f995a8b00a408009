#include "p300/svg.hpp"

#include <doctest.h>

#include <stdexcept>

using namespace p300;

TEST_CASE("svg renderer") {
  SvgPlot plot;
  plot.title = "demo";
  plot.x_label = "time (ms)";
  plot.y_label = "amplitude (uV)";
  SvgSeries s;
  s.label = "target";
  s.color = "#2a7e3f";
  s.x = {0.0, 1.0, 2.0, 3.0};
  s.y = {0.0, 1.0, -1.0, 0.5};
  s.band = {0.1, 0.2, 0.1, 0.2};
  plot.series.push_back(s);
  plot.spans.push_back({1.0, 2.0, "#fde1a8", "effect"});

  const std::string svg = render_svg(plot);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("polygon") != std::string::npos);  // the band
  CHECK(svg.find("demo") != std::string::npos);
  CHECK(svg == render_svg(plot));  // deterministic

  SUBCASE("error bars mode") {
    plot.series[0].error_bars = true;
    const std::string bars = render_svg(plot);
    CHECK(bars.find("circle") != std::string::npos);
  }
  SUBCASE("no series is rejected") {
    SvgPlot empty;
    CHECK_THROWS_AS(render_svg(empty), std::invalid_argument);
  }
}
