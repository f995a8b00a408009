#include "p300/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace p300 {

namespace {

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double nice_step(double range, int target_ticks) {
  if (range <= 0) return 1.0;
  const double raw = range / target_ticks;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

std::string render_svg(const SvgPlot& plot) {
  if (plot.series.empty()) throw std::invalid_argument("render_svg: no series");

  double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
  for (const SvgSeries& s : plot.series) {
    if (s.x.size() != s.y.size() || (!s.band.empty() && s.band.size() != s.y.size())) {
      throw std::invalid_argument("render_svg: series '" + s.label + "' has mismatched lengths");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double half = s.band.empty() ? 0.0 : s.band[i];
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, s.y[i] - half);
      y_max = std::max(y_max, s.y[i] + half);
    }
  }
  if (plot.y_min) y_min = *plot.y_min;
  if (plot.y_max) y_max = *plot.y_max;
  if (x_max <= x_min) x_max = x_min + 1.0;
  if (y_max <= y_min) y_max = y_min + 1.0;

  const double ml = 62, mr = 16, mt = 34, mb = 46;
  const double pw = plot.width - ml - mr;
  const double ph = plot.height - mt - mb;
  auto sx = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
  auto sy = [&](double y) { return mt + (y_max - y) / (y_max - y_min) * ph; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << plot.width << "\" height=\""
      << plot.height << "\" viewBox=\"0 0 " << plot.width << " " << plot.height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << px(ml + pw / 2) << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\""
      << " text-anchor=\"middle\">" << plot.title << "</text>\n";

  for (const SvgSpan& span : plot.spans) {
    const double a = std::clamp(span.x0, x_min, x_max);
    const double b = std::clamp(span.x1, x_min, x_max);
    if (b <= a) continue;
    out << "<rect x=\"" << px(sx(a)) << "\" y=\"" << px(mt) << "\" width=\"" << px(sx(b) - sx(a))
        << "\" height=\"" << px(ph) << "\" fill=\"" << span.color << "\" fill-opacity=\"0.6\"/>\n";
  }

  // axes and ticks
  out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  const double x_step = nice_step(x_max - x_min, 6);
  for (double t = std::ceil(x_min / x_step) * x_step; t <= x_max + 1e-9; t += x_step) {
    out << "<line x1=\"" << px(sx(t)) << "\" y1=\"" << px(mt) << "\" x2=\"" << px(sx(t))
        << "\" y2=\"" << px(mt + ph) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << px(sx(t)) << "\" y=\"" << px(mt + ph + 16)
        << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  const double y_step = nice_step(y_max - y_min, 5);
  for (double t = std::ceil(y_min / y_step) * y_step; t <= y_max + 1e-9; t += y_step) {
    out << "<line x1=\"" << px(ml) << "\" y1=\"" << px(sy(t)) << "\" x2=\"" << px(ml + pw)
        << "\" y2=\"" << px(sy(t)) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << px(ml - 6) << "\" y=\"" << px(sy(t) + 4)
        << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
  }
  out << "<text x=\"" << px(ml + pw / 2) << "\" y=\"" << px(plot.height - 8)
      << "\" text-anchor=\"middle\">" << plot.x_label << "</text>\n";
  out << "<text x=\"14\" y=\"" << px(mt + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << px(mt + ph / 2) << ")\">" << plot.y_label << "</text>\n";
  out << "</g>\n";
  out << "<rect x=\"" << px(ml) << "\" y=\"" << px(mt) << "\" width=\"" << px(pw) << "\" height=\""
      << px(ph) << "\" fill=\"none\" stroke=\"#333\"/>\n";

  for (const SvgSeries& s : plot.series) {
    if (!s.band.empty() && !s.error_bars) {
      std::ostringstream pts;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        pts << px(sx(s.x[i])) << ',' << px(sy(s.y[i] + s.band[i])) << ' ';
      }
      for (std::size_t i = s.x.size(); i-- > 0;) {
        pts << px(sx(s.x[i])) << ',' << px(sy(s.y[i] - s.band[i])) << ' ';
      }
      out << "<polygon points=\"" << pts.str() << "\" fill=\"" << s.color
          << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
    }
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      pts << px(sx(s.x[i])) << ',' << px(sy(s.y[i])) << ' ';
    }
    out << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.6\"/>\n";
    if (!s.band.empty() && s.error_bars) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        out << "<line x1=\"" << px(sx(s.x[i])) << "\" y1=\"" << px(sy(s.y[i] - s.band[i]))
            << "\" x2=\"" << px(sx(s.x[i])) << "\" y2=\"" << px(sy(s.y[i] + s.band[i]))
            << "\" stroke=\"" << s.color << "\" stroke-width=\"1.2\"/>\n";
        out << "<circle cx=\"" << px(sx(s.x[i])) << "\" cy=\"" << px(sy(s.y[i]))
            << "\" r=\"2.4\" fill=\"" << s.color << "\"/>\n";
      }
    }
  }

  double ly = mt + 14;
  for (const SvgSeries& s : plot.series) {
    if (s.label.empty()) continue;
    out << "<line x1=\"" << px(ml + pw - 120) << "\" y1=\"" << px(ly - 4) << "\" x2=\""
        << px(ml + pw - 100) << "\" y2=\"" << px(ly - 4) << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << px(ml + pw - 94) << "\" y=\"" << px(ly)
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">" << s.label
        << "</text>\n";
    ly += 15;
  }

  out << "</svg>\n";
  return out.str();
}

}  // namespace p300
