#include "corepulse/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace corepulse {

namespace {

const char* kColors[] = {"#1f5fa8", "#c2452d", "#3b8c3b", "#8a4fa8"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

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

struct Axis {
  bool log = false;
  double lo = 0.0, hi = 1.0;

  double map(double v) const { return log ? std::log10(v) : v; }
  double frac(double v) const { return (map(v) - lo) / (hi - lo); }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      for (int e = static_cast<int>(std::floor(lo)); e <= static_cast<int>(std::ceil(hi)); ++e) {
        if (e >= lo - 1e-9 && e <= hi + 1e-9) out.push_back(std::pow(10.0, e));
      }
      return out;
    }
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    }
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) out.push_back(std::abs(t) < 1e-12 ? 0.0 : t);
    return out;
  }
};

Axis fit_axis(const Plot& plot, bool x, bool log, bool has_bars) {
  Axis a;
  a.log = log;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : plot.series) {
    for (const auto& [px, py] : s.points) {
      const double v = x ? px : py;
      if (log && v <= 0.0) continue;
      lo = std::min(lo, a.map(v));
      hi = std::max(hi, a.map(v));
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (log) {
    lo = std::floor(lo);
    hi = std::ceil(hi);
  } else if (!x || has_bars) {
    lo = std::min(lo, 0.0);
  }
  if (x && has_bars && !log) {
    lo -= 0.5;
    hi += 0.5;
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  if (!log && !x) hi += 0.05 * (hi - lo);
  a.lo = lo;
  a.hi = hi;
  return a;
}

}  // namespace

std::string render_svg(const Plot& plot, int width, int height) {
  const double left = 70, right = 20, top = 40, bottom = 55;
  const double pw = width - left - right, ph = height - top - bottom;
  const bool has_bars = std::any_of(plot.series.begin(), plot.series.end(),
                                    [](const PlotSeries& s) { return s.style == PlotStyle::bars; });
  const Axis ax = fit_axis(plot, true, plot.log_x, has_bars);
  const Axis ay = fit_axis(plot, false, plot.log_y, has_bars);
  auto X = [&](double v) { return left + ax.frac(v) * pw; };
  auto Y = [&](double v) { return top + (1.0 - ay.frac(v)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << fmt(width / 2.0) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(plot.title)
    << "</text>\n";
  o << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
    << "\" fill=\"none\" stroke=\"#444\"/>\n";

  for (double t : ax.ticks()) {
    o << "<line x1=\"" << fmt(X(t)) << "\" y1=\"" << fmt(top + ph) << "\" x2=\"" << fmt(X(t)) << "\" y2=\""
      << fmt(top + ph + 5) << "\" stroke=\"#444\"/>";
    o << "<text x=\"" << fmt(X(t)) << "\" y=\"" << fmt(top + ph + 18) << "\" text-anchor=\"middle\">" << tick_label(t)
      << "</text>\n";
  }
  for (double t : ay.ticks()) {
    o << "<line x1=\"" << fmt(left - 5) << "\" y1=\"" << fmt(Y(t)) << "\" x2=\"" << fmt(left) << "\" y2=\""
      << fmt(Y(t)) << "\" stroke=\"#444\"/>";
    o << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(Y(t) + 4) << "\" text-anchor=\"end\">" << tick_label(t)
      << "</text>\n";
  }
  o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(height - 12.0) << "\" text-anchor=\"middle\">"
    << escape(plot.x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << fmt(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << fmt(top + ph / 2) << ")\">" << escape(plot.y_label) << "</text>\n";

  std::size_t bar_series = 0, bar_index = 0;
  for (const auto& s : plot.series) bar_series += s.style == PlotStyle::bars;
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const char* color = kColors[k % 4];
    auto visible = [&](double x, double y) { return !(plot.log_x && x <= 0) && !(plot.log_y && y <= 0); };
    if (s.style == PlotStyle::bars) {
      const double slot = pw / (ax.hi - ax.lo) * 0.8;
      const double w = slot / static_cast<double>(bar_series);
      for (const auto& [x, y] : s.points) {
        if (!visible(x, y)) continue;
        const double x0 = X(x) - slot / 2 + w * static_cast<double>(bar_index);
        const double y0 = Y(y), base = plot.log_y ? top + ph : Y(0.0);
        o << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(std::min(y0, base)) << "\" width=\"" << fmt(w)
          << "\" height=\"" << fmt(std::abs(base - y0)) << "\" fill=\"" << color << "\"/>\n";
      }
      ++bar_index;
    } else if (s.style == PlotStyle::line) {
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (const auto& [x, y] : s.points) {
        if (visible(x, y)) o << fmt(X(x)) << ',' << fmt(Y(y)) << ' ';
      }
      o << "\"/>\n";
      for (const auto& [x, y] : s.points) {
        if (visible(x, y)) o << "<circle cx=\"" << fmt(X(x)) << "\" cy=\"" << fmt(Y(y)) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
    } else {
      for (const auto& [x, y] : s.points) {
        if (visible(x, y)) o << "<circle cx=\"" << fmt(X(x)) << "\" cy=\"" << fmt(Y(y)) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      }
    }
    const double ly = top + 16 + 16 * static_cast<double>(k);
    o << "<rect x=\"" << fmt(left + pw - 150) << "\" y=\"" << fmt(ly - 9) << "\" width=\"10\" height=\"10\" fill=\""
      << color << "\"/><text x=\"" << fmt(left + pw - 135) << "\" y=\"" << fmt(ly) << "\">" << escape(s.name)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace corepulse
