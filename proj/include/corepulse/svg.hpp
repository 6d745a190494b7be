#pragma once

#include <string>
#include <utility>
#include <vector>

namespace corepulse {

enum class PlotStyle { bars, line, markers };

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
  PlotStyle style = PlotStyle::line;
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<PlotSeries> series;
};

/// Static SVG rendering; non-positive values are skipped on log axes.
std::string render_svg(const Plot& plot, int width = 640, int height = 420);

}  // namespace corepulse
