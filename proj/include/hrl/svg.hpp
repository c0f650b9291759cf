#pragma once

#include <string>
#include <vector>

namespace hrl {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
  /// Written into a comment at the top of the document.
  std::string provenance;
};

/// Self-contained line plot with markers, axes, ticks and a legend. Non-finite
/// points (and non-positive ones on log axes) are skipped.
std::string render_svg(const PlotSpec& spec);

}  // namespace hrl
