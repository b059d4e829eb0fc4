#pragma once

#include <string>
#include <vector>

#include "ctlfm/model.hpp"

namespace ctlfm {

struct HeatmapStyle {
  double vmin = -1.0;
  double vmax = 1.0;
  int cell = 24;  // px
  std::string title;
};

/// Self-contained SVG heatmap, blue → white → red over [vmin, vmax];
/// values outside the range are clamped, NaN is drawn grey.
std::string heatmap_svg(const Matrix& m, const std::vector<std::string>& row_ids,
                        const std::vector<std::string>& col_ids, const HeatmapStyle& style = {});

}  // namespace ctlfm
