#include "ctlfm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ctlfm/error.hpp"

namespace ctlfm {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string color(double v, double vmin, double vmax) {
  if (std::isnan(v)) return "#bdbdbd";
  const double mid = 0.5 * (vmin + vmax);
  const double half = 0.5 * (vmax - vmin);
  const double s = std::clamp((v - mid) / half, -1.0, 1.0);
  // white at the midpoint, (33,102,172) at -1 and (178,24,43) at +1
  double r, g, b;
  if (s >= 0) {
    r = 255 + s * (178 - 255);
    g = 255 + s * (24 - 255);
    b = 255 + s * (43 - 255);
  } else {
    r = 255 - s * (33 - 255);
    g = 255 - s * (102 - 255);
    b = 255 - s * (172 - 255);
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(r)),
                static_cast<int>(std::lround(g)), static_cast<int>(std::lround(b)));
  return buf;
}

}  // namespace

std::string heatmap_svg(const Matrix& m, const std::vector<std::string>& row_ids,
                        const std::vector<std::string>& col_ids, const HeatmapStyle& style) {
  if (static_cast<Eigen::Index>(row_ids.size()) != m.rows() ||
      static_cast<Eigen::Index>(col_ids.size()) != m.cols()) {
    throw InvalidArgument("heatmap_svg: label counts do not match the matrix");
  }
  if (!(style.vmax > style.vmin)) throw InvalidArgument("heatmap_svg: need vmax > vmin");
  const int c = style.cell;
  const int left = 70;
  const int top = style.title.empty() ? 60 : 84;
  const int legend = 60;
  const int width = left + c * static_cast<int>(m.cols()) + legend + 20;
  const int height = top + c * static_cast<int>(m.rows()) + 20;

  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                "viewBox=\"0 0 %d %d\" font-family=\"sans-serif\" font-size=\"10\">\n",
                width, height, width, height);
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!style.title.empty()) {
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"20\" font-size=\"14\">", left);
    out += buf + escape(style.title) + "</text>\n";
  }
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const int x = left + c * static_cast<int>(j) + c / 2;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%d\" y=\"%d\" text-anchor=\"start\" transform=\"rotate(-60 %d %d)\">",
                  x, top - 4, x, top - 4);
    out += buf + escape(col_ids[static_cast<std::size_t>(j)]) + "</text>\n";
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const int y = top + c * static_cast<int>(i);
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">", left - 4,
                  y + c / 2 + 3);
    out += buf + escape(row_ids[static_cast<std::size_t>(i)]) + "</text>\n";
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"%s\"><title>%.4g</title></rect>\n",
                    left + c * static_cast<int>(j), y, c, c,
                    color(m(i, j), style.vmin, style.vmax).c_str(), m(i, j));
      out += buf;
    }
  }
  // colour bar
  const int bx = left + c * static_cast<int>(m.cols()) + 20;
  const int bh = std::max(c * static_cast<int>(m.rows()), 100);
  const int steps = 20;
  for (int s = 0; s < steps; ++s) {
    const double v = style.vmax - (style.vmax - style.vmin) * (s + 0.5) / steps;
    std::snprintf(buf, sizeof buf, "<rect x=\"%d\" y=\"%d\" width=\"12\" height=\"%d\" fill=\"%s\"/>\n",
                  bx, top + bh * s / steps, bh / steps + 1, color(v, style.vmin, style.vmax).c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%d\" y=\"%d\">%g</text>\n<text x=\"%d\" y=\"%d\">%g</text>\n", bx + 16,
                top + 8, style.vmax, bx + 16, top + bh, style.vmin);
  out += buf;
  out += "</svg>\n";
  return out;
}

}  // namespace ctlfm
