// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal SVG emitters: a multi-series line chart and a labelled heatmap.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "unlearn/error.hpp"

namespace unlearn::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};
  return colors[i % 5];
}

}  // namespace detail

inline std::string line_chart(const std::vector<Series>& series, std::string_view title, std::string_view x_label,
                              std::string_view y_label) {
  require(!series.empty(), ErrorKind::InvalidArgument, "line chart needs at least one series");
  double x0 = INFINITY, x1 = -INFINITY, y0 = 0.0, y1 = -INFINITY;
  for (const auto& s : series) {
    require(s.x.size() == s.y.size() && !s.x.empty(), ErrorKind::LengthMismatch, "series '" + s.name + "' is malformed");
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) y1 = y0 + 1.0;

  const double W = 640, H = 400, L = 70, R = 20, T = 40, B = 50;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" font-family=\"sans-serif\" "
                    "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + detail::escape(title) + "</text>\n";
  out += "<line x1=\"" + detail::num(L) + "\" y1=\"" + detail::num(H - B) + "\" x2=\"" + detail::num(W - R) + "\" y2=\"" +
         detail::num(H - B) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + detail::num(L) + "\" y1=\"" + detail::num(T) + "\" x2=\"" + detail::num(L) + "\" y2=\"" +
         detail::num(H - B) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0, xv = x0 + (x1 - x0) * k / 4.0;
    out += "<text x=\"" + detail::num(L - 6) + "\" y=\"" + detail::num(py(yv) + 4) + "\" text-anchor=\"end\">" +
           detail::num(yv) + "</text>\n";
    out += "<text x=\"" + detail::num(px(xv)) + "\" y=\"" + detail::num(H - B + 16) + "\" text-anchor=\"middle\">" +
           detail::num(xv) + "</text>\n";
  }
  out += "<text x=\"" + detail::num((L + W - R) / 2) + "\" y=\"" + detail::num(H - 10) + "\" text-anchor=\"middle\">" +
         detail::escape(x_label) + "</text>\n";
  out += "<text transform=\"translate(16," + detail::num((T + H - B) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         detail::escape(y_label) + "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    out += "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" + std::string(detail::palette(i)) + "\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) out += (k ? " " : "") + detail::num(px(s.x[k])) + "," + detail::num(py(s.y[k]));
    out += "\"/>\n";
    const double ly = T + 14 + 16 * static_cast<double>(i);
    out += "<rect x=\"" + detail::num(L + 10) + "\" y=\"" + detail::num(ly - 9) + "\" width=\"12\" height=\"3\" fill=\"" +
           detail::palette(i) + "\"/>\n";
    out += "<text x=\"" + detail::num(L + 28) + "\" y=\"" + detail::num(ly - 4) + "\">" + detail::escape(s.name) + "</text>\n";
  }
  return out + "</svg>\n";
}

/// values[row][col]; more negative cells are drawn darker red.
inline std::string heatmap(const std::vector<std::vector<double>>& values, const std::vector<std::string>& row_labels,
                           const std::vector<std::string>& col_labels, std::string_view title) {
  require(values.size() == row_labels.size(), ErrorKind::LengthMismatch, "heatmap row labels");
  for (const auto& r : values) require(r.size() == col_labels.size(), ErrorKind::LengthMismatch, "heatmap columns");
  double lo = 0.0;
  for (const auto& r : values)
    for (double v : r) lo = std::min(lo, v);

  const double cell = 90, L = 110, T = 60;
  const double W = L + cell * static_cast<double>(col_labels.size()) + 20;
  const double H = T + cell * static_cast<double>(row_labels.size()) + 20;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(W) + "\" height=\"" +
                    detail::num(H) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + detail::num(W / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
         detail::escape(title) + "</text>\n";
  for (std::size_t c = 0; c < col_labels.size(); ++c)
    out += "<text x=\"" + detail::num(L + cell * (c + 0.5)) + "\" y=\"" + detail::num(T - 8) +
           "\" text-anchor=\"middle\">" + detail::escape(col_labels[c]) + "</text>\n";
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    out += "<text x=\"" + detail::num(L - 8) + "\" y=\"" + detail::num(T + cell * (r + 0.5) + 4) +
           "\" text-anchor=\"end\">" + detail::escape(row_labels[r]) + "</text>\n";
    for (std::size_t c = 0; c < col_labels.size(); ++c) {
      const double v = values[r][c];
      const double t = lo < 0.0 ? std::clamp(v / lo, 0.0, 1.0) : 0.0;
      const int g = static_cast<int>(std::lround(255 * (1.0 - 0.75 * t)));
      char fill[16];
      std::snprintf(fill, sizeof fill, "#ff%02x%02x", g, g);
      out += "<rect x=\"" + detail::num(L + cell * c) + "\" y=\"" + detail::num(T + cell * r) + "\" width=\"" +
             detail::num(cell) + "\" height=\"" + detail::num(cell) + "\" fill=\"" + fill + "\" stroke=\"white\"/>\n";
      out += "<text x=\"" + detail::num(L + cell * (c + 0.5)) + "\" y=\"" + detail::num(T + cell * (r + 0.5) + 4) +
             "\" text-anchor=\"middle\">" + detail::num(v) + "</text>\n";
    }
  }
  return out + "</svg>\n";
}

}  // namespace unlearn::svg
