#pragma once

// Minimal SVG line charts (fixed 800x400 viewport) rendered from CSV text.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace taurnn::svg {

struct Series {
  std::string name;
  std::vector<double> xs, ys;
};

struct ChartOptions {
  std::string title;
  std::string x_label = "epoch";
  std::string y_label;
  bool log_y = false;
};

inline constexpr int kWidth = 800, kHeight = 400;

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
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

}  // namespace detail

/// Polyline chart. With log_y, non-positive y values are dropped.
inline std::string line_chart(const std::vector<Series>& series, const ChartOptions& opt) {
  static const char* const colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                       "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
  const double left = 70, right = 20, top = 40, bottom = 50;
  const double pw = kWidth - left - right, ph = kHeight - top - bottom;

  auto ty = [&](double y) { return opt.log_y ? std::log10(y) : y; };
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.xs.size() && i < s.ys.size(); ++i) {
      if (!std::isfinite(s.ys[i]) || (opt.log_y && s.ys[i] <= 0)) continue;
      x0 = std::min(x0, s.xs[i]);
      x1 = std::max(x1, s.xs[i]);
      y0 = std::min(y0, ty(s.ys[i]));
      y1 = std::max(y1, ty(s.ys[i]));
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
    << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
       "font-family=\"sans-serif\" font-size=\"16\">"
    << detail::escape(opt.title) << "</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\""
    << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fy = y0 + (y1 - y0) * k / 4.0;
    const double yy = top + (1.0 - k / 4.0) * ph;
    o << "<text x=\"" << left - 6 << "\" y=\"" << detail::num(yy + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << detail::tick(opt.log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
    const double fx = x0 + (x1 - x0) * k / 4.0;
    o << "<text x=\"" << detail::num(px(fx)) << "\" y=\"" << top + ph + 16
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << detail::tick(fx) << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << kHeight - 10
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
    << detail::escape(opt.x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 16 "
    << top + ph / 2 << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"12\">"
    << detail::escape(opt.y_label + (opt.log_y ? " (log)" : "")) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = colors[si % 8];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.xs.size() && i < s.ys.size(); ++i) {
      if (!std::isfinite(s.ys[i]) || (opt.log_y && s.ys[i] <= 0)) continue;
      o << (first ? "" : " ") << detail::num(px(s.xs[i])) << ',' << detail::num(py(s.ys[i]));
      first = false;
    }
    o << "\"/>\n";
    const double ly = top + 16 + 16.0 * static_cast<double>(si);
    o << "<line x1=\"" << left + pw - 150 << "\" y1=\"" << ly - 4 << "\" x2=\""
      << left + pw - 130 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << left + pw - 125 << "\" y=\"" << ly
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << detail::escape(s.name)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Parses a CSV with a header row; column 0 is x, every other column named
/// in `columns` becomes a series.
inline std::vector<Series> series_from_csv(const std::string& csv,
                                           const std::vector<std::string>& columns) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("svg: empty CSV");
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  std::vector<std::size_t> idx;
  std::vector<Series> out;
  for (const auto& c : columns) {
    const auto it = std::find(header.begin(), header.end(), c);
    if (it == header.end()) throw std::invalid_argument("svg: no column '" + c + "'");
    idx.push_back(static_cast<std::size_t>(it - header.begin()));
    out.push_back({c, {}, {}});
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw std::invalid_argument("svg: ragged CSV row");
    const double x = std::stod(cells[0]);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out[k].xs.push_back(x);
      out[k].ys.push_back(std::stod(cells[idx[k]]));
    }
  }
  return out;
}

/// Train/test RMSE vs epoch from an epoch CSV.
inline std::string epoch_chart(const std::string& epoch_csv, const std::string& title,
                               bool log_y = true) {
  return line_chart(series_from_csv(epoch_csv, {"train_rmse", "test_rmse"}),
                    {title, "epoch", "RMSE", log_y});
}

}  // namespace taurnn::svg
