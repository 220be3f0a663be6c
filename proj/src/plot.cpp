#include "mrvpc/harness/plot.hpp"

#include "mrvpc/common/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace mrvpc::harness {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 150, kTop = 30, kBottom = 60;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

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

}  // namespace

std::string render_svg(const std::vector<ReportRow>& rows, const std::string& metric_filter) {
  std::string metric = metric_filter;
  if (metric.empty() && !rows.empty()) metric = rows.front().metric;
  std::vector<const ReportRow*> picked;
  for (const auto& r : rows)
    if (r.metric == metric) picked.push_back(&r);
  if (picked.empty()) throw DataError("plot: no data rows" + (metric.empty() ? std::string() : " for metric '" + metric + "'"));

  // x positions: numeric suffix after '@', otherwise category order
  bool numeric = true;
  std::vector<std::string> categories;
  std::map<std::string, double> x_of;
  for (const auto* r : picked) {
    if (x_of.count(r->scenario)) continue;
    const auto at = r->scenario.rfind('@');
    double x = 0;
    bool ok = at != std::string::npos;
    if (ok) {
      try {
        std::size_t used = 0;
        x = std::stod(r->scenario.substr(at + 1), &used);
        ok = used == r->scenario.size() - at - 1;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    numeric = numeric && ok;
    categories.push_back(r->scenario);
    x_of[r->scenario] = x;
  }
  if (!numeric)
    for (std::size_t i = 0; i < categories.size(); ++i) x_of[categories[i]] = static_cast<double>(i);

  std::vector<std::string> models;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (const auto* r : picked) {
    if (!series.count(r->model)) models.push_back(r->model);
    series[r->model].push_back({x_of[r->scenario], r->value});
  }
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (auto& [m, pts] : series) {
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto [x, y] : pts) {
      if (!std::isfinite(y)) throw DataError("plot: non-finite value for model '" + m + "'");
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 == x0) {
    x0 -= 1;
    x1 += 1;
  }
  if (y1 == y0) {
    y0 -= 1;
    y1 += 1;
  }
  y0 = std::min(y0, 0.0);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - y0) / (y1 - y0) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"white\"/>\n";
  // axes
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(kLeft + pw) + "\" y2=\"" +
         num(kTop + ph) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(kTop + ph) +
         "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = y0 + (y1 - y0) * i / 4.0;
    svg += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(py(y) + 4) + "\" text-anchor=\"end\">" + tick(y) +
           "</text>\n";
  }
  if (numeric) {
    for (const auto& c : categories) {
      const double x = x_of[c];
      svg += "<text x=\"" + num(px(x)) + "\" y=\"" + num(kTop + ph + 16) + "\" text-anchor=\"middle\">" + tick(x) +
             "</text>\n";
    }
  } else {
    for (const auto& c : categories)
      svg += "<text x=\"" + num(px(x_of[c])) + "\" y=\"" + num(kTop + ph + 16) + "\" text-anchor=\"middle\">" +
             escape(c) + "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 14) + "\" text-anchor=\"middle\">scenario</text>\n";
  svg += "<text x=\"16\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num(kTop + ph / 2) + ")\">value (" + escape(metric) + ")</text>\n";

  for (std::size_t i = 0; i < models.size(); ++i) {
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::string points;
    for (auto [x, y] : series[models[i]]) points += (points.empty() ? "" : " ") + num(px(x)) + "," + num(py(y));
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + points +
           "\"/>\n";
    const double ly = kTop + 10 + 18 * static_cast<double>(i);
    svg += "<line x1=\"" + num(kLeft + pw + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(kLeft + pw + 32) +
           "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(kLeft + pw + 36) + "\" y=\"" + num(ly + 4) + "\">" + escape(models[i]) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void emit_plot(const std::string& csv_path, const std::string& svg_path, const std::string& metric) {
  const auto svg = render_svg(rows_from_csv(read_file(csv_path)), metric);
  write_file_atomic(svg_path, svg);
}

}  // namespace mrvpc::harness
