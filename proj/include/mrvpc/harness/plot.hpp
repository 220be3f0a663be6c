#pragma once

#include "mrvpc/harness/io.hpp"

#include <string>
#include <vector>

namespace mrvpc::harness {

/// Renders report rows as a static SVG line chart, one polyline per model.
/// Scenarios of the form "label@x" are placed at numeric x; other scenarios
/// are spaced evenly in first-appearance order. Only rows of `metric` are
/// drawn (the first metric present when empty). Throws DataError when no row
/// qualifies.
std::string render_svg(const std::vector<ReportRow>& rows, const std::string& metric = "");

/// Reads a report CSV and writes the chart; nothing is written on error.
void emit_plot(const std::string& csv_path, const std::string& svg_path, const std::string& metric = "");

}  // namespace mrvpc::harness
