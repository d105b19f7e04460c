#pragma once

#include <string>
#include <vector>

namespace cidml {

// Minimal static SVG charts for report visuals. Each writer overwrites the
// target file and throws DataError on I/O failure.

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& labels,
                         const std::vector<double>& values);

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::vector<double>& xs,
                          const std::vector<double>& ys);

void write_histogram_svg(const std::string& path, const std::string& title,
                         const std::vector<double>& bin_edges,
                         const std::vector<std::size_t>& counts);

}  // namespace cidml
