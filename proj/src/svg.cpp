#include "cidml/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cidml/errors.hpp"

namespace cidml {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMargin = 56;

struct Canvas {
  std::ostringstream out;

  Canvas(const std::string& title) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
        << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
        << kHeight << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">"
        << title << "</text>\n";
  }

  void axes() {
    out << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin
        << "\" x2=\"" << kWidth - kMargin << "\" y2=\"" << kHeight - kMargin
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\""
        << kMargin << "\" y2=\"" << kHeight - kMargin
        << "\" stroke=\"black\"/>\n";
  }

  void save(const std::string& path) {
    out << "</svg>\n";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << out.str();
    if (!f) throw DataError("failed writing '" + path + "'");
  }
};

double nice_max(double v) {
  if (!(v > 0.0)) return 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(v)));
  return std::ceil(v / mag) * mag;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

}  // namespace

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& labels,
                         const std::vector<double>& values) {
  if (labels.size() != values.size() || values.empty()) {
    throw ArgumentError("write_bar_chart_svg: labels/values mismatch");
  }
  Canvas c(title);
  c.axes();
  const double top = nice_max(*std::max_element(values.begin(), values.end()));
  const double plot_w = kWidth - 2.0 * kMargin;
  const double plot_h = kHeight - 2.0 * kMargin;
  const double slot = plot_w / static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double h = std::max(0.0, values[i]) / top * plot_h;
    const double x = kMargin + slot * (static_cast<double>(i) + 0.2);
    const double y = kHeight - kMargin - h;
    c.out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << slot * 0.6
          << "\" height=\"" << h << "\" fill=\"#4878a8\"/>\n"
          << "<text x=\"" << x + slot * 0.3 << "\" y=\""
          << kHeight - kMargin + 18
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"12\">"
          << labels[i] << "</text>\n"
          << "<text x=\"" << x + slot * 0.3 << "\" y=\"" << y - 6
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"11\">"
          << fmt(values[i]) << "</text>\n";
  }
  c.out << "<text x=\"" << kMargin - 8 << "\" y=\"" << kMargin
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(top) << "</text>\n";
  c.save(path);
}

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::vector<double>& xs,
                          const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw ArgumentError("write_line_chart_svg: need >= 2 aligned points");
  }
  Canvas c(title);
  c.axes();
  const double x_lo = *std::min_element(xs.begin(), xs.end());
  const double x_hi = *std::max_element(xs.begin(), xs.end());
  const double y_lo = std::min(0.0, *std::min_element(ys.begin(), ys.end()));
  const double y_hi = nice_max(*std::max_element(ys.begin(), ys.end()));
  const double xr = (x_hi > x_lo) ? x_hi - x_lo : 1.0;
  const double yr = (y_hi > y_lo) ? y_hi - y_lo : 1.0;
  const double plot_w = kWidth - 2.0 * kMargin;
  const double plot_h = kHeight - 2.0 * kMargin;

  c.out << "<polyline fill=\"none\" stroke=\"#a85048\" stroke-width=\"2\" "
           "points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double px = kMargin + (xs[i] - x_lo) / xr * plot_w;
    const double py = kHeight - kMargin - (ys[i] - y_lo) / yr * plot_h;
    c.out << px << "," << py << " ";
  }
  c.out << "\"/>\n";
  c.out << "<text x=\"" << kMargin - 8 << "\" y=\"" << kMargin
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(y_hi) << "</text>\n"
        << "<text x=\"" << kWidth - kMargin << "\" y=\""
        << kHeight - kMargin + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(x_hi) << "</text>\n";
  c.save(path);
}

void write_histogram_svg(const std::string& path, const std::string& title,
                         const std::vector<double>& bin_edges,
                         const std::vector<std::size_t>& counts) {
  if (counts.empty() || bin_edges.size() != counts.size() + 1) {
    throw ArgumentError("write_histogram_svg: edges must bracket counts");
  }
  Canvas c(title);
  c.axes();
  const double top = nice_max(static_cast<double>(
      *std::max_element(counts.begin(), counts.end())));
  const double lo = bin_edges.front(), hi = bin_edges.back();
  const double xr = (hi > lo) ? hi - lo : 1.0;
  const double plot_w = kWidth - 2.0 * kMargin;
  const double plot_h = kHeight - 2.0 * kMargin;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    const double x0 = kMargin + (bin_edges[b] - lo) / xr * plot_w;
    const double x1 = kMargin + (bin_edges[b + 1] - lo) / xr * plot_w;
    const double h = static_cast<double>(counts[b]) / top * plot_h;
    c.out << "<rect x=\"" << x0 << "\" y=\"" << kHeight - kMargin - h
          << "\" width=\"" << std::max(0.5, x1 - x0 - 1.0) << "\" height=\""
          << h << "\" fill=\"#48a868\"/>\n";
  }
  c.out << "<text x=\"" << kMargin << "\" y=\"" << kHeight - kMargin + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(lo) << "</text>\n"
        << "<text x=\"" << kWidth - kMargin << "\" y=\""
        << kHeight - kMargin + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(hi) << "</text>\n"
        << "<text x=\"" << kMargin - 8 << "\" y=\"" << kMargin
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(top) << "</text>\n";
  c.save(path);
}

}  // namespace cidml
