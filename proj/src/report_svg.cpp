#include "tunedemand/io/report_svg.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace tunedemand::io {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
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

}  // namespace

std::string render_song_svg(const SongReport& report, int width, int height) {
  const double left = 50, right = 15, top = 30, bottom = 35;
  const auto T = report.observed.size();
  double ymax = 1.0;
  for (auto v : report.observed) ymax = std::max(ymax, static_cast<double>(v));
  if (report.chart)
    for (double v : report.chart->upper) ymax = std::max(ymax, v);
  std::vector<double> env;
  if (report.envelope) {
    env = envelope_curve(report.envelope->taus, report.envelope->nodes, T);
    for (double v : env) ymax = std::max(ymax, v);
  }
  ymax *= 1.05;
  const double span = T > 1 ? static_cast<double>(T - 1) : 1.0;
  auto px = [&](double t) { return left + t / span * (width - left - right); };
  auto py = [&](double y) { return height - bottom - y / ymax * (height - top - bottom); };
  auto polyline = [&](const std::vector<double>& ys) {
    std::string pts;
    for (std::size_t t = 0; t < ys.size(); ++t) pts += num(px(static_cast<double>(t))) + "," + num(py(ys[t])) + " ";
    return pts;
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
      << width << ' ' << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" << escape(report.title)
      << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << num(py(0)) << "\" x2=\"" << width - right << "\" y2=\"" << num(py(0))
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << num(py(0))
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << left - 4 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << num(ymax)
      << "</text>\n";
  svg << "<text x=\"" << width - right << "\" y=\"" << height - 8 << "\" text-anchor=\"end\" font-size=\"10\">week "
      << (T ? T - 1 : 0) << "</text>\n";

  if (report.chart && report.chart->upper.size() == T && T > 0) {
    std::string band = polyline(report.chart->upper);
    for (std::size_t t = T; t-- > 0;) band += num(px(static_cast<double>(t))) + "," + num(py(report.chart->lower[t])) + " ";
    svg << "<polygon class=\"band\" points=\"" << band << "\" fill=\"#9ecae1\" fill-opacity=\"0.5\"/>\n";
    svg << "<polyline class=\"chart-mean\" points=\"" << polyline(report.chart->mean)
        << "\" fill=\"none\" stroke=\"#3182bd\"/>\n";
  }
  if (report.envelope && T > 0) {
    svg << "<polyline class=\"envelope\" points=\"" << polyline(env) << "\" fill=\"none\" stroke=\"#e6550d\" stroke-width=\"2\"/>\n";
    const char* labels[] = {"A", "S", "D", "R"};
    const auto taus = report.envelope->taus.as_array();
    for (std::size_t k = 0; k < 4; ++k) {
      const double x = px(static_cast<double>(taus[k]));
      svg << "<line class=\"tau\" x1=\"" << num(x) << "\" y1=\"" << top << "\" x2=\"" << num(x) << "\" y2=\"" << num(py(0))
          << "\" stroke=\"#636363\" stroke-dasharray=\"4 3\"/>\n";
      svg << "<text x=\"" << num(x + 2) << "\" y=\"" << top + 10 << "\" font-size=\"10\">" << labels[k] << "</text>\n";
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    svg << "<circle class=\"observed\" cx=\"" << num(px(static_cast<double>(t))) << "\" cy=\""
        << num(py(static_cast<double>(report.observed[t]))) << "\" r=\"2.5\" fill=\"black\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace tunedemand::io
