#include "rknlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rknlab {

namespace {

std::string num(double v) {
  std::ostringstream out;
  out << std::setprecision(6) << v;
  return out.str();
}

// Round a span to a pleasant tick step (1/2/5 decades).
double nice_step(double span, int target_ticks) {
  const double raw = span / std::max(target_ticks, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double mult : {1.0, 2.0, 5.0, 10.0})
    if (raw <= mult * mag) return mult * mag;
  return 10.0 * mag;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string svg_palette(size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return colors[i % (sizeof(colors) / sizeof(colors[0]))];
}

std::string SvgChart::render() const {
  if (series.empty()) throw std::invalid_argument("SvgChart: no series");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("SvgChart: series '" + s.label + "' x/y mismatch");
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin) || !std::isfinite(ymin))
    throw std::invalid_argument("SvgChart: no finite data");
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const int ml = 64, mr = 16, mt = 36, mb = 48;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << ' ' << height
      << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Gridlines and ticks.
  const double xstep = nice_step(xmax - xmin, 8);
  const double ystep = nice_step(ymax - ymin, 6);
  svg << "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
  for (double x = std::ceil(xmin / xstep) * xstep; x <= xmax + 1e-9; x += xstep)
    svg << "<line x1=\"" << num(px(x)) << "\" y1=\"" << mt << "\" x2=\"" << num(px(x))
        << "\" y2=\"" << mt + ph << "\"/>\n";
  for (double y = std::ceil(ymin / ystep) * ystep; y <= ymax + 1e-9; y += ystep)
    svg << "<line x1=\"" << ml << "\" y1=\"" << num(py(y)) << "\" x2=\"" << ml + pw
        << "\" y2=\"" << num(py(y)) << "\"/>\n";
  svg << "</g>\n";

  svg << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">\n";
  for (double x = std::ceil(xmin / xstep) * xstep; x <= xmax + 1e-9; x += xstep)
    svg << "<text x=\"" << num(px(x)) << "\" y=\"" << mt + ph + 16
        << "\" text-anchor=\"middle\">" << num(x) << "</text>\n";
  for (double y = std::ceil(ymin / ystep) * ystep; y <= ymax + 1e-9; y += ystep)
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << num(py(y) + 4)
        << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
  svg << "</g>\n";

  // Axes frame.
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << num(pw)
      << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"#333333\"/>\n";

  for (const auto& s : series) {
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.6\"";
    if (s.dash_dot) svg << " stroke-dasharray=\"8 3 2 3\"";
    svg << " points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      svg << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
    }
    svg << "\"/>\n";
  }

  // Title, labels, legend.
  svg << "<g font-family=\"sans-serif\" fill=\"#111111\">\n"
      << "<text x=\"" << width / 2 << "\" y=\"20\" font-size=\"14\" "
      << "text-anchor=\"middle\">" << escape(title) << "</text>\n"
      << "<text x=\"" << width / 2 << "\" y=\"" << height - 10
      << "\" font-size=\"12\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n"
      << "<text x=\"14\" y=\"" << height / 2 << "\" font-size=\"12\" "
      << "text-anchor=\"middle\" transform=\"rotate(-90 14 " << height / 2 << ")\">"
      << escape(y_label) << "</text>\n";
  double ly = mt + 14;
  for (const auto& s : series) {
    svg << "<line x1=\"" << ml + 10 << "\" y1=\"" << num(ly - 4) << "\" x2=\""
        << ml + 38 << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << s.color
        << "\" stroke-width=\"1.6\"" << (s.dash_dot ? " stroke-dasharray=\"8 3 2 3\"" : "")
        << "/>\n"
        << "<text x=\"" << ml + 44 << "\" y=\"" << num(ly) << "\" font-size=\"11\">"
        << escape(s.label) << "</text>\n";
    ly += 16;
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

void SvgChart::save(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& prov) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("SvgChart::save: cannot open '" + path + "'");
  if (!prov.empty()) {
    out << "<!--\n";
    for (const auto& [key, value] : prov) out << key << ": " << value << '\n';
    out << "-->\n";
  }
  out << render();
}

}  // namespace rknlab
