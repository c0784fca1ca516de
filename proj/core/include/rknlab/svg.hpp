// Minimal self-contained SVG line charts (no external assets).
#pragma once

#include <string>
#include <vector>

namespace rknlab {

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dash_dot = false;  // dash-dot stroke (used for empirical curves)
};

struct SvgChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgSeries> series;
  int width = 760;
  int height = 480;

  std::string render() const;
  void save(const std::string& path,
            const std::vector<std::pair<std::string, std::string>>& prov = {}) const;
};

// Default qualitative palette, cycled by index.
std::string svg_palette(size_t i);

}  // namespace rknlab
