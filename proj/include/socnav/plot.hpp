#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace socnav {

/// Writes 8-bit RGB pixels (row-major, height * width * 3 bytes) as a PNG file.
void write_png(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb);

struct PlotSeries {
  std::string label;
  std::array<std::uint8_t, 3> color{0, 0, 0};
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct PlotOptions {
  std::string title;
  std::string x_label = "epoch";
  std::string y_label = "test loss";
  int width = 640;
  int height = 420;
};

/// Line chart with axes, tick labels and a legend.
void plot_lines(const std::filesystem::path& path, const std::vector<PlotSeries>& series, const PlotOptions& options);

}  // namespace socnav
