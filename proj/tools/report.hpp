#pragma once

// CSV tables and static SVG charts.

#include "vslam/harness.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace vslam::cli {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Shortest round-trip decimal form; empty for NaN.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
};

std::string to_csv(const CsvTable& table);
void write_text(const std::filesystem::path& path, const std::string& content);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool markers = false;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool log_y = false;
  std::vector<std::string> notes;  // drawn in the top-left corner
};

/// Panels stacked vertically in one SVG document.
std::string line_chart_svg(const std::string& title, const std::vector<Panel>& panels);

struct Box {
  std::string label;
  Quartiles stats;
};
std::string boxplot_svg(const std::string& title, const std::string& y_label, const std::vector<Box>& boxes,
                        bool log_y = false);

}  // namespace vslam::cli
