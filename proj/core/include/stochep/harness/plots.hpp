#pragma once

// Static SVG line charts. Every chart is drawn from a CSV in the output
// directory, so plotting can be rerun or skipped.

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace stochep::harness {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> y_lo;  // optional error band, same length as y
  std::vector<double> y_hi;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = true;
  bool log_y = true;
  std::vector<Series> series;
  std::vector<std::string> notes;  // printed under the legend
};

/// Points that are non-finite, or non-positive on a log axis, are not drawn.
/// Series left empty are dropped with a warning; an empty string comes back
/// when no series remains.
std::string render_svg(const Chart& chart, std::ostream* warn = nullptr);

/// Charts for whichever of frontier.csv, bias.csv and budget.csv exist in
/// `dir`, written to dir/plots. Returns the files written.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& dir, std::ostream* warn = nullptr);

}  // namespace stochep::harness
