#include "stochep/harness/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "stochep/harness/io.hpp"

namespace stochep::harness {

namespace fs = std::filesystem;

namespace {

constexpr double kWidth = 900, kHeight = 480;
constexpr double kLeft = 80, kRight = 300, kTop = 40, kBottom = 60;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Axis {
  bool log = true;
  double lo = 0, hi = 1;  // in transformed units
  double pixel_lo = 0, pixel_hi = 1;

  double t(double v) const { return log ? std::log10(v) : v; }
  double map(double v) const { return pixel_lo + (t(v) - lo) / (hi - lo) * (pixel_hi - pixel_lo); }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      // 1-2-5 ticks when fewer than two decades are shown
      const bool fine = hi - lo < 2.0;
      for (double e = std::floor(lo); e <= std::ceil(hi); e += 1.0)
        for (double m : {1.0, 2.0, 5.0}) {
          if (m != 1.0 && !fine) continue;
          const double v = m * std::pow(10.0, e);
          if (std::log10(v) >= lo - 1e-9 && std::log10(v) <= hi + 1e-9) out.push_back(v);
        }
      return out;
    }
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-12; v += step) out.push_back(std::abs(v) < 1e-14 ? 0.0 : v);
    return out;
  }
};

bool drawable(double v, bool log) { return std::isfinite(v) && (!log || v > 0.0); }

Axis make_axis(std::vector<double> values, bool log, double pixel_lo, double pixel_hi) {
  Axis a;
  a.log = log;
  a.pixel_lo = pixel_lo;
  a.pixel_hi = pixel_hi;
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  lo = a.t(lo);
  hi = a.t(hi);
  if (hi - lo < 1e-12) {
    lo -= log ? 0.5 : std::max(1e-12, std::abs(lo) * 0.1 + 1e-12);
    hi += log ? 0.5 : std::max(1e-12, std::abs(hi) * 0.1 + 1e-12);
  }
  const double pad = 0.04 * (hi - lo);
  a.lo = lo - pad;
  a.hi = hi + pad;
  return a;
}

std::string read_if_exists(const fs::path& p) { return fs::exists(p) ? read_file(p) : std::string(); }

std::map<std::string, std::size_t> columns(const std::vector<std::string>& header) {
  std::map<std::string, std::size_t> c;
  for (std::size_t k = 0; k < header.size(); ++k) c[header[k]] = k;
  return c;
}

bool write_chart(const Chart& chart, const fs::path& path, std::ostream* warn, std::vector<fs::path>& written) {
  const std::string svg = render_svg(chart, warn);
  if (svg.empty()) {
    if (warn) *warn << "warning: " << path.filename().string() << " omitted, no data to draw\n";
    return false;
  }
  write_file_atomic(path, svg);
  written.push_back(path);
  return true;
}

Chart frontier_chart(const std::string& csv, const std::string& axis_name) {
  Chart chart;
  chart.title = "Pareto frontier of KL to the reference";
  chart.x_label = axis_name == "steps" ? "sampler steps" : "wall-clock seconds";
  chart.y_label = "KL(reference || approximation)";
  const auto rows = parse_csv(csv);
  if (rows.empty()) return chart;
  auto c = columns(rows[0]);
  std::map<std::string, Series> by_variant;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& r = rows[k];
    if (r.at(c["axis"]) != axis_name) continue;
    Series& s = by_variant[r.at(c["variant"])];
    s.label = r.at(c["variant"]);
    s.x.push_back(parse_double(r.at(c["x"])));
    s.y.push_back(parse_double(r.at(c["kl"])));
    s.y_lo.push_back(parse_double(r.at(c["kl_min"])));
    s.y_hi.push_back(parse_double(r.at(c["kl_max"])));
  }
  for (auto& [name, s] : by_variant) chart.series.push_back(std::move(s));
  return chart;
}

Chart bias_chart(const std::string& csv) {
  Chart chart;
  chart.title = "Bias in the site parameters after one parallel update";
  chart.x_label = "step size";
  chart.y_label = "mean |bias| over sites and components";
  const auto rows = parse_csv(csv);
  if (rows.empty()) return chart;
  auto c = columns(rows[0]);
  std::map<std::string, Series> by_variant;
  std::map<std::string, std::string> slope;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const std::string v = r.at(c["variant"]);
    const std::string metric = r.at(c["metric"]);
    if (metric == "bias") {
      Series& s = by_variant[v];
      s.label = v;
      const double y = parse_double(r.at(c["value"]));
      const double se = parse_double(r.at(c["stderr"]));
      s.x.push_back(parse_double(r.at(c["step_size"])));
      s.y.push_back(y);
      s.y_lo.push_back(y - 2.0 * se);
      s.y_hi.push_back(y + 2.0 * se);
    } else if (metric == "slope") {
      const double sl = parse_double(r.at(c["value"]));
      if (std::isfinite(sl)) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s slope %.2f +- %.2f", v.c_str(), sl, parse_double(r.at(c["stderr"])));
        slope[v] = buf;
      } else {
        slope[v] = v + " slope n/a (no significant bias)";
      }
    }
  }
  for (auto& [name, s] : by_variant) chart.series.push_back(std::move(s));
  for (auto& [name, note] : slope) chart.notes.push_back(note);
  return chart;
}

Chart budget_chart(const std::string& csv) {
  Chart chart;
  chart.title = "Expected decrease in L under a fixed sample budget";
  chart.x_label = "step size";
  chart.y_label = "mean decrease in L";
  chart.log_y = false;
  const auto rows = parse_csv(csv);
  if (rows.empty()) return chart;
  auto c = columns(rows[0]);
  std::map<std::string, Series> arms;
  std::map<std::string, std::map<std::string, int>> failures;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& r = rows[k];
    if (r.at(c["metric"]) == "failures")
      failures[r.at(c["variant"]) + r.at(c["estimator"]) + r.at(c["n_samp"])][r.at(c["step_size"])] =
          std::stoi(r.at(c["value"]));
  }
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& r = rows[k];
    if (r.at(c["metric"]) != "decrease") continue;
    const std::string key = r.at(c["variant"]) + r.at(c["estimator"]) + r.at(c["n_samp"]);
    if (failures[key][r.at(c["step_size"])] > 0) continue;
    Series& s = arms[key];
    s.label = r.at(c["variant"]) + " " + r.at(c["estimator"]) + " n=" + r.at(c["n_samp"]);
    const double y = parse_double(r.at(c["value"]));
    const double se = parse_double(r.at(c["stderr"]));
    s.x.push_back(parse_double(r.at(c["step_size"])));
    s.y.push_back(y);
    s.y_lo.push_back(y - 2.0 * se);
    s.y_hi.push_back(y + 2.0 * se);
  }
  for (auto& [key, s] : arms) chart.series.push_back(std::move(s));
  return chart;
}

}  // namespace

std::string render_svg(const Chart& chart, std::ostream* warn) {
  std::vector<Series> kept;
  std::vector<double> xs, ys;
  for (const Series& s : chart.series) {
    Series clean;
    clean.label = s.label;
    const bool band = s.y_lo.size() == s.y.size() && s.y_hi.size() == s.y.size();
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      if (!drawable(s.x[k], chart.log_x) || !drawable(s.y[k], chart.log_y)) continue;
      clean.x.push_back(s.x[k]);
      clean.y.push_back(s.y[k]);
      xs.push_back(s.x[k]);
      ys.push_back(s.y[k]);
      if (band) {
        const double lo = drawable(s.y_lo[k], chart.log_y) ? s.y_lo[k] : s.y[k];
        const double hi = drawable(s.y_hi[k], chart.log_y) ? s.y_hi[k] : s.y[k];
        clean.y_lo.push_back(lo);
        clean.y_hi.push_back(hi);
        ys.push_back(lo);
        ys.push_back(hi);
      }
    }
    if (clean.x.empty()) {
      if (warn) *warn << "warning: series '" << s.label << "' of \"" << chart.title << "\" has no drawable points, skipped\n";
      continue;
    }
    kept.push_back(std::move(clean));
  }
  if (kept.empty()) return {};

  const Axis ax = make_axis(xs, chart.log_x, kLeft, kWidth - kRight);
  const Axis ay = make_axis(ys, chart.log_y, kHeight - kBottom, kTop);
  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) +
       "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(chart.title) +
       "</text>\n";
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  o += "<rect x=\"" + fmt(x0) + "\" y=\"" + fmt(y1) + "\" width=\"" + fmt(x1 - x0) + "\" height=\"" + fmt(y0 - y1) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ax.ticks()) {
    const double px = ax.map(t);
    o += "<line x1=\"" + fmt(px) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(px) + "\" y2=\"" + fmt(y1) +
         "\" stroke=\"#ddd\"/>\n";
    o += "<text x=\"" + fmt(px) + "\" y=\"" + fmt(y0 + 16) + "\" text-anchor=\"middle\">" + tick_label(t) + "</text>\n";
  }
  for (double t : ay.ticks()) {
    const double py = ay.map(t);
    o += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(py) + "\" x2=\"" + fmt(x1) + "\" y2=\"" + fmt(py) +
         "\" stroke=\"#ddd\"/>\n";
    o += "<text x=\"" + fmt(x0 - 6) + "\" y=\"" + fmt(py + 4) + "\" text-anchor=\"end\">" + tick_label(t) + "</text>\n";
  }
  o += "<text x=\"" + fmt((x0 + x1) / 2) + "\" y=\"" + fmt(kHeight - 18) + "\" text-anchor=\"middle\">" +
       escape(chart.x_label) + (chart.log_x ? " (log)" : "") + "</text>\n";
  o += "<text transform=\"translate(18," + fmt((y0 + y1) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       escape(chart.y_label) + (chart.log_y ? " (log)" : "") + "</text>\n";

  for (std::size_t k = 0; k < kept.size(); ++k) {
    const Series& s = kept[k];
    const std::string color = kColors[k % (sizeof kColors / sizeof *kColors)];
    for (std::size_t j = 0; j < s.y_lo.size(); ++j) {
      o += "<line x1=\"" + fmt(ax.map(s.x[j])) + "\" y1=\"" + fmt(ay.map(s.y_lo[j])) + "\" x2=\"" + fmt(ax.map(s.x[j])) +
           "\" y2=\"" + fmt(ay.map(s.y_hi[j])) + "\" stroke=\"" + color + "\" stroke-opacity=\"0.35\"/>\n";
    }
    o += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.6\" points=\"";
    for (std::size_t j = 0; j < s.x.size(); ++j) o += fmt(ax.map(s.x[j])) + "," + fmt(ay.map(s.y[j])) + " ";
    o += "\"/>\n";
    for (std::size_t j = 0; j < s.x.size(); ++j)
      o += "<circle cx=\"" + fmt(ax.map(s.x[j])) + "\" cy=\"" + fmt(ay.map(s.y[j])) + "\" r=\"2\" fill=\"" + color +
           "\"/>\n";
    const double ly = kTop + 10 + 18 * static_cast<double>(k);
    o += "<line x1=\"" + fmt(x1 + 12) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(x1 + 32) + "\" y2=\"" + fmt(ly) +
         "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"" + fmt(x1 + 38) + "\" y=\"" + fmt(ly + 4) + "\">" + escape(s.label) + "</text>\n";
  }
  for (std::size_t k = 0; k < chart.notes.size(); ++k) {
    const double ly = kTop + 30 + 18 * static_cast<double>(kept.size() + k);
    o += "<text x=\"" + fmt(x1 + 12) + "\" y=\"" + fmt(ly) + "\" font-size=\"11\">" + escape(chart.notes[k]) +
         "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

std::vector<fs::path> emit_plots(const fs::path& dir, std::ostream* warn) {
  std::vector<fs::path> written;
  const fs::path out = dir / "plots";
  if (const std::string f = read_if_exists(dir / "frontier.csv"); !f.empty())
    write_chart(frontier_chart(f, "steps"), out / "frontier_steps.svg", warn, written);
  if (const std::string f = read_if_exists(dir / "frontier_seconds.csv"); !f.empty())
    write_chart(frontier_chart(f, "seconds"), out / "frontier_seconds.svg", warn, written);
  if (const std::string b = read_if_exists(dir / "bias.csv"); !b.empty())
    write_chart(bias_chart(b), out / "bias.svg", warn, written);
  if (const std::string b = read_if_exists(dir / "budget.csv"); !b.empty())
    write_chart(budget_chart(b), out / "budget.svg", warn, written);
  if (written.empty() && warn) *warn << "warning: no tables found in " << dir.string() << ", nothing plotted\n";
  return written;
}

}  // namespace stochep::harness
