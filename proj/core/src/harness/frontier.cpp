#include "stochep/harness/frontier.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "stochep/harness/io.hpp"

namespace stochep::harness {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string to_string(FrontierAxis axis) { return axis == FrontierAxis::steps ? "steps" : "seconds"; }

std::vector<double> log_grid(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi >= lo) || n < 1) throw std::invalid_argument("bad log grid");
  std::vector<double> g(static_cast<std::size_t>(n));
  if (n == 1) {
    g[0] = lo;
    return g;
  }
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (int k = 0; k < n; ++k) g[static_cast<std::size_t>(k)] = std::exp(a + (b - a) * k / (n - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

double best_so_far(const RunCurve& c, double x) {
  double best = kNaN;
  for (std::size_t k = 0; k < c.x.size() && c.x[k] <= x; ++k) {
    if (std::isnan(c.kl[k])) continue;
    if (std::isnan(best) || c.kl[k] < best) best = c.kl[k];
  }
  return best;
}

std::vector<FrontierPoint> pareto_frontier(const std::vector<RunCurve>& runs, const std::vector<double>& grid) {
  if (runs.empty()) throw std::invalid_argument("pareto_frontier: no runs");
  std::map<std::string, std::vector<const RunCurve*>> by_setting;
  std::map<std::string, bool> failed;
  for (const RunCurve& r : runs) {
    by_setting[r.setting].push_back(&r);
    failed[r.setting] = failed[r.setting] || r.failed;
  }
  std::vector<FrontierPoint> out;
  for (double x : grid) {
    FrontierPoint p{x, kNaN, kNaN, kNaN, ""};
    for (const auto& [setting, curves] : by_setting) {
      if (failed[setting]) continue;
      double sum = 0.0, lo = kNaN, hi = kNaN;
      bool defined = true;
      for (const RunCurve* c : curves) {
        const double v = best_so_far(*c, x);
        if (std::isnan(v)) {
          defined = false;
          break;
        }
        sum += v;
        lo = std::isnan(lo) ? v : std::min(lo, v);
        hi = std::isnan(hi) ? v : std::max(hi, v);
      }
      if (!defined) continue;
      const double mean = sum / static_cast<double>(curves.size());
      if (std::isnan(p.kl) || mean < p.kl) p = {x, mean, lo, hi, setting};
    }
    out.push_back(p);
  }
  return out;
}

bool weakly_dominates(const std::vector<FrontierPoint>& a, const std::vector<FrontierPoint>& b, double x_from) {
  if (a.size() != b.size()) throw std::invalid_argument("frontiers on different grids");
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].x < x_from || std::isnan(b[k].kl)) continue;
    if (std::isnan(a[k].kl) || a[k].kl > b[k].kl) return false;
  }
  return true;
}

std::string frontier_csv_header() { return "# stochep frontier v1\nvariant,axis,x,kl,kl_min,kl_max,setting\n"; }

std::string frontier_csv_rows(const std::string& variant, FrontierAxis axis, const std::vector<FrontierPoint>& points) {
  std::string out;
  for (const FrontierPoint& p : points) {
    out += variant + ',' + to_string(axis) + ',' + format_double(p.x) + ',' + format_double(p.kl) + ',' +
           format_double(p.kl_min) + ',' + format_double(p.kl_max) + ',' + p.setting + '\n';
  }
  return out;
}

}  // namespace stochep::harness
