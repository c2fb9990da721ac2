#pragma once

// Pareto frontier over a hyperparameter sweep: at each x, the lowest
// seed-averaged best-so-far KL reached by any setting.

#include <string>
#include <vector>

namespace stochep::harness {

enum class FrontierAxis { steps, seconds };

std::string to_string(FrontierAxis axis);

/// One run's KL curve against cumulative cost.
struct RunCurve {
  std::string setting;
  int seed_index = 0;
  std::vector<double> x;   // non-decreasing
  std::vector<double> kl;
  bool failed = false;     // a failed run disqualifies its whole setting
};

struct FrontierPoint {
  double x = 0.0;
  double kl = 0.0;      // NaN where no setting has reached x on every seed
  double kl_min = 0.0;  // over seeds, arg-min setting
  double kl_max = 0.0;
  std::string setting;
};

/// n log-spaced points from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, int n = 64);

/// min_{k : x_k <= x} kl_k, NaN before the first point. NaN KLs are ignored.
double best_so_far(const RunCurve& curve, double x);

/// Throws std::invalid_argument on empty input.
std::vector<FrontierPoint> pareto_frontier(const std::vector<RunCurve>& runs, const std::vector<double>& grid);

/// a(x) <= b(x) at every grid point x >= x_from where b is defined; a must be
/// defined wherever b is.
bool weakly_dominates(const std::vector<FrontierPoint>& a, const std::vector<FrontierPoint>& b, double x_from);

/// "# stochep frontier v1" table: variant, axis, x, kl, kl_min, kl_max, setting.
std::string frontier_csv_rows(const std::string& variant, FrontierAxis axis, const std::vector<FrontierPoint>& points);
std::string frontier_csv_header();

}  // namespace stochep::harness
