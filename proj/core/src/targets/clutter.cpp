#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>

#include "stochep/targets.hpp"

namespace stochep {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity(); }

const Vector& observation(const ClutterConfig& cfg, int i) {
  if (i < 0 || i >= static_cast<int>(cfg.observations.size()))
    throw std::out_of_range("clutter site index out of range");
  return cfg.observations[static_cast<std::size_t>(i)];
}

// log of the two unnormalised component weights at z
std::pair<double, double> component_logs(const ClutterConfig& cfg, const Vector& x, const Vector& z) {
  const int d = cfg.dim_z;
  const double signal = safe_log(1.0 - cfg.clutter_weight) - 0.5 * d * kLog2Pi - 0.5 * (x - z).squaredNorm();
  const double clutter = safe_log(cfg.clutter_weight) - 0.5 * d * (kLog2Pi + std::log(cfg.clutter_variance)) -
                         0.5 * x.squaredNorm() / cfg.clutter_variance;
  return {signal, clutter};
}

void require_unit_power(double power) {
  if (power != 1.0)
    throw UnsupportedError("clutter tilted moments are only analytic at power 1 (beta_i = 1)");
}

// Tilted distribution base(z) * [(1-w) N(x|z,I) + w N(x|0,aI)] as a two-component mixture.
struct TiltedMixture {
  double log_signal_weight;   // log[(1-w) N(x | m_b, S_b + I)]
  double log_clutter_weight;  // log[w N(x | 0, aI)]
  Vector base_mean;
  Matrix base_cov;
  Vector post_mean;
  Matrix post_cov;

  double responsibility() const {
    const double z = log_sum_exp(log_signal_weight, log_clutter_weight);
    return std::exp(log_signal_weight - z);
  }
};

TiltedMixture tilted_mixture(const ClutterConfig& cfg, const Vector& x, const NaturalParams& base) {
  const int d = cfg.dim_z;
  require_natural_domain(base.family, base.values, "clutter tilted base");
  QuadraticForm q = unpack_natural(base.family, base.values);
  Eigen::LLT<Matrix> base_llt(q.precision);
  TiltedMixture mix;
  mix.base_mean = base_llt.solve(q.shift);
  mix.base_cov = base_llt.solve(Matrix::Identity(d, d));

  const Matrix marg = mix.base_cov + Matrix::Identity(d, d);
  Eigen::LLT<Matrix> marg_llt(marg);
  const Vector r = x - mix.base_mean;
  const double logdet = 2.0 * marg_llt.matrixLLT().diagonal().array().log().sum();
  mix.log_signal_weight = safe_log(1.0 - cfg.clutter_weight) - 0.5 * d * kLog2Pi - 0.5 * logdet -
                          0.5 * r.dot(marg_llt.solve(r));
  mix.log_clutter_weight = safe_log(cfg.clutter_weight) -
                           0.5 * d * (kLog2Pi + std::log(cfg.clutter_variance)) -
                           0.5 * x.squaredNorm() / cfg.clutter_variance;

  Eigen::LLT<Matrix> post_llt(q.precision + Matrix::Identity(d, d));
  mix.post_cov = post_llt.solve(Matrix::Identity(d, d));
  mix.post_mean = post_llt.solve(q.shift + x);
  return mix;
}

}  // namespace

std::vector<Vector> generate_clutter_observations(const ClutterConfig& cfg, int sites,
                                                  const Vector& true_z, Rng& rng) {
  std::vector<Vector> xs;
  xs.reserve(static_cast<std::size_t>(sites));
  std::bernoulli_distribution is_clutter(cfg.clutter_weight);
  for (int i = 0; i < sites; ++i) {
    const Vector eps = standard_normal_vector(rng, cfg.dim_z);
    if (is_clutter(rng)) {
      xs.push_back(std::sqrt(cfg.clutter_variance) * eps);
    } else {
      xs.push_back(true_z + eps);
    }
  }
  return xs;
}

double clutter_log_factor(const ClutterConfig& cfg, int i, const Vector& z) {
  auto [a, b] = component_logs(cfg, observation(cfg, i), z);
  return log_sum_exp(a, b);
}

Vector clutter_grad_log_factor(const ClutterConfig& cfg, int i, const Vector& z) {
  const Vector& x = observation(cfg, i);
  auto [a, b] = component_logs(cfg, x, z);
  const double r = std::exp(a - log_sum_exp(a, b));
  return r * (x - z);
}

MeanParams clutter_exact_tilted_moments(const ClutterConfig& cfg, int i, const NaturalParams& base,
                                        double power) {
  require_unit_power(power);
  const TiltedMixture mix = tilted_mixture(cfg, observation(cfg, i), base);
  const double r = mix.responsibility();
  const Vector mean = r * mix.post_mean + (1.0 - r) * mix.base_mean;
  const Vector gap = mix.post_mean - mix.base_mean;
  const Matrix cov = r * mix.post_cov + (1.0 - r) * mix.base_cov + r * (1.0 - r) * gap * gap.transpose();
  return {base.family, pack_mean(base.family, mean, cov)};
}

// ---------------------------------------------------------------------------

ClutterSite::ClutterSite(std::shared_ptr<const ClutterConfig> cfg, int index)
    : cfg_(std::move(cfg)), index_(index) {
  observation(*cfg_, index_);
}

double ClutterSite::log_factor(const Vector& z) const { return clutter_log_factor(*cfg_, index_, z); }

Vector ClutterSite::grad_log_factor(const Vector& z) const {
  return clutter_grad_log_factor(*cfg_, index_, z);
}

MeanParams ClutterSite::exact_tilted_moments(const NaturalParams& base, double power) const {
  return clutter_exact_tilted_moments(*cfg_, index_, base, power);
}

double ClutterSite::exact_tilted_log_normalizer(const NaturalParams& base, double power) const {
  require_unit_power(power);
  const TiltedMixture mix = tilted_mixture(*cfg_, observation(*cfg_, index_), base);
  return log_partition(base) + log_sum_exp(mix.log_signal_weight, mix.log_clutter_weight);
}

Vector ClutterSite::sample_tilted(const NaturalParams& base, double power, Rng& rng) const {
  require_unit_power(power);
  const TiltedMixture mix = tilted_mixture(*cfg_, observation(*cfg_, index_), base);
  const bool signal = uniform01(rng) < mix.responsibility();
  const Matrix& cov = signal ? mix.post_cov : mix.base_cov;
  const Vector& mean = signal ? mix.post_mean : mix.base_mean;
  const Vector eps = standard_normal_vector(rng, cfg_->dim_z);
  if (base.family.kind() == FamilyKind::gaussian_diagonal) {
    return mean.array() + cov.diagonal().array().sqrt() * eps.array();
  }
  return mean + Eigen::LLT<Matrix>(cov).matrixL() * eps;
}

double ClutterSite::responsibility(const NaturalParams& base) const {
  return tilted_mixture(*cfg_, observation(*cfg_, index_), base).responsibility();
}

Problem make_clutter_problem(const ClutterConfig& cfg, FamilyKind kind) {
  if (!(cfg.clutter_weight >= 0.0 && cfg.clutter_weight < 1.0))
    throw std::invalid_argument("clutter weight must lie in [0, 1)");
  if (!(cfg.clutter_variance > 0.0) || !(cfg.prior_variance > 0.0))
    throw std::invalid_argument("clutter and prior variances must be positive");
  for (const Vector& x : cfg.observations)
    if (x.size() != cfg.dim_z) throw std::invalid_argument("clutter observation has wrong dimension");

  const Family family = kind == FamilyKind::gaussian_dense ? Family::gaussian_dense(cfg.dim_z)
                                                           : Family::gaussian_diagonal(cfg.dim_z);
  auto shared = std::make_shared<const ClutterConfig>(cfg);
  Problem problem{family,
                  pack_natural(family, Vector::Zero(cfg.dim_z),
                               Matrix::Identity(cfg.dim_z, cfg.dim_z) / cfg.prior_variance),
                  {}};
  for (int i = 0; i < static_cast<int>(cfg.observations.size()); ++i)
    problem.targets.push_back(std::make_shared<ClutterSite>(shared, i));
  return problem;
}

}  // namespace stochep
