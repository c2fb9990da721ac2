#include <cmath>
#include <vector>

#include "stochep/targets.hpp"

namespace stochep {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

Vector HlrConfig::resolved_prior_mean() const {
  return prior_mean.size() == 0 ? Vector::Zero(dim_z()) : prior_mean;
}

Vector HlrConfig::resolved_prior_variance() const {
  if (prior_variance.size() != 0) return prior_variance;
  Vector v(dim_z());
  for (int j = 0; j < dim; ++j) {
    v[2 * j] = 4.0;
    v[2 * j + 1] = 2.0;
  }
  return v;
}

std::size_t HlrDataset::total_rows() const {
  std::size_t n = 0;
  for (const Vector& y : labels) n += static_cast<std::size_t>(y.size());
  return n;
}

double log_sigmoid(double t) {
  return t >= 0.0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t));
}

HlrDataset hlr_generate_data(const HlrConfig& cfg, std::uint64_t seed) {
  if (cfg.groups < 1 || cfg.dim < 1 || cfg.rows < 1) throw std::invalid_argument("invalid HLR shape");
  HlrDataset data;
  data.config = cfg;
  data.config.prior_mean = cfg.resolved_prior_mean();
  data.config.prior_variance = cfg.resolved_prior_variance();
  data.seed = seed;

  Rng rng = make_stream(seed, 0x484c52);
  const Vector& pm = data.config.prior_mean;
  const Vector& pv = data.config.prior_variance;
  data.true_z = pm + pv.cwiseSqrt().cwiseProduct(standard_normal_vector(rng, cfg.dim_z()));

  for (int i = 0; i < cfg.groups; ++i) {
    Vector w(cfg.dim);
    for (int j = 0; j < cfg.dim; ++j)
      w[j] = data.true_z[2 * j] + std::exp(0.5 * data.true_z[2 * j + 1]) * standard_normal(rng);
    Matrix x(cfg.rows, cfg.dim);
    Vector y(cfg.rows);
    for (int r = 0; r < cfg.rows; ++r) {
      x.row(r) = standard_normal_vector(rng, cfg.dim).transpose();
      const double p = sigmoid(x.row(r).dot(w));
      y[r] = std::bernoulli_distribution(p)(rng) ? 1.0 : 0.0;
    }
    data.true_w.push_back(std::move(w));
    data.covariates.push_back(std::move(x));
    data.labels.push_back(std::move(y));
  }
  return data;
}

namespace {

// sum_r log Bernoulli(y_r | sigmoid(x_r'w)); adds the w-gradient into gw when non-null.
double likelihood_terms(const HlrDataset& data, int i, const double* w, double* gw) {
  const int d = data.config.dim;
  const Matrix& x = data.covariates.at(static_cast<std::size_t>(i));
  const Vector& y = data.labels.at(static_cast<std::size_t>(i));
  double lp = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double t = 0.0;
    for (int j = 0; j < d; ++j) t += x(r, j) * w[j];
    // log sigmoid(+-t) and sigmoid(t) from one exponential
    const double e = std::exp(-std::abs(t));
    const double l1p = std::log1p(e);
    const double st = y[r] > 0.5 ? t : -t;
    lp += st >= 0.0 ? -l1p : st - l1p;
    if (gw) {
      const double sig = t >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
      const double resid = y[r] - sig;
      for (int j = 0; j < d; ++j) gw[j] += x(r, j) * resid;
    }
  }
  return lp;
}

double joint_terms(const HlrDataset& data, int i, const double* z, const double* w, double* gz, double* gw) {
  const int d = data.config.dim;
  double lp = 0.0;
  for (int j = 0; j < d; ++j) {
    const double logvar = z[2 * j + 1];
    const double inv_var = std::exp(-logvar);
    const double r = w[j] - z[2 * j];
    lp += -0.5 * kLog2Pi - 0.5 * logvar - 0.5 * r * r * inv_var;
    if (gz) {
      gz[2 * j] = r * inv_var;
      gz[2 * j + 1] = -0.5 + 0.5 * r * r * inv_var;
    }
    if (gw) gw[j] = -r * inv_var;
  }
  return lp + likelihood_terms(data, i, w, gw);
}

// Same factor over (z, u): log N(u | 0, I) + likelihood at w = mu + sigma u.
double non_centered_terms(const HlrDataset& data, int i, const double* z, const double* u, double* gz,
                          double* gu) {
  constexpr int kMaxStack = 64;
  const int d = data.config.dim;
  double w_stack[kMaxStack], gw_stack[kMaxStack];
  std::vector<double> heap;
  double* w = w_stack;
  double* gw = gw_stack;
  if (d > kMaxStack) {
    heap.resize(2 * static_cast<std::size_t>(d));
    w = heap.data();
    gw = heap.data() + d;
  }
  double lp = 0.0;
  for (int j = 0; j < d; ++j) {
    w[j] = z[2 * j] + std::exp(0.5 * z[2 * j + 1]) * u[j];
    gw[j] = 0.0;
    lp += -0.5 * kLog2Pi - 0.5 * u[j] * u[j];
  }
  lp += likelihood_terms(data, i, w, gz ? gw : nullptr);
  if (gz) {
    for (int j = 0; j < d; ++j) {
      const double sigma = std::exp(0.5 * z[2 * j + 1]);
      gz[2 * j] = gw[j];
      gz[2 * j + 1] = 0.5 * sigma * u[j] * gw[j];
      gu[j] = sigma * gw[j] - u[j];
    }
  }
  return lp;
}

}  // namespace

std::string to_string(HlrParameterization p) {
  return p == HlrParameterization::centered ? "centered" : "non-centered";
}

HlrParameterization hlr_parameterization_from_string(const std::string& name) {
  if (name == "centered") return HlrParameterization::centered;
  if (name == "non-centered") return HlrParameterization::non_centered;
  throw std::invalid_argument("unknown HLR parameterization '" + name + "'");
}

double hlr_joint_log_density(const HlrDataset& data, int i, const Vector& z, const Vector& w,
                             Vector* grad_z, Vector* grad_w) {
  const int d = data.config.dim;
  if (z.size() != 2 * d || w.size() != d) throw std::invalid_argument("HLR position has the wrong shape");
  if (grad_z) grad_z->resize(2 * d);
  if (grad_w) grad_w->resize(d);
  return joint_terms(data, i, z.data(), w.data(), grad_z ? grad_z->data() : nullptr,
                     grad_w ? grad_w->data() : nullptr);
}

// ---------------------------------------------------------------------------

HlrSite::HlrSite(std::shared_ptr<const HlrDataset> data, int index, HlrParameterization param)
    : data_(std::move(data)), index_(index), param_(param) {
  if (index_ < 0 || index_ >= data_->config.groups) throw std::out_of_range("HLR group index out of range");
}

double HlrSite::log_factor(const Vector&) const {
  throw UnsupportedError("HLR log factor is a marginal over w_i; use extended_log_factor");
}

Vector HlrSite::grad_log_factor(const Vector&) const {
  throw UnsupportedError("HLR log factor is a marginal over w_i; use extended_log_factor");
}

double HlrSite::extended_log_factor(const Vector& position, Vector& grad) const {
  const int dz = dim_z();
  grad.resize(dz + local_latent_dim());
  if (param_ == HlrParameterization::non_centered)
    return non_centered_terms(*data_, index_, position.data(), position.data() + dz, grad.data(), grad.data() + dz);
  return joint_terms(*data_, index_, position.data(), position.data() + dz, grad.data(), grad.data() + dz);
}

Vector HlrSite::initial_latent(const Vector& z, Rng& rng) const {
  const int d = data_->config.dim;
  if (param_ == HlrParameterization::non_centered) return standard_normal_vector(rng, d);
  Vector w(d);
  for (int j = 0; j < d; ++j) w[j] = z[2 * j] + std::exp(0.5 * z[2 * j + 1]) * standard_normal(rng);
  return w;
}

Problem make_hlr_problem(std::shared_ptr<const HlrDataset> data, HlrParameterization param) {
  const HlrConfig& cfg = data->config;
  const Family family = Family::gaussian_dense(cfg.dim_z());
  const Vector var = cfg.resolved_prior_variance();
  const Vector mean = cfg.resolved_prior_mean();
  const Matrix precision = var.cwiseInverse().asDiagonal();
  Problem problem{family, pack_natural(family, precision * mean, precision), {}};
  for (int i = 0; i < cfg.groups; ++i) problem.targets.push_back(std::make_shared<HlrSite>(data, i, param));
  return problem;
}

}  // namespace stochep
