#include "stochep/sampling.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>

namespace stochep {

namespace {

constexpr double kDivergenceThreshold = 1000.0;
constexpr double kMinStep = 1e-10;
constexpr double kMaxStep = 1e3;

double clamp_step(double h) {
  if (!std::isfinite(h)) return kMaxStep;
  return std::clamp(h, kMinStep, kMaxStep);
}

double checked_log_density(const TiltedDensity& density, const Vector& x, Vector* grad) {
  const double lp = density.log_density(x, grad);
  if (!std::isfinite(lp) || (grad && !grad->allFinite())) {
    throw ChainFault("non-finite tilted log density or gradient at the current chain state");
  }
  return lp;
}

// Running mean/variance over chain positions.
struct Welford {
  long n = 0;
  Vector mean;
  Vector m2;

  void add(const Vector& x) {
    if (n == 0) {
      mean = Vector::Zero(x.size());
      m2 = Vector::Zero(x.size());
    }
    ++n;
    const Vector delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta.cwiseProduct(x - mean);
  }

  // Shrunk toward 1e-3 like common HMC implementations.
  Vector regularized_variance() const {
    const double nd = static_cast<double>(n);
    const Vector var = m2 / (nd - 1.0);
    return (nd / (nd + 5.0)) * var.array() + 1e-3 * (5.0 / (nd + 5.0));
  }
};

}  // namespace

// ---------------------------------------------------------------------------

double TiltedDensity::log_density(const Vector& x, Vector* grad) const {
  const int dz = target->dim_z();
  if (target->local_latent_dim() > 0 && power != 1.0) {
    throw UnsupportedError("joint (z, w_i) extension only targets the tilted marginal at power 1");
  }
  Vector local;
  Vector& g = grad ? *grad : local;
  double lp = target->extended_log_factor(x, g);
  if (power != 1.0) {
    lp *= power;
    g *= power;
  }
  return lp + add_natural_term(base.family, base.values, x.head(dz), grad);
}

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::oracle: return "oracle";
    case KernelKind::exact: return "exact";
    case KernelKind::rwm: return "rwm";
    case KernelKind::hmc: return "hmc";
  }
  return "?";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "oracle") return KernelKind::oracle;
  if (name == "exact") return KernelKind::exact;
  if (name == "rwm") return KernelKind::rwm;
  if (name == "hmc") return KernelKind::hmc;
  throw std::invalid_argument("unknown kernel '" + name + "'");
}

std::string to_string(EstimatorKind kind) {
  return kind == EstimatorKind::naive ? "naive" : "debiased-gaussian";
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
  if (name == "naive") return EstimatorKind::naive;
  if (name == "debiased-gaussian") return EstimatorKind::debiased_gaussian;
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

// --- dual averaging -----------------------------------------------------------

void DualAveraging::restart(double step_size) {
  mu = std::log(10.0 * step_size);
  log_step = std::log(step_size);
  log_step_bar = 0.0;
  h_bar = 0.0;
  count = 0;
}

double DualAveraging::update(double accept_prob) {
  ++count;
  const double c = static_cast<double>(count);
  const double eta = 1.0 / (c + t0);
  h_bar = (1.0 - eta) * h_bar + eta * (target - accept_prob);
  log_step = mu - std::sqrt(c) / gamma * h_bar;
  const double w = std::pow(c, -kappa);
  log_step_bar = w * log_step + (1.0 - w) * log_step_bar;
  return clamp_step(std::exp(log_step));
}

double DualAveraging::final_step() const {
  return clamp_step(std::exp(count == 0 ? log_step : log_step_bar));
}

// --- chains ---------------------------------------------------------------------

ChainState make_chain(const Vector& position, const KernelConfig& kernel, std::uint64_t seed, int site,
                      std::uint64_t epoch) {
  ChainState state;
  state.position = position;
  state.rng = make_stream(seed, static_cast<std::uint64_t>(site), epoch);
  state.step_size = kernel.initial_step_size;
  state.inverse_mass = Vector::Ones(position.size());
  state.adaptation.target = kernel.kind == KernelKind::rwm ? kernel.rwm_target_accept : kernel.target_accept;
  state.adaptation.restart(state.step_size);
  return state;
}

Vector initial_position(const NaturalParams& approx, const TiltedTarget& target, Rng& rng) {
  const Vector z = sample_member(approx, rng);
  const Vector w = target.initial_latent(z, rng);
  Vector x(z.size() + w.size());
  x << z, w;
  return x;
}

StepInfo rwm_step(const TiltedDensity& density, ChainState& state, double proposal_scale) {
  StepInfo info;
  const double lp0 = checked_log_density(density, state.position, nullptr);
  const Vector proposal = state.position + proposal_scale * standard_normal_vector(state.rng, state.position.size());
  const double lp1 = density.log_density(proposal, nullptr);
  const double log_ratio = std::isfinite(lp1) ? lp1 - lp0 : -std::numeric_limits<double>::infinity();
  info.accept_prob = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
  if (uniform01(state.rng) < info.accept_prob) {
    state.position = proposal;
    info.accepted = true;
    ++state.accepted;
  }
  ++state.transitions;
  state.sampler_steps += 1;
  return info;
}

StepInfo hmc_step(const TiltedDensity& density, ChainState& state, int leapfrog_steps, double jitter) {
  if (leapfrog_steps < 1) throw std::invalid_argument("hmc needs at least one leapfrog step");
  StepInfo info;
  const Vector& inv_mass = state.inverse_mass;
  const double h = jitter > 0.0 ? state.step_size * (1.0 + jitter * (2.0 * uniform01(state.rng) - 1.0)) : state.step_size;

  Vector grad;
  double lp = checked_log_density(density, state.position, &grad);
  Vector p = standard_normal_vector(state.rng, state.position.size()).cwiseQuotient(inv_mass.cwiseSqrt());
  const double h0 = -lp + 0.5 * p.dot(inv_mass.cwiseProduct(p));

  Vector x = state.position;
  bool finite = true;
  p += 0.5 * h * grad;
  for (int l = 0; l < leapfrog_steps; ++l) {
    x += h * inv_mass.cwiseProduct(p);
    lp = density.log_density(x, &grad);
    if (!std::isfinite(lp) || !grad.allFinite()) {
      finite = false;
      break;
    }
    p += (l + 1 < leapfrog_steps ? 1.0 : 0.5) * h * grad;
  }

  double energy_error = std::numeric_limits<double>::infinity();
  if (finite) energy_error = -lp + 0.5 * p.dot(inv_mass.cwiseProduct(p)) - h0;
  if (!std::isfinite(energy_error) || energy_error > kDivergenceThreshold) {
    info.divergent = true;
    ++state.divergences;
    info.accept_prob = 0.0;
  } else {
    info.accept_prob = energy_error <= 0.0 ? 1.0 : std::exp(-energy_error);
  }
  // Always consume the uniform so the stream does not depend on divergence.
  const double u = uniform01(state.rng);
  if (!info.divergent && u < info.accept_prob) {
    state.position = std::move(x);
    info.accepted = true;
    ++state.accepted;
  }
  ++state.transitions;
  state.sampler_steps += static_cast<std::uint64_t>(leapfrog_steps);
  return info;
}

void warmup_adapt(const TiltedDensity& density, ChainState& state, int n_warmup, const KernelConfig& kernel) {
  if (n_warmup < 1) throw std::invalid_argument("warm-up length must be >= 1");
  if (kernel.kind != KernelKind::hmc && kernel.kind != KernelKind::rwm) return;

  const bool hmc = kernel.kind == KernelKind::hmc;
  state.adaptation.target = hmc ? kernel.target_accept : kernel.rwm_target_accept;
  state.adaptation.restart(state.step_size);

  int slow_begin = n_warmup, slow_end = n_warmup;
  if (hmc && kernel.adapt_mass && n_warmup >= 20) {
    slow_begin = static_cast<int>(0.15 * n_warmup);
    slow_end = n_warmup - static_cast<int>(0.10 * n_warmup);
  }
  Welford window;
  for (int t = 0; t < n_warmup; ++t) {
    const StepInfo info = hmc ? hmc_step(density, state, kernel.leapfrog_steps, kernel.step_jitter)
                              : rwm_step(density, state, state.step_size);
    state.step_size = state.adaptation.update(info.accept_prob);
    if (t >= slow_begin && t < slow_end) window.add(state.position);
    if (t + 1 == slow_end && window.n >= 10) {
      state.inverse_mass = window.regularized_variance();
      state.step_size = state.adaptation.final_step();
      state.adaptation.restart(state.step_size);
    }
  }
  state.step_size = state.adaptation.final_step();
}

Matrix draw_samples(const TiltedDensity& density, ChainState& state, int n_samp, int thin,
                    const KernelConfig& kernel) {
  if (n_samp < 1 || thin < 1) throw std::invalid_argument("n_samp and thin must be >= 1");
  const int dz = density.target->dim_z();
  Matrix kept(n_samp, dz);
  const long total = static_cast<long>(n_samp) * thin;
  for (long k = 1; k <= total; ++k) {
    switch (kernel.kind) {
      case KernelKind::exact: {
        Vector z = density.target->sample_tilted(density.base, density.power, state.rng);
        state.position.head(dz) = z;
        ++state.transitions;
        ++state.accepted;
        state.sampler_steps += 1;
        break;
      }
      case KernelKind::rwm:
        rwm_step(density, state, state.step_size);
        break;
      case KernelKind::hmc:
        hmc_step(density, state, kernel.leapfrog_steps, kernel.step_jitter);
        break;
      case KernelKind::oracle:
        throw std::invalid_argument("the oracle kernel does not draw samples");
    }
    if (k % thin == 0) kept.row(k / thin - 1) = state.position.head(dz).transpose();
  }
  return kept;
}

// --- estimators -------------------------------------------------------------------

MeanParams naive_moments(const Family& family, const Matrix& samples) {
  if (samples.rows() < 1) throw std::invalid_argument("naive estimator needs at least one sample");
  Vector acc = Vector::Zero(family.dim_s());
  for (Eigen::Index r = 0; r < samples.rows(); ++r) accumulate_statistic(family, samples.row(r).transpose(), acc);
  return {family, acc / static_cast<double>(samples.rows())};
}

NaturalParams debias_gaussian_naturals(const Family& family, const Matrix& samples) {
  const Eigen::Index n = samples.rows();
  const int d = family.dim_z();
  if (samples.cols() != d) throw std::invalid_argument("sample dimension does not match the family");
  const int d_eff = family.kind() == FamilyKind::gaussian_dense ? d : 1;
  if (n <= d_eff + 2) {
    std::ostringstream os;
    os << "debiased Gaussian estimator is undefined for n = " << n << " <= d + 2 = " << d_eff + 2;
    throw std::invalid_argument(os.str());
  }
  const double nd = static_cast<double>(n);
  const Vector mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - mean.transpose();
  const double scale = (nd - d_eff - 2.0) / (nd - 1.0);

  Matrix precision;
  if (family.kind() == FamilyKind::gaussian_dense) {
    const Matrix cov = centered.transpose() * centered / (nd - 1.0);
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) throw DomainError("debiased estimator: singular sample covariance");
    precision = scale * llt.solve(Matrix::Identity(d, d));
  } else {
    const Vector var = centered.colwise().squaredNorm().transpose() / (nd - 1.0);
    if (!(var.array() > 0.0).all()) throw DomainError("debiased estimator: zero sample variance");
    precision = (scale * var.cwiseInverse()).asDiagonal();
  }
  return {family, pack_natural(family, precision * mean, precision)};
}

MomentEstimate estimate_moments(const Family& family, const Matrix& samples, EstimatorKind kind) {
  MomentEstimate est{naive_moments(family, samples), std::nullopt, static_cast<int>(samples.rows()), kind};
  if (kind == EstimatorKind::debiased_gaussian) est.natural = debias_gaussian_naturals(family, samples);
  return est;
}

MomentEstimate draw_moments(const TiltedDensity& density, ChainState& state, int n_samp, int thin,
                            const KernelConfig& kernel, EstimatorKind estimator) {
  const Matrix samples = draw_samples(density, state, n_samp, thin, kernel);
  return estimate_moments(density.base.family, samples, estimator);
}

void write_chain_trace(std::ostream& out, int iteration, const Matrix& samples) {
  out.precision(17);
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    out << iteration << ',' << r;
    for (Eigen::Index c = 0; c < samples.cols(); ++c) out << ',' << samples(r, c);
    out << '\n';
  }
}

}  // namespace stochep
