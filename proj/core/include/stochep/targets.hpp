#pragma once

// Target factors exp(l_i(z)) of a posterior p0(z) * prod_i exp(l_i(z)).

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochep/expfam.hpp"
#include "stochep/random.hpp"

namespace stochep {

class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// One site's factor.
///
/// Samplers work on the "extended position": z itself when
/// local_latent_dim() == 0, otherwise the concatenation (z, w_i). For latent
/// targets the log factor l_i(z) is a marginal over w_i and is never
/// evaluated; extended_log_factor() returns the joint log density instead.
class TiltedTarget {
 public:
  virtual ~TiltedTarget() = default;

  virtual int dim_z() const = 0;
  virtual int local_latent_dim() const { return 0; }
  int extended_dim() const { return dim_z() + local_latent_dim(); }

  /// l_i(z). Throws UnsupportedError for latent targets.
  virtual double log_factor(const Vector& z) const = 0;
  virtual Vector grad_log_factor(const Vector& z) const = 0;

  /// Log factor over the extended position and its gradient.
  virtual double extended_log_factor(const Vector& position, Vector& grad) const;

  /// Draws w_i given z for chain initialisation (latent targets only).
  virtual Vector initial_latent(const Vector& z, Rng& rng) const;

  virtual bool has_exact_moments() const { return false; }
  /// E[s(z)] under exp(base's(z) + power * l_i(z)), normalised.
  virtual MeanParams exact_tilted_moments(const NaturalParams& base, double power) const;
  /// A_i((base, power)) = log int exp(base's(z) + power * l_i(z)) dz.
  virtual double exact_tilted_log_normalizer(const NaturalParams& base, double power) const;

  virtual bool has_exact_sampler() const { return false; }
  virtual Vector sample_tilted(const NaturalParams& base, double power, Rng& rng) const;
};

using TargetPtr = std::shared_ptr<const TiltedTarget>;

/// A target posterior: prior natural parameter eta0 in `family` and m factors.
struct Problem {
  Family family;
  Vector eta0;
  std::vector<TargetPtr> targets;

  int sites() const { return static_cast<int>(targets.size()); }
};

// --- clutter -----------------------------------------------------------------

struct ClutterConfig {
  double clutter_weight = 0.5;    // w
  double clutter_variance = 10.0; // a
  double prior_variance = 100.0;
  int dim_z = 1;
  std::vector<Vector> observations;
};

/// Draws `sites` observations from the clutter model around `true_z`.
std::vector<Vector> generate_clutter_observations(const ClutterConfig& cfg, int sites,
                                                  const Vector& true_z, Rng& rng);

/// log[(1-w) N(x_i | z, I) + w N(x_i | 0, a I)]
double clutter_log_factor(const ClutterConfig& cfg, int i, const Vector& z);
Vector clutter_grad_log_factor(const ClutterConfig& cfg, int i, const Vector& z);

/// Exact tilted moments for power 1 (two-component Gaussian mixture).
MeanParams clutter_exact_tilted_moments(const ClutterConfig& cfg, int i, const NaturalParams& base,
                                        double power);

class ClutterSite final : public TiltedTarget {
 public:
  ClutterSite(std::shared_ptr<const ClutterConfig> cfg, int index);

  int dim_z() const override { return cfg_->dim_z; }
  double log_factor(const Vector& z) const override;
  Vector grad_log_factor(const Vector& z) const override;

  bool has_exact_moments() const override { return true; }
  MeanParams exact_tilted_moments(const NaturalParams& base, double power) const override;
  double exact_tilted_log_normalizer(const NaturalParams& base, double power) const override;

  bool has_exact_sampler() const override { return true; }
  Vector sample_tilted(const NaturalParams& base, double power, Rng& rng) const override;

  /// Posterior probability of the "signal" component given the base block.
  double responsibility(const NaturalParams& base) const;

 private:
  std::shared_ptr<const ClutterConfig> cfg_;
  int index_;
};

Problem make_clutter_problem(const ClutterConfig& cfg, FamilyKind kind = FamilyKind::gaussian_dense);

// --- conjugate Gaussian factor --------------------------------------------------

/// exp(l(z)) = exp(psi's(z)): a factor already in the family. The tilted
/// distribution is a family member for every power, so EP and power EP have
/// closed-form fixed points (lambda_i = psi_i). Used as an exact oracle.
class ConjugateGaussianSite final : public TiltedTarget {
 public:
  ConjugateGaussianSite(Family family, Vector psi);

  int dim_z() const override { return family_.dim_z(); }
  double log_factor(const Vector& z) const override;
  Vector grad_log_factor(const Vector& z) const override;

  bool has_exact_moments() const override { return true; }
  MeanParams exact_tilted_moments(const NaturalParams& base, double power) const override;
  double exact_tilted_log_normalizer(const NaturalParams& base, double power) const override;

  bool has_exact_sampler() const override { return true; }
  Vector sample_tilted(const NaturalParams& base, double power, Rng& rng) const override;

  const Vector& psi() const { return psi_; }

 private:
  Family family_;
  Vector psi_;
};

// --- hierarchical logistic regression -------------------------------------------

/// z = (mu_1, log sigma_1^2, ..., mu_d, log sigma_d^2); w_i ~ prod_j N(mu_j, sigma_j^2);
/// y_ij ~ Bernoulli(sigmoid(x_ij' w_i)).
struct HlrConfig {
  int groups = 16;  // m
  int dim = 4;      // d
  int rows = 20;    // n
  Vector prior_mean;      // length 2d, defaults to 0
  Vector prior_variance;  // length 2d, defaults to (4, 2, 4, 2, ...)

  int dim_z() const { return 2 * dim; }
  Vector resolved_prior_mean() const;
  Vector resolved_prior_variance() const;
};

struct HlrDataset {
  HlrConfig config;
  std::uint64_t seed = 0;
  Vector true_z;
  std::vector<Vector> true_w;
  std::vector<Matrix> covariates;  // rows x dim per group
  std::vector<Vector> labels;      // 0/1 per row

  std::size_t total_rows() const;
};

HlrDataset hlr_generate_data(const HlrConfig& cfg, std::uint64_t seed);

/// Stable log(sigmoid(t)).
double log_sigmoid(double t);

/// log p(w_i | z) + sum_j log Bernoulli(y_ij | sigmoid(x_ij' w_i)), with its
/// gradients with respect to z and w_i.
double hlr_joint_log_density(const HlrDataset& data, int i, const Vector& z, const Vector& w,
                             Vector* grad_z = nullptr, Vector* grad_w = nullptr);

/// Coordinates of the local latent block seen by samplers. Centered samples
/// w_i itself; non-centered samples u_i with w_ij = mu_j + sigma_j u_ij, which
/// removes the funnel between log sigma_j^2 and w_i. Both extensions integrate
/// to the same l_i(z).
enum class HlrParameterization { centered, non_centered };

std::string to_string(HlrParameterization p);
HlrParameterization hlr_parameterization_from_string(const std::string& name);

class HlrSite final : public TiltedTarget {
 public:
  HlrSite(std::shared_ptr<const HlrDataset> data, int index,
          HlrParameterization param = HlrParameterization::non_centered);

  int dim_z() const override { return data_->config.dim_z(); }
  int local_latent_dim() const override { return data_->config.dim; }
  double log_factor(const Vector& z) const override;
  Vector grad_log_factor(const Vector& z) const override;
  double extended_log_factor(const Vector& position, Vector& grad) const override;
  Vector initial_latent(const Vector& z, Rng& rng) const override;

 private:
  std::shared_ptr<const HlrDataset> data_;
  int index_;
  HlrParameterization param_;
};

Problem make_hlr_problem(std::shared_ptr<const HlrDataset> data,
                         HlrParameterization param = HlrParameterization::non_centered);

}  // namespace stochep
