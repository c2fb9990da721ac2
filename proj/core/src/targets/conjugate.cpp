#include "stochep/targets.hpp"

namespace stochep {

ConjugateGaussianSite::ConjugateGaussianSite(Family family, Vector psi)
    : family_(family), psi_(std::move(psi)) {
  if (psi_.size() != family_.dim_s()) throw std::invalid_argument("psi has wrong length");
}

double ConjugateGaussianSite::log_factor(const Vector& z) const { return psi_.dot(statistic(family_, z)); }

Vector ConjugateGaussianSite::grad_log_factor(const Vector& z) const {
  return natural_gradient_term(family_, psi_, z);
}

MeanParams ConjugateGaussianSite::exact_tilted_moments(const NaturalParams& base, double power) const {
  return forward_map({family_, base.values + power * psi_});
}

double ConjugateGaussianSite::exact_tilted_log_normalizer(const NaturalParams& base, double power) const {
  return log_partition({family_, base.values + power * psi_});
}

Vector ConjugateGaussianSite::sample_tilted(const NaturalParams& base, double power, Rng& rng) const {
  return sample_member({family_, base.values + power * psi_}, rng);
}

}  // namespace stochep
