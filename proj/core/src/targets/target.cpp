#include "stochep/targets.hpp"

namespace stochep {

double TiltedTarget::extended_log_factor(const Vector& position, Vector& grad) const {
  if (local_latent_dim() != 0)
    throw UnsupportedError("extended_log_factor must be overridden by latent targets");
  grad = grad_log_factor(position);
  return log_factor(position);
}

Vector TiltedTarget::initial_latent(const Vector&, Rng&) const { return Vector(0); }

MeanParams TiltedTarget::exact_tilted_moments(const NaturalParams&, double) const {
  throw UnsupportedError("target has no exact tilted-moment oracle");
}

double TiltedTarget::exact_tilted_log_normalizer(const NaturalParams&, double) const {
  throw UnsupportedError("target has no exact tilted normaliser");
}

Vector TiltedTarget::sample_tilted(const NaturalParams&, double, Rng&) const {
  throw UnsupportedError("target has no exact tilted sampler");
}

}  // namespace stochep
