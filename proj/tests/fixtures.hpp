#pragma once

// Random proper parameters and small problems for property tests.

#include <memory>

#include <Eigen/LU>

#include "stochep/ep.hpp"
#include "stochep/expfam.hpp"
#include "stochep/targets.hpp"

namespace fixture {

using namespace stochep;

inline Matrix random_spd(int d, Rng& rng, double floor = 0.3) {
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = standard_normal(rng);
  return a * a.transpose() / d + floor * Matrix::Identity(d, d);
}

inline Family family(FamilyKind kind, int d) {
  return kind == FamilyKind::gaussian_dense ? Family::gaussian_dense(d) : Family::gaussian_diagonal(d);
}

/// Natural parameters of a random Gaussian with mean ~ N(0, I).
inline NaturalParams random_natural(const Family& f, Rng& rng) {
  const int d = f.dim_z();
  Matrix cov = random_spd(d, rng);
  if (f.kind() == FamilyKind::gaussian_diagonal) cov = Matrix(cov.diagonal().asDiagonal());
  const Vector mean = standard_normal_vector(rng, d);
  const Matrix prec = cov.inverse();
  return {f, pack_natural(f, prec * mean, prec)};
}

inline ClutterConfig clutter(int dim_z, int sites, std::uint64_t seed, double true_z = 2.0) {
  ClutterConfig cfg;
  cfg.dim_z = dim_z;
  Rng rng = make_stream(seed, 0);
  cfg.observations = generate_clutter_observations(cfg, sites, Vector::Constant(dim_z, true_z), rng);
  return cfg;
}

/// A proper SiteState with random sites small enough to keep every cavity proper.
inline SiteState random_state(const Problem& problem, Rng& rng, double scale = 0.05) {
  SiteState s = make_initial_state(problem, Variant::ep);
  const Family& f = problem.family;
  for (auto& lam : s.sites) {
    const Matrix p = scale * random_spd(f.dim_z(), rng, 0.1);
    Matrix pd = f.kind() == FamilyKind::gaussian_dense ? p : Matrix(p.diagonal().asDiagonal());
    lam = pack_natural(f, scale * standard_normal_vector(rng, f.dim_z()), pd);
  }
  outer_update(s);
  return s;
}

}  // namespace fixture
