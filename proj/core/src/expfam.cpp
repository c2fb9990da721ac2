#include "stochep/expfam.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>

namespace stochep {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Position of z_k z_l (k <= l) inside the dense statistic vector.
inline Eigen::Index pair_index(int d, int k, int l) {
  return d + static_cast<Eigen::Index>(k) * d - static_cast<Eigen::Index>(k) * (k - 1) / 2 + (l - k);
}

void check_length(const Family& family, const Vector& v, const char* what) {
  if (v.size() != family.dim_s()) {
    std::ostringstream os;
    os << what << " has length " << v.size() << ", family expects dim_s = " << family.dim_s();
    throw std::invalid_argument(os.str());
  }
}

bool all_finite(const Vector& v) { return v.allFinite(); }

// Cholesky of an SPD matrix or a DomainError naming the failed check.
Eigen::LLT<Matrix> spd_factor(const Matrix& m, const char* what, const char* check) {
  Eigen::LLT<Matrix> llt(m);
  if (!m.allFinite() || llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << what << ": " << check << " is not symmetric positive definite";
    throw DomainError(os.str());
  }
  return llt;
}

double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

struct DenseMember {
  Vector mean;
  Matrix cov;
  Matrix precision;
  Eigen::LLT<Matrix> precision_llt;
};

DenseMember member_from_natural(const Family& family, const Vector& eta, const char* what) {
  check_length(family, eta, what);
  if (!all_finite(eta)) throw DomainError(std::string(what) + ": non-finite natural parameter");
  QuadraticForm q = unpack_natural(family, eta);
  DenseMember out;
  out.precision_llt = spd_factor(q.precision, what, "precision -2*(second block)");
  out.precision = std::move(q.precision);
  out.mean = out.precision_llt.solve(q.shift);
  out.cov = out.precision_llt.solve(Matrix::Identity(family.dim_z(), family.dim_z()));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(FamilyKind kind) {
  return kind == FamilyKind::gaussian_dense ? "gaussian-dense" : "gaussian-diagonal";
}

FamilyKind family_kind_from_string(const std::string& name) {
  if (name == "gaussian-dense") return FamilyKind::gaussian_dense;
  if (name == "gaussian-diagonal") return FamilyKind::gaussian_diagonal;
  throw std::invalid_argument("unknown family kind '" + name + "'");
}

Family::Family(FamilyKind kind, int dim_z) : kind_(kind), dim_z_(dim_z) {
  if (dim_z < 1) throw std::invalid_argument("family dimension must be >= 1");
}

Family Family::gaussian_dense(int dim_z) { return Family(FamilyKind::gaussian_dense, dim_z); }
Family Family::gaussian_diagonal(int dim_z) { return Family(FamilyKind::gaussian_diagonal, dim_z); }

int Family::dim_s() const {
  return kind_ == FamilyKind::gaussian_diagonal ? 2 * dim_z_ : dim_z_ + dim_z_ * (dim_z_ + 1) / 2;
}

// ---------------------------------------------------------------------------

void accumulate_statistic(const Family& family, const Eigen::Ref<const Vector>& z,
                          Eigen::Ref<Vector> acc) {
  const int d = family.dim_z();
  acc.head(d) += z.head(d);
  if (family.kind() == FamilyKind::gaussian_diagonal) {
    acc.tail(d).array() += z.head(d).array().square();
    return;
  }
  Eigen::Index idx = d;
  for (int k = 0; k < d; ++k)
    for (int l = k; l < d; ++l) acc[idx++] += z[k] * z[l];
}

Vector statistic(const Family& family, const Eigen::Ref<const Vector>& z) {
  Vector s = Vector::Zero(family.dim_s());
  accumulate_statistic(family, z, s);
  return s;
}

QuadraticForm unpack_natural(const Family& family, const Vector& eta) {
  check_length(family, eta, "natural parameter");
  const int d = family.dim_z();
  QuadraticForm q{eta.head(d), Matrix::Zero(d, d)};
  if (family.kind() == FamilyKind::gaussian_diagonal) {
    q.precision.diagonal() = -2.0 * eta.tail(d);
    return q;
  }
  for (int k = 0; k < d; ++k) {
    q.precision(k, k) = -2.0 * eta[pair_index(d, k, k)];
    for (int l = k + 1; l < d; ++l) {
      q.precision(k, l) = q.precision(l, k) = -eta[pair_index(d, k, l)];
    }
  }
  return q;
}

Vector pack_natural(const Family& family, const Vector& shift, const Matrix& precision) {
  const int d = family.dim_z();
  Vector eta(family.dim_s());
  eta.head(d) = shift;
  if (family.kind() == FamilyKind::gaussian_diagonal) {
    eta.tail(d) = -0.5 * precision.diagonal();
    return eta;
  }
  for (int k = 0; k < d; ++k) {
    eta[pair_index(d, k, k)] = -0.5 * precision(k, k);
    for (int l = k + 1; l < d; ++l)
      eta[pair_index(d, k, l)] = -0.5 * (precision(k, l) + precision(l, k));
  }
  return eta;
}

GaussianMoments unpack_mean(const Family& family, const Vector& mu) {
  check_length(family, mu, "mean parameter");
  const int d = family.dim_z();
  GaussianMoments g{mu.head(d), Matrix::Zero(d, d)};
  if (family.kind() == FamilyKind::gaussian_diagonal) {
    g.covariance.diagonal() = mu.tail(d).array() - g.mean.array().square();
    return g;
  }
  for (int k = 0; k < d; ++k)
    for (int l = k; l < d; ++l) {
      const double c = mu[pair_index(d, k, l)] - g.mean[k] * g.mean[l];
      g.covariance(k, l) = g.covariance(l, k) = c;
    }
  return g;
}

Vector pack_mean(const Family& family, const Vector& mean, const Matrix& covariance) {
  const int d = family.dim_z();
  Vector mu(family.dim_s());
  mu.head(d) = mean;
  if (family.kind() == FamilyKind::gaussian_diagonal) {
    mu.tail(d) = covariance.diagonal().array() + mean.array().square();
    return mu;
  }
  for (int k = 0; k < d; ++k)
    for (int l = k; l < d; ++l)
      mu[pair_index(d, k, l)] = 0.5 * (covariance(k, l) + covariance(l, k)) + mean[k] * mean[l];
  return mu;
}

Vector natural_gradient_term(const Family& family, const Vector& eta,
                             const Eigen::Ref<const Vector>& z) {
  const int d = family.dim_z();
  if (family.kind() == FamilyKind::gaussian_diagonal) {
    return eta.head(d).array() + 2.0 * eta.tail(d).array() * z.head(d).array();
  }
  // d/dz (h'z - 0.5 z'Pz) = h - Pz
  Vector g = eta.head(d);
  for (int k = 0; k < d; ++k) {
    g[k] += 2.0 * eta[pair_index(d, k, k)] * z[k];
    for (int l = k + 1; l < d; ++l) {
      const double e = eta[pair_index(d, k, l)];
      g[k] += e * z[l];
      g[l] += e * z[k];
    }
  }
  return g;
}

double add_natural_term(const Family& family, const Vector& eta, const Eigen::Ref<const Vector>& z,
                        Vector* grad) {
  const int d = family.dim_z();
  double v = 0.0;
  if (family.kind() == FamilyKind::gaussian_diagonal) {
    for (int k = 0; k < d; ++k) {
      v += eta[k] * z[k] + eta[d + k] * z[k] * z[k];
      if (grad) (*grad)[k] += eta[k] + 2.0 * eta[d + k] * z[k];
    }
    return v;
  }
  Eigen::Index idx = d;
  for (int k = 0; k < d; ++k) {
    v += eta[k] * z[k];
    if (grad) (*grad)[k] += eta[k];
    for (int l = k; l < d; ++l) {
      const double e = eta[idx++];
      v += e * z[k] * z[l];
      if (grad) {
        (*grad)[k] += e * z[l];
        (*grad)[l] += e * z[k];
      }
    }
  }
  return v;
}

// ---------------------------------------------------------------------------

bool in_natural_domain(const Family& family, const Vector& eta) {
  if (eta.size() != family.dim_s() || !all_finite(eta)) return false;
  const int d = family.dim_z();
  if (family.kind() == FamilyKind::gaussian_diagonal) return (eta.tail(d).array() < 0.0).all();
  Eigen::LLT<Matrix> llt(unpack_natural(family, eta).precision);
  return llt.info() == Eigen::Success;
}

bool in_mean_domain(const Family& family, const Vector& mu) {
  if (mu.size() != family.dim_s() || !all_finite(mu)) return false;
  GaussianMoments g = unpack_mean(family, mu);
  if (family.kind() == FamilyKind::gaussian_diagonal) return (g.covariance.diagonal().array() > 0.0).all();
  Eigen::LLT<Matrix> llt(g.covariance);
  return llt.info() == Eigen::Success;
}

void require_natural_domain(const Family& family, const Vector& eta, const char* what) {
  check_length(family, eta, what);
  if (!all_finite(eta)) throw DomainError(std::string(what) + ": non-finite natural parameter");
  if (family.kind() == FamilyKind::gaussian_diagonal) {
    const int d = family.dim_z();
    for (int k = 0; k < d; ++k)
      if (!(eta[d + k] < 0.0)) {
        std::ostringstream os;
        os << what << ": second-block entry " << k << " = " << eta[d + k] << " is not strictly negative";
        throw DomainError(os.str());
      }
    return;
  }
  spd_factor(unpack_natural(family, eta).precision, what, "precision -2*(second block)");
}

void require_mean_domain(const Family& family, const Vector& mu, const char* what) {
  check_length(family, mu, what);
  if (!all_finite(mu)) throw DomainError(std::string(what) + ": non-finite mean parameter");
  GaussianMoments g = unpack_mean(family, mu);
  if (family.kind() == FamilyKind::gaussian_diagonal) {
    for (int k = 0; k < family.dim_z(); ++k)
      if (!(g.covariance(k, k) > 0.0)) {
        std::ostringstream os;
        os << what << ": implied variance " << k << " = " << g.covariance(k, k) << " is not positive";
        throw DomainError(os.str());
      }
    return;
  }
  spd_factor(g.covariance, what, "implied covariance");
}

// ---------------------------------------------------------------------------

double log_partition(const NaturalParams& eta) {
  const Family& f = eta.family;
  const int d = f.dim_z();
  if (f.kind() == FamilyKind::gaussian_diagonal) {
    require_natural_domain(f, eta.values, "log_partition");
    double a = 0.0;
    for (int k = 0; k < d; ++k) {
      const double h = eta.values[k];
      const double p = -2.0 * eta.values[d + k];
      a += 0.5 * h * h / p - 0.5 * std::log(p) + 0.5 * kLog2Pi;
    }
    return a;
  }
  DenseMember m = member_from_natural(f, eta.values, "log_partition");
  const Vector h = eta.values.head(d);
  return 0.5 * h.dot(m.mean) - 0.5 * log_det(m.precision_llt) + 0.5 * d * kLog2Pi;
}

MeanParams forward_map(const NaturalParams& eta) {
  const Family& f = eta.family;
  const int d = f.dim_z();
  if (f.kind() == FamilyKind::gaussian_diagonal) {
    require_natural_domain(f, eta.values, "forward_map");
    Vector mu(f.dim_s());
    for (int k = 0; k < d; ++k) {
      const double var = -0.5 / eta.values[d + k];
      const double mean = eta.values[k] * var;
      mu[k] = mean;
      mu[d + k] = var + mean * mean;
    }
    return {f, std::move(mu)};
  }
  DenseMember m = member_from_natural(f, eta.values, "forward_map");
  return {f, pack_mean(f, m.mean, m.cov)};
}

NaturalParams backward_map(const MeanParams& mu) {
  const Family& f = mu.family;
  const int d = f.dim_z();
  require_mean_domain(f, mu.values, "backward_map");
  if (f.kind() == FamilyKind::gaussian_diagonal) {
    Vector eta(f.dim_s());
    for (int k = 0; k < d; ++k) {
      const double var = mu.values[d + k] - mu.values[k] * mu.values[k];
      eta[k] = mu.values[k] / var;
      eta[d + k] = -0.5 / var;
    }
    return {f, std::move(eta)};
  }
  GaussianMoments g = unpack_mean(f, mu.values);
  Eigen::LLT<Matrix> llt = spd_factor(g.covariance, "backward_map", "implied covariance");
  const Matrix precision = llt.solve(Matrix::Identity(d, d));
  const Vector shift = llt.solve(g.mean);
  return {f, pack_natural(f, shift, 0.5 * (precision + precision.transpose()))};
}

double dual_log_partition(const MeanParams& mu) {
  const Family& f = mu.family;
  const int d = f.dim_z();
  require_mean_domain(f, mu.values, "dual_log_partition");
  GaussianMoments g = unpack_mean(f, mu.values);
  double logdet;
  if (f.kind() == FamilyKind::gaussian_diagonal) {
    logdet = g.covariance.diagonal().array().log().sum();
  } else {
    logdet = log_det(Eigen::LLT<Matrix>(g.covariance));
  }
  // negative differential entropy of N(m, S)
  return -0.5 * (logdet + d * (kLog2Pi + 1.0));
}

// ---------------------------------------------------------------------------

Matrix fisher_natural(const NaturalParams& eta) {
  const Family& f = eta.family;
  const int d = f.dim_z();
  const int n = f.dim_s();
  Matrix F = Matrix::Zero(n, n);
  if (f.kind() == FamilyKind::gaussian_diagonal) {
    require_natural_domain(f, eta.values, "fisher_natural");
    for (int k = 0; k < d; ++k) {
      const double v = -0.5 / eta.values[d + k];
      const double m = eta.values[k] * v;
      F(k, k) = v;
      F(k, d + k) = F(d + k, k) = 2.0 * m * v;
      F(d + k, d + k) = 2.0 * v * v + 4.0 * m * m * v;
    }
    return F;
  }
  DenseMember mem = member_from_natural(f, eta.values, "fisher_natural");
  const Vector& m = mem.mean;
  const Matrix& S = mem.cov;
  // covariance of the statistic under N(m, S), Isserlis' theorem
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) F(a, b) = S(a, b);
  for (int a = 0; a < d; ++a)
    for (int k = 0; k < d; ++k)
      for (int l = k; l < d; ++l) {
        const Eigen::Index j = pair_index(d, k, l);
        F(a, j) = F(j, a) = m[k] * S(a, l) + m[l] * S(a, k);
      }
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      const Eigen::Index i = pair_index(d, a, b);
      for (int k = 0; k < d; ++k)
        for (int l = k; l < d; ++l) {
          const Eigen::Index j = pair_index(d, k, l);
          if (j < i) continue;
          const double c = S(a, k) * S(b, l) + S(a, l) * S(b, k) + m[a] * m[k] * S(b, l) +
                           m[a] * m[l] * S(b, k) + m[b] * m[k] * S(a, l) + m[b] * m[l] * S(a, k);
          F(i, j) = F(j, i) = c;
        }
    }
  return F;
}

Vector jvp_backward(const MeanParams& mu, const Vector& v) {
  const Family& f = mu.family;
  const int d = f.dim_z();
  check_length(f, v, "tangent");
  require_mean_domain(f, mu.values, "jvp_backward");
  Vector out(f.dim_s());
  if (f.kind() == FamilyKind::gaussian_diagonal) {
    for (int k = 0; k < d; ++k) {
      const double m = mu.values[k];
      const double var = mu.values[d + k] - m * m;
      const double p = 1.0 / var;
      const double dvar = v[d + k] - 2.0 * m * v[k];
      const double dp = -dvar * p * p;
      out[k] = dp * m + p * v[k];
      out[d + k] = -0.5 * dp;
    }
    return out;
  }
  // eta = (P m, -P/2 packed) with P = (M - m m')^{-1}; differentiate along (dm, dM).
  GaussianMoments g = unpack_mean(f, mu.values);
  Eigen::LLT<Matrix> llt(g.covariance);
  const Matrix P = llt.solve(Matrix::Identity(d, d));
  const Vector dm = v.head(d);
  Matrix dM(d, d);
  for (int k = 0; k < d; ++k)
    for (int l = k; l < d; ++l) dM(k, l) = dM(l, k) = v[pair_index(d, k, l)];
  const Matrix dS = dM - dm * g.mean.transpose() - g.mean * dm.transpose();
  Matrix dP = -P * dS * P;
  dP = 0.5 * (dP + dP.transpose()).eval();
  out.head(d) = dP * g.mean + P * dm;
  for (int k = 0; k < d; ++k) {
    out[pair_index(d, k, k)] = -0.5 * dP(k, k);
    for (int l = k + 1; l < d; ++l) out[pair_index(d, k, l)] = -dP(k, l);
  }
  return out;
}

Matrix fisher_mean(const MeanParams& mu) {
  const int n = mu.family.dim_s();
  Matrix F(n, n);
  Vector e = Vector::Zero(n);
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    F.col(j) = jvp_backward(mu, e);
    e[j] = 0.0;
  }
  return 0.5 * (F + F.transpose());
}

// ---------------------------------------------------------------------------

Vector sample_member(const NaturalParams& eta, Rng& rng) {
  const Family& f = eta.family;
  const int d = f.dim_z();
  if (f.kind() == FamilyKind::gaussian_diagonal) {
    require_natural_domain(f, eta.values, "sample_member");
    Vector z = standard_normal_vector(rng, d);
    for (int k = 0; k < d; ++k) {
      const double var = -0.5 / eta.values[d + k];
      z[k] = eta.values[k] * var + std::sqrt(var) * z[k];
    }
    return z;
  }
  DenseMember m = member_from_natural(f, eta.values, "sample_member");
  const Vector eps = standard_normal_vector(rng, d);
  // P = L L'  =>  L'^{-1} eps ~ N(0, P^{-1})
  return m.mean + m.precision_llt.matrixU().solve(eps);
}

double kl_divergence(const NaturalParams& p, const NaturalParams& q) {
  if (!(p.family == q.family)) throw std::invalid_argument("kl_divergence: family mismatch");
  const Family& f = p.family;
  const int d = f.dim_z();
  if (f.kind() == FamilyKind::gaussian_diagonal) {
    require_natural_domain(f, p.values, "kl_divergence(p)");
    require_natural_domain(f, q.values, "kl_divergence(q)");
    double kl = 0.0;
    for (int k = 0; k < d; ++k) {
      const double vp = -0.5 / p.values[d + k];
      const double vq = -0.5 / q.values[d + k];
      const double mp = p.values[k] * vp;
      const double mq = q.values[k] * vq;
      kl += 0.5 * (vp / vq + (mq - mp) * (mq - mp) / vq - 1.0 + std::log(vq / vp));
    }
    return kl;
  }
  DenseMember a = member_from_natural(f, p.values, "kl_divergence(p)");
  DenseMember b = member_from_natural(f, q.values, "kl_divergence(q)");
  const Vector diff = b.mean - a.mean;
  const double trace = (b.precision.cwiseProduct(a.cov)).sum();
  const double quad = diff.dot(b.precision * diff);
  return 0.5 * (trace + quad - d + log_det(a.precision_llt) - log_det(b.precision_llt));
}

}  // namespace stochep
