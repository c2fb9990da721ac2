#pragma once

// Minimal Gaussian exponential families.
//
// Statistic layout for dim_z = d:
//   gaussian-dense:    s(z) = (z_1..z_d, z_k z_l for k <= l in row-major order)
//   gaussian-diagonal: s(z) = (z_1..z_d, z_1^2..z_d^2)
//
// With this layout the natural parameter of an off-diagonal product z_k z_l is
// twice the corresponding entry of the symmetric quadratic-form matrix N in
// exp(h'z + z'Nz), so the precision is P = -2N with P_kk = -2 eta_kk and
// P_kl = -eta_kl (k < l).

#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "stochep/random.hpp"

namespace stochep {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a parameter vector lies outside the natural or mean domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class FamilyKind { gaussian_dense, gaussian_diagonal };

std::string to_string(FamilyKind kind);
FamilyKind family_kind_from_string(const std::string& name);

class Family {
 public:
  /// One-dimensional dense family; placeholder for default-constructed holders.
  Family() = default;
  static Family gaussian_dense(int dim_z);
  static Family gaussian_diagonal(int dim_z);

  FamilyKind kind() const { return kind_; }
  int dim_z() const { return dim_z_; }
  int dim_s() const;

  friend bool operator==(const Family&, const Family&) = default;

 private:
  Family(FamilyKind kind, int dim_z);

  FamilyKind kind_ = FamilyKind::gaussian_dense;
  int dim_z_ = 1;
};

/// Canonical coordinates eta of a family member.
struct NaturalParams {
  Family family;
  Vector values;
};

/// Expected statistics mu = E[s(z)] of a family member.
struct MeanParams {
  Family family;
  Vector values;
};

/// exp(h'z - 0.5 z'Pz) form of a natural parameter vector. Defined for any
/// vector, proper or not.
struct QuadraticForm {
  Vector shift;
  Matrix precision;
};

/// (mean, covariance) of a member given by its moments.
struct GaussianMoments {
  Vector mean;
  Matrix covariance;
};

Vector statistic(const Family& family, const Eigen::Ref<const Vector>& z);
/// Adds s(z) to `acc` without allocating.
void accumulate_statistic(const Family& family, const Eigen::Ref<const Vector>& z,
                          Eigen::Ref<Vector> acc);

QuadraticForm unpack_natural(const Family& family, const Vector& eta);
Vector pack_natural(const Family& family, const Vector& shift, const Matrix& precision);
GaussianMoments unpack_mean(const Family& family, const Vector& mu);
Vector pack_mean(const Family& family, const Vector& mean, const Matrix& covariance);

/// eta'grad s(z): gradient of eta's(z) with respect to z.
Vector natural_gradient_term(const Family& family, const Vector& eta,
                             const Eigen::Ref<const Vector>& z);
/// eta's(z); adds its z-gradient into the first dim_z entries of *grad when non-null.
double add_natural_term(const Family& family, const Vector& eta, const Eigen::Ref<const Vector>& z,
                        Vector* grad);

bool in_natural_domain(const Family& family, const Vector& eta);
bool in_mean_domain(const Family& family, const Vector& mu);
void require_natural_domain(const Family& family, const Vector& eta, const char* what = "eta");
void require_mean_domain(const Family& family, const Vector& mu, const char* what = "mu");

double log_partition(const NaturalParams& eta);
MeanParams forward_map(const NaturalParams& eta);
NaturalParams backward_map(const MeanParams& mu);
double dual_log_partition(const MeanParams& mu);

Matrix fisher_natural(const NaturalParams& eta);
Matrix fisher_mean(const MeanParams& mu);

/// Hessian of A* at mu applied to v, evaluated in closed form.
Vector jvp_backward(const MeanParams& mu, const Vector& v);

Vector sample_member(const NaturalParams& eta, Rng& rng);

/// KL(p || q) between two members of the same family.
double kl_divergence(const NaturalParams& p, const NaturalParams& q);

}  // namespace stochep
