#include "doctest.h"

#include <cmath>

#include <Eigen/Cholesky>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stochep/expfam.hpp"

using namespace stochep;

namespace {

const FamilyKind kKinds[] = {FamilyKind::gaussian_dense, FamilyKind::gaussian_diagonal};

NaturalParams eta1(double a, double b) {
  Vector v(2);
  v << a, b;
  return {Family::gaussian_dense(1), v};
}

MeanParams mu1(double a, double b) {
  Vector v(2);
  v << a, b;
  return {Family::gaussian_dense(1), v};
}

// log int exp(eta's(z)) dz by 1-D quadrature.
double quad_A1(const Vector& eta) {
  const double var = -0.5 / eta[1];
  const double mean = eta[0] * var;
  const double sd = std::sqrt(var);
  auto g = [&](double z) { return eta[0] * z + eta[1] * z * z; };
  return oracle::log_integral(g, mean - 14 * sd, mean + 14 * sd, g(mean));
}

}  // namespace

TEST_CASE("statistic dimension follows the family kind") {
  for (int d = 1; d <= 8; ++d) {
    CHECK(Family::gaussian_dense(d).dim_s() == d + d * (d + 1) / 2);
    CHECK(Family::gaussian_diagonal(d).dim_s() == 2 * d);
  }
  Vector z(3);
  z << 1, 2, 3;
  Vector s = statistic(Family::gaussian_dense(3), z);
  Vector expect(9);
  expect << 1, 2, 3, 1, 2, 3, 4, 6, 9;
  CHECK((s - expect).norm() == 0.0);
  Vector acc = Vector::Zero(9);
  accumulate_statistic(Family::gaussian_dense(3), z, acc);
  accumulate_statistic(Family::gaussian_dense(3), z, acc);
  CHECK((acc - 2 * expect).norm() == 0.0);
}

TEST_CASE("natural term and its gradient") {
  Rng rng = make_stream(3, 0);
  for (FamilyKind kind : kKinds)
    for (int d = 1; d <= 4; ++d) {
      const Family f = fixture::family(kind, d);
      const Vector eta = standard_normal_vector(rng, f.dim_s());
      const Vector z = standard_normal_vector(rng, d);
      Vector grad = Vector::Constant(d + 2, 0.25);
      const double v = add_natural_term(f, eta, z, &grad);
      CHECK(v == doctest::Approx(eta.dot(statistic(f, z))).epsilon(1e-12));
      const Vector fd = oracle::gradient([&](const Vector& x) { return eta.dot(statistic(f, x)); }, z);
      CHECK(oracle::rel_err(Vector(grad.head(d).array() - 0.25), fd) < 1e-7);
      CHECK(grad.tail(2).isConstant(0.25));
      CHECK(oracle::rel_err(natural_gradient_term(f, eta, z), fd) < 1e-7);
    }
}

TEST_CASE("log partition: closed form against quadrature") {
  CHECK(log_partition(eta1(0, -0.5)) == doctest::Approx(0.9189385332046727).epsilon(1e-12));
  CHECK(log_partition(eta1(1, -0.5)) == doctest::Approx(1.4189385332046727).epsilon(1e-12));
  CHECK(quad_A1(eta1(0, -0.5).values) == doctest::Approx(0.9189385332046727).epsilon(1e-10));
  CHECK(quad_A1(eta1(1, -0.5).values) == doctest::Approx(1.4189385332046727).epsilon(1e-10));

  Rng rng = make_stream(5, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const NaturalParams e = fixture::random_natural(Family::gaussian_dense(1), rng);
    CHECK(oracle::rel_err(log_partition(e), quad_A1(e.values)) < 1e-6);
  }
  for (FamilyKind kind : kKinds)
    for (int rep = 0; rep < 3; ++rep) {
      const Family f = fixture::family(kind, 2);
      const NaturalParams e = fixture::random_natural(f, rng);
      const GaussianMoments g = unpack_mean(f, forward_map(e).values);
      const double sx = std::sqrt(g.covariance(0, 0)), sy = std::sqrt(g.covariance(1, 1));
      Vector z0 = g.mean;
      const double shift = e.values.dot(statistic(f, z0));
      const double q = oracle::integrate2(
          [&](double x, double y) {
            Vector z(2);
            z << x, y;
            return std::exp(e.values.dot(statistic(f, z)) - shift);
          },
          g.mean[0] - 12 * sx, g.mean[0] + 12 * sx, g.mean[1] - 12 * sy, g.mean[1] + 12 * sy);
      CHECK(oracle::rel_err(log_partition(e), shift + std::log(q)) < 1e-6);
    }
}

TEST_CASE("domain checks") {
  CHECK_THROWS_AS(log_partition(eta1(0, 0.0)), DomainError);
  CHECK_THROWS_AS(log_partition(eta1(0, 0.3)), DomainError);
  CHECK_THROWS_AS(forward_map(eta1(1, 0.0)), DomainError);
  CHECK_THROWS_AS(backward_map(mu1(0, 0)), DomainError);
  CHECK_THROWS_AS(dual_log_partition(mu1(1, 1)), DomainError);
  CHECK_FALSE(in_natural_domain(Family::gaussian_diagonal(2), (Vector(4) << 0, 0, -1, 0).finished()));
  // dense 2-D with an indefinite precision
  Matrix p(2, 2);
  p << 1, 2, 2, 1;
  CHECK_FALSE(in_natural_domain(Family::gaussian_dense(2), pack_natural(Family::gaussian_dense(2), Vector::Zero(2), p)));
  Rng rng = make_stream(1, 0);
  CHECK_THROWS_AS(sample_member(eta1(0, 1.0), rng), DomainError);
}

TEST_CASE("forward and backward maps") {
  CHECK(oracle::rel_err(forward_map(eta1(0, -0.5)).values, mu1(0, 1).values) < 1e-14);
  CHECK(oracle::rel_err(forward_map(eta1(2, -1)).values, mu1(1, 1.5).values) < 1e-14);
  CHECK(oracle::rel_err(backward_map(mu1(0, 1)).values, eta1(0, -0.5).values) < 1e-14);
  CHECK(oracle::rel_err(backward_map(mu1(1, 1.5)).values, eta1(2, -1).values) < 1e-14);

  // quadrature cross-check of the (2, -1) moments
  auto dens = [](double z) { return std::exp(2 * z - z * z); };
  const double Z = oracle::integrate(dens, -15, 15);
  CHECK(oracle::integrate([&](double z) { return z * dens(z); }, -15, 15) / Z == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(oracle::integrate([&](double z) { return z * z * dens(z); }, -15, 15) / Z ==
        doctest::Approx(1.5).epsilon(1e-10));

  const Family f2 = Family::gaussian_dense(2);
  const Vector e2 = pack_natural(f2, Vector::Zero(2), Matrix::Identity(2, 2));
  Vector expect(5);
  expect << 0, 0, 1, 0, 1;
  CHECK((forward_map({f2, e2}).values - expect).norm() < 1e-14);
}

TEST_CASE("round trip over random parameters, dims 1-8, both kinds") {
  Rng rng = make_stream(7, 0);
  double worst = 0.0;
  for (FamilyKind kind : kKinds)
    for (int d = 1; d <= 8; ++d)
      for (int rep = 0; rep < 100; ++rep) {
        const NaturalParams e = fixture::random_natural(fixture::family(kind, d), rng);
        const Vector back = backward_map(forward_map(e)).values;
        worst = std::max(worst, (back - e.values).cwiseAbs().maxCoeff() / e.values.cwiseAbs().maxCoeff());
      }
  CHECK(worst < 1e-8);
}

TEST_CASE("dual log partition and the Fenchel identity") {
  CHECK(dual_log_partition(mu1(0, 1)) == doctest::Approx(-1.4189385332046727).epsilon(1e-12));
  Rng rng = make_stream(9, 0);
  for (FamilyKind kind : kKinds)
    for (int d = 1; d <= 6; ++d)
      for (int rep = 0; rep < 10; ++rep) {
        const NaturalParams e = fixture::random_natural(fixture::family(kind, d), rng);
        const MeanParams m = forward_map(e);
        const double gap = log_partition(e) + dual_log_partition(m) - e.values.dot(m.values);
        CHECK(std::abs(gap) < 1e-8);
      }
}

TEST_CASE("Fisher matrices: finite differences and mutual inverse") {
  const Matrix f1 = fisher_natural(eta1(0, -0.5));
  Matrix expect(2, 2);
  expect << 1, 0, 0, 2;
  CHECK((f1 - expect).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix fd1 = oracle::jacobian([](const Vector& e) { return forward_map(eta1(e[0], e[1])).values; },
                                      eta1(0, -0.5).values, 1e-5);
  CHECK(oracle::rel_err(fd1, expect) < 1e-5);

  Rng rng = make_stream(11, 0);
  for (FamilyKind kind : kKinds)
    for (int d = 1; d <= 8; ++d)
      for (int rep = 0; rep < 5; ++rep) {
        const Family f = fixture::family(kind, d);
        const NaturalParams e = fixture::random_natural(f, rng);
        const Matrix F = fisher_natural(e);
        const Matrix fd = oracle::jacobian([&](const Vector& x) { return forward_map({f, x}).values; }, e.values, 1e-5);
        CHECK(oracle::rel_err(F, fd) < 1e-5);
        CHECK((F - F.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(Eigen::LLT<Matrix>(F).info() == Eigen::Success);
        const Matrix G = fisher_mean(forward_map(e));
        CHECK(Eigen::LLT<Matrix>(G).info() == Eigen::Success);
        CHECK((G * F - Matrix::Identity(F.rows(), F.cols())).cwiseAbs().maxCoeff() < 1e-6);
      }
}

TEST_CASE("JVP through the backward map") {
  Rng rng = make_stream(13, 0);
  for (FamilyKind kind : kKinds)
    for (int d = 1; d <= 6; ++d) {
      const Family f = fixture::family(kind, d);
      const MeanParams m = forward_map(fixture::random_natural(f, rng));
      CHECK(jvp_backward(m, Vector::Zero(f.dim_s())).norm() == 0.0);
      const Matrix G = fisher_mean(m);
      for (int k = 0; k < f.dim_s(); ++k)
        CHECK(oracle::rel_err(jvp_backward(m, Vector::Unit(f.dim_s(), k)), Vector(G.col(k))) < 1e-12);
      for (int rep = 0; rep < 5; ++rep) {
        const Vector v = standard_normal_vector(rng, f.dim_s());
        const double h = 1e-5;
        const Vector fd = (backward_map({f, m.values + h * v}).values - backward_map({f, m.values - h * v}).values) / (2 * h);
        CHECK((jvp_backward(m, v) - fd).norm() / fd.norm() < 1e-5);
      }
    }
}

TEST_CASE("sampling a member") {
  Rng rng = make_stream(17, 0);
  const int n = 100000;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) sum += sample_member(eta1(0, -0.5), rng)[0];
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));

  Rng a = make_stream(21, 3), b = make_stream(21, 3);
  const NaturalParams e = fixture::random_natural(Family::gaussian_dense(3), a);
  fixture::random_natural(Family::gaussian_dense(3), b);
  CHECK((sample_member(e, a) - sample_member(e, b)).norm() == 0.0);

  // dense 3-D: sample covariance of many draws
  Rng r = make_stream(23, 0);
  const GaussianMoments g = unpack_mean(e.family, forward_map(e).values);
  Vector mean = Vector::Zero(3);
  Matrix second = Matrix::Zero(3, 3);
  const int n3 = 200000;
  for (int k = 0; k < n3; ++k) {
    const Vector z = sample_member(e, r);
    mean += z;
    second += z * z.transpose();
  }
  mean /= n3;
  const Matrix cov = second / n3 - mean * mean.transpose();
  CHECK((mean - g.mean).cwiseAbs().maxCoeff() < 5 * std::sqrt(g.covariance.diagonal().maxCoeff() / n3));
  CHECK(oracle::rel_err(cov, g.covariance) < 0.02);
}

TEST_CASE("KL divergence") {
  CHECK(kl_divergence(eta1(0, -0.5), eta1(0, -0.5)) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(kl_divergence(eta1(0, -0.5), eta1(1, -0.5)) == doctest::Approx(0.5).epsilon(1e-12));

  // quadrature: int p log(p/q)
  auto logn = [](double z, double m, double v) { return -0.5 * std::log(2 * M_PI * v) - 0.5 * (z - m) * (z - m) / v; };
  const double q = oracle::integrate([&](double z) { return std::exp(logn(z, 0, 1)) * (logn(z, 0, 1) - logn(z, 1, 1)); },
                                     -20, 20);
  CHECK(q == doctest::Approx(0.5).epsilon(1e-10));

  // unequal variances: N(0,1) vs N(1,4)
  const NaturalParams p = eta1(0, -0.5), r = eta1(0.25, -0.125);
  const double pr = oracle::integrate([&](double z) { return std::exp(logn(z, 0, 1)) * (logn(z, 0, 1) - logn(z, 1, 4)); },
                                      -20, 20);
  CHECK(kl_divergence(p, r) == doctest::Approx(pr).epsilon(1e-9));
  CHECK(std::abs(kl_divergence(p, r) - kl_divergence(r, p)) > 0.1);

  Rng rng = make_stream(29, 0);
  for (FamilyKind kind : kKinds)
    for (int d = 1; d <= 8; ++d)
      for (int rep = 0; rep < 10; ++rep) {
        const Family f = fixture::family(kind, d);
        const NaturalParams a = fixture::random_natural(f, rng), b = fixture::random_natural(f, rng);
        CHECK(kl_divergence(a, b) > 0.0);
        CHECK(std::abs(kl_divergence(a, a)) < 1e-10);
      }
}
