#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "htd/divergence.hpp"
#include "htd/errors.hpp"
#include "htd/rng.hpp"
#include "htd/schedule_design.hpp"

using namespace htd;

namespace {

DataMoments moments(double e, int d) {
  DataMoments m;
  m.mean_sq_norm = e;
  m.d = d;
  return m;
}

Matrix random_spd(int d, RngStream& rng) {
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + 0.5 * Matrix::Identity(d, d);
}

}  // namespace

TEST_CASE("moments from samples") {
  SampleMatrix x(3, 2);
  x << 1, 2, 3, 4, 0, 0;
  const DataMoments m = DataMoments::from_samples(x, true);
  CHECK(m.d == 2);
  CHECK(m.mean_sq_norm == doctest::Approx((5.0 + 25.0) / 3));
  REQUIRE(m.second_moment);
  CHECK((*m.second_moment)(0, 1) == doctest::Approx((2.0 + 12.0) / 3));
  CHECK_FALSE(DataMoments::from_samples(x).second_moment);
}

TEST_CASE("Gaussian sigma_max") {
  // keeps the 1/2 of the Gaussian KL: sigma^2 = sqrt(lambda E / 2)
  CHECK(sigma_max_gaussian(moments(4, 2), 1.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(sigma_max_gaussian(moments(4, 2), 0.0), ParameterError);

  // stationarity of s + lambda E[KL(N(x, s I) || N(0, s I))], KL = ||x||^2 / (2 s)
  const double e = 7.3, lam = 0.6;
  auto lagrangian = [&](double s) { return s + lam * e / (2 * s); };
  const double s = sigma_max_gaussian(moments(e, 3), lam);
  const double h = 1e-5 * s;
  const double grad = (lagrangian(s + h) - lagrangian(s - h)) / (2 * h);
  CHECK(std::abs(grad) < 1e-6);
  CHECK(gaussian_design_objective(s, moments(e, 3), lam) == doctest::Approx(lagrangian(s)).epsilon(1e-15));

  // the target mutual information fixes lambda; doubling it quarters lambda and halves sigma^2
  const DataMoments m = moments(e, 3);
  const double l1 = lambda_from_mi(0.8, m), l2 = lambda_from_mi(1.6, m);
  CHECK(l2 == doctest::Approx(l1 / 4).epsilon(1e-15));
  CHECK(sigma_max_gaussian(m, l2) == doctest::Approx(sigma_max_gaussian(m, l1) / 2).epsilon(1e-14));
  CHECK(mi_at_optimum_gaussian(m, l1) == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("Student-t sigma_max") {
  CHECK_THROWS_AS(sigma_max_student_t(moments(4, 2), 1.0, 2.0), ParameterError);
  CHECK(student_t_design_exponent(5, 0) == 0.5);
  CHECK(student_t_design_exponent(1e9, 3) == doctest::Approx(0.5).epsilon(1e-8));

  // Gaussian limit
  const DataMoments m = moments(4, 2);
  CHECK(sigma_max_student_t(m, 1.0, 1e6) == doctest::Approx(sigma_max_gaussian(m, 1.0)).epsilon(1e-3));

  // stationarity of s + lambda D_gamma(t(x, s I, nu) || t(0, s I, nu)), with the
  // divergence from the closed form. It is linear in ||x||^2, so one point
  // with ||x||^2 = E stands in for the data average.
  for (double nu : {3.0, 5.0, 20.0}) {
    for (int d : {1, 2, 8}) {
      const double e = 2.5 * d, lam = 0.9;
      const DataMoments md = moments(e, d);
      Vector x = Vector::Zero(d);
      x[0] = std::sqrt(e);
      auto lagrangian = [&](double s) {
        return s + lam * gamma_divergence_student_t_diag(x, Vector::Constant(d, s), Vector::Zero(d),
                                                         Vector::Constant(d, s), nu);
      };
      const double s = sigma_max_student_t(md, lam, nu);
      const double h = 1e-5 * s;
      const double grad = (lagrangian(s + h) - lagrangian(s - h)) / (2 * h);
      REQUIRE(std::abs(grad) < 1e-6);
      REQUIRE(student_t_design_objective(s, md, lam, nu) == doctest::Approx(lagrangian(s)).epsilon(1e-12));
    }
  }
}

TEST_CASE("sigma_max grows with lambda and with the data norm") {
  double prev_g = 0, prev_t = 0;
  for (double lam : {0.1, 0.5, 1.0, 4.0, 20.0}) {
    const double g = sigma_max_gaussian(moments(3, 2), lam), t = sigma_max_student_t(moments(3, 2), lam, 5);
    CHECK(g > prev_g);
    CHECK(t > prev_t);
    prev_g = g;
    prev_t = t;
  }
  prev_g = prev_t = 0;
  for (double e : {0.1, 1.0, 3.0, 50.0}) {
    const double g = sigma_max_gaussian(moments(e, 2), 1), t = sigma_max_student_t(moments(e, 2), 1, 5);
    CHECK(g > prev_g);
    CHECK(t > prev_t);
    prev_g = g;
    prev_t = t;
  }
}

TEST_CASE("correlated design") {
  CHECK((correlated_sigma(Matrix::Identity(3, 3), 4.0) - 2 * Matrix::Identity(3, 3)).norm() < 1e-14);

  RngStream rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const int d = 2 + trial;
    const Matrix r = random_spd(d, rng);
    const double lam = 0.3 + trial;
    const Matrix s = correlated_sigma(r, lam);
    CHECK((s - s.transpose()).norm() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(s).eigenvalues().minCoeff() > 0);
    // Sigma^2 = lambda R
    CHECK((s * s - lam * r).norm() < 1e-10 * (lam * r).norm());
    CHECK(correlated_stationarity(s, r, lam).cwiseAbs().maxCoeff() < 1e-10);

    // objective written out: tr(Sigma) + lambda tr(Sigma^-1 R)
    auto objective = [&](const Matrix& m) { return m.trace() + lam * m.ldlt().solve(r).trace(); };
    const double best = objective(s);
    CHECK(correlated_objective(s, r, lam) == doctest::Approx(best).epsilon(1e-12));
    int beaten = 0;
    for (int k = 0; k < 100; ++k) {
      Matrix e = random_spd(d, rng);
      e *= 0.05 * rng.uniform() / e.norm();
      if (objective(s + e) < best) ++beaten;
    }
    CHECK(beaten == 0);

    // homogeneity of the matrix square root
    CHECK((correlated_sigma(3.0 * r, lam) - std::sqrt(3.0) * s).norm() < 1e-10 * s.norm());
  }
}

TEST_CASE("PCP noise-level heuristic") {
  CHECK(pcp_pi_mean(1.0, 3.0, 2.0) == doctest::Approx(1.8).epsilon(1e-15));
  CHECK(pcp_pi_mean(0.3, 0.0, 2.0) == -1.2);
  const double off = pcp_range_offset(0.453, 3.0, 2.0);
  CHECK(off == doctest::Approx(0.546).epsilon(2e-3));
  CHECK(pcp_pi_mean(1.0 - off, 3.0, 2.0) == doctest::Approx(0.453).epsilon(1e-12));
  CHECK_THROWS(pcp_range_offset(2.5, 3.0, 2.0));
}
