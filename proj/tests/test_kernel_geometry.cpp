#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Cholesky>

#include "htd/errors.hpp"
#include "htd/kernel.hpp"
#include "htd/student_t.hpp"
#include "oracles.hpp"

using namespace htd;

namespace {

// mu_t = 1/sqrt(1+t^2), sigma_t = t mu_t: a schedule with mu != 1.
ScheduleParams vp_like(DofSpec dof) {
  ScheduleParams s;
  s.mu = [](double t) { return 1.0 / std::sqrt(1.0 + t * t); };
  s.sigma = [](double t) { return t / std::sqrt(1.0 + t * t); };
  s.mu_dot = [](double t) { return -t / std::pow(1.0 + t * t, 1.5); };
  s.sigma_dot = [](double t) { return 1.0 / std::pow(1.0 + t * t, 1.5); };
  s.dof = std::move(dof);
  s.set_cross(CrossVariance::markov);
  return s;
}

// log density of a p-variate t with full scale matrix S, from the definition.
double mvt_logpdf(const Vector& x, const Vector& m, const Matrix& S, double nu) {
  const double p = static_cast<double>(x.size());
  Eigen::LLT<Matrix> llt(S);
  const Vector z = llt.matrixL().solve(x - m);
  double logdet = 0;
  for (Eigen::Index i = 0; i < S.rows(); ++i) logdet += 2 * std::log(llt.matrixL()(i, i));
  return std::lgamma((nu + p) / 2) - std::lgamma(nu / 2) - p / 2 * std::log(nu * M_PI) - 0.5 * logdet -
         (nu + p) / 2 * std::log1p(z.squaredNorm() / nu);
}

Vector vec(std::initializer_list<double> v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double a : v) x[i++] = a;
  return x;
}

}  // namespace

TEST_CASE("perturb with zero noise is mu_t x0") {
  ScheduleParams s = vp_like(DofSpec::scalar(3));
  s.sigma = [](double) { return 0.0; };
  RngStream rng(1);
  const Vector x0 = vec({1.5, -2.0});
  const Vector x = perturb(x0, 0.7, s, rng);
  CHECK(x[0] == s.mu(0.7) * 1.5);
  CHECK(x[1] == s.mu(0.7) * -2.0);
}

TEST_CASE("perturbation variance is nu/(nu-2)") {
  const ScheduleParams s = ScheduleParams::edm(DofSpec::scalar(5));
  RngStream rng(2);
  std::vector<double> r0, r1;
  const Vector x0 = vec({0.3, -0.1});
  for (int k = 0; k < 1'000'000; ++k) {
    const Vector x = perturb(x0, 1.0, s, rng);
    r0.push_back(x[0] - x0[0]);
    r1.push_back(x[1] - x0[1]);
  }
  CHECK(oracle::variance(r0) == doctest::Approx(5.0 / 3.0).epsilon(0.02));
  CHECK(oracle::variance(r1) == doctest::Approx(5.0 / 3.0).epsilon(0.02));
}

TEST_CASE("infinite dof perturbation equals the Gaussian one") {
  const ScheduleParams s = ScheduleParams::edm(DofSpec::gaussian());
  RngStream a(4), b(4);
  const Vector x0 = vec({1, 2, 3});
  const Vector x = perturb(x0, 2.5, s, a);
  for (int j = 0; j < 3; ++j) CHECK(x[j] == x0[j] + 2.5 * b.normal());
}

TEST_CASE("forward posterior: zero residual and the ode cross-scale") {
  ScheduleParams s = vp_like(DofSpec::scalar(4));
  const Vector x0 = vec({0.2, -0.9});
  const double t = 1.3, dt = 0.4;
  const PosteriorParams p = forward_posterior(s.mu(t) * x0, x0, t, dt, s);
  CHECK(p.d1 == 0.0);
  CHECK((p.mean - s.mu(t - dt) * x0).norm() < 1e-15);
  s.set_cross(CrossVariance::ode);
  CHECK(std::abs(forward_posterior(x0, x0, t, dt, s).sigma_bar_sq) < 1e-15);
}

TEST_CASE("forward posterior equals the brute-force conditional of the joint") {
  // 2-d instance; the joint of (x_t, x_{t-dt}) given x0 is a 4-variate t with
  // block scale [[s_t^2 I, c I], [c I, s_p^2 I]]. Normalise the joint on a
  // grid over x_{t-dt} and compare with the closed-form posterior density.
  const double nu = 5.0;
  const ScheduleParams s = vp_like(DofSpec::scalar(nu));
  const double t = 1.1, dt = 0.35, tp = t - dt;
  const Vector x0 = vec({0.4, -0.7});
  const Vector xt = vec({1.3, 0.1});
  const double st = s.sigma(t), sp = s.sigma(tp), c = s.cross12_sq(t, tp);
  Matrix S = Matrix::Zero(4, 4);
  for (int i = 0; i < 2; ++i) {
    S(i, i) = st * st;
    S(i + 2, i + 2) = sp * sp;
    S(i, i + 2) = S(i + 2, i) = c;
  }
  Vector m(4);
  m << s.mu(t) * x0, s.mu(tp) * x0;

  const PosteriorParams post = forward_posterior(xt, x0, t, dt, s);
  const double sc = std::sqrt(post.scale_sq[0]);
  const int n = 1200;
  const double half = 60 * sc, h = 2 * half / n;
  double z = 0;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      Vector x(4);
      x << xt, post.mean[0] - half + i * h, post.mean[1] - half + j * h;
      const double w = (i == 0 || i == n ? 0.5 : 1.0) * (j == 0 || j == n ? 0.5 : 1.0);
      z += w * std::exp(mvt_logpdf(x, m, S, nu));
    }
  }
  z *= h * h;
  StudentTParams q{post.mean, sc, post.dof};
  RngStream rng(8);
  double worst = 0;
  for (int k = 0; k < 50; ++k) {
    const Vector y = post.mean + sc * vec({3 * rng.normal(), 3 * rng.normal()});
    Vector x(4);
    x << xt, y;
    const double brute = std::exp(mvt_logpdf(x, m, S, nu)) / z;
    const double closed = std::exp(student_t_log_density(y, q));
    worst = std::max(worst, std::abs(brute / closed - 1));
  }
  CHECK(post.dof.scalar_value() == nu + 2);
  CHECK(worst < 1e-6);
}

TEST_CASE("1-d conditional consistency on a grid") {
  const double nu = 3.5;
  const ScheduleParams s = vp_like(DofSpec::scalar(nu));
  const double t = 0.9, dt = 0.3, tp = t - dt;
  const Vector x0 = vec({-0.6});
  const Vector xt = vec({0.8});
  const double st = s.sigma(t), sp = s.sigma(tp), c = s.cross12_sq(t, tp);
  Matrix S(2, 2);
  S << st * st, c, c, sp * sp;
  const Vector m = vec({s.mu(t) * x0[0], s.mu(tp) * x0[0]});
  const PosteriorParams post = forward_posterior(xt, x0, t, dt, s);
  StudentTParams q{post.mean, std::sqrt(post.scale_sq[0]), post.dof};
  double worst = 0;
  for (int i = -200; i <= 200; ++i) {
    const double y = post.mean[0] + 0.05 * i;
    const double ratio = std::exp(mvt_logpdf(vec({xt[0], y}), m, S, nu) - oracle::t1_logpdf(xt[0], m[0], st, nu));
    worst = std::max(worst, std::abs(ratio / std::exp(student_t_log_density(vec({y}), q)) - 1));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("negative posterior variance is a schedule error") {
  ScheduleParams s = ScheduleParams::edm(DofSpec::scalar(4));
  s.cross12_sq = [](double t, double) { return t * t; };
  s.cross21_sq = s.cross12_sq;
  CHECK_THROWS_AS(forward_posterior(vec({1.0}), vec({0.0}), 1.0, 0.5, s), ConfigError);
}

TEST_CASE("x0- and eps-parameterised means agree") {
  RngStream rng(10);
  for (int k = 0; k < 200; ++k) {
    const ScheduleParams s = vp_like(DofSpec::scalar(3 + k));
    const double t = 0.1 + 3 * rng.uniform(), dt = t * rng.uniform();
    const Vector xt = vec({rng.normal(), rng.normal(), rng.normal()});
    const Vector D = vec({rng.normal(), rng.normal(), rng.normal()});
    const Vector a = reverse_posterior_mean_x0pred(xt, D, t, dt, s);
    const Vector eps = (xt - s.mu(t) * D) / s.sigma(t);
    const Vector b = reverse_posterior_mean_epspred(xt, eps, t, dt, s);
    REQUIRE((a - b).norm() <= 1e-12 * std::max(1.0, a.norm()));
    // D = x0 recovers the forward posterior mean
    const PosteriorParams p = forward_posterior(xt, D, t, dt, s);
    REQUIRE((a - p.mean).norm() <= 1e-12 * std::max(1.0, a.norm()));
  }
  ScheduleParams s = vp_like(DofSpec::scalar(4));
  s.cross12_sq = s.cross21_sq = [](double, double) { return 0.0; };
  const Vector D = vec({0.5, 1.0});
  CHECK((reverse_posterior_mean_x0pred(vec({3, 4}), D, 1.0, 0.5, s) - s.mu(0.5) * D).norm() < 1e-15);
  s.mu = [](double) { return 0.0; };
  CHECK_THROWS_AS(reverse_posterior_mean_epspred(D, D, 1.0, 0.5, s), ParameterError);
}

TEST_CASE("score from the denoiser") {
  const ScheduleParams s = vp_like(DofSpec::scalar(6));
  const Vector D = vec({0.3, -0.2});
  const double t = 0.8;
  CHECK(score_from_denoiser(s.mu(t) * D, D, t, s).norm() == 0.0);

  const ScheduleParams g = vp_like(DofSpec::gaussian());
  const Vector x = vec({1.0, 2.0});
  const Vector expect = -(x - g.mu(t) * D) / (g.sigma(t) * g.sigma(t));
  CHECK((score_from_denoiser(x, D, t, g) - expect).norm() < 1e-14);

  // single data point x*: the perturbed density is t_1(mu x*, sigma^2, nu)
  const double nu = 4.5, xs = 0.7;
  const ScheduleParams one = vp_like(DofSpec::scalar(nu));
  for (double xv : {-3.0, -0.4, 0.2, 1.9, 6.0}) {
    const double h = 1e-5, mu = one.mu(t), sg = one.sigma(t);
    const double fd =
        (oracle::t1_logpdf(xv + h, mu * xs, sg, nu) - oracle::t1_logpdf(xv - h, mu * xs, sg, nu)) / (2 * h);
    CHECK(score_from_denoiser(vec({xv}), vec({xs}), t, one)[0] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("Tweedie estimate inverts the score") {
  RngStream rng(12);
  const ScheduleParams s = vp_like(DofSpec::scalar(5));
  for (int k = 0; k < 100; ++k) {
    const double t = 0.2 + rng.uniform();
    const Vector x = vec({rng.normal(), rng.normal(), rng.normal()});
    const Vector D = vec({rng.normal(), rng.normal(), rng.normal()});
    const Vector score = score_from_denoiser(x, D, t, s);
    const Vector ratio = score_ratio(x - s.mu(t) * D, s.sigma(t), s.dof);
    REQUIRE((tweedie_x0_estimate(x, score, ratio, t, s) - D).norm() < 1e-12);
  }
  const Vector x = vec({1.0, -1.0});
  CHECK((tweedie_x0_estimate(x, Vector::Zero(2), Vector::Ones(2), 0.5, s) - x / s.mu(0.5)).norm() < 1e-15);

  // Gaussian data N(m, v) with mu = 1: E[x0 | x] = m + v/(v+sigma^2) (x - m)
  const ScheduleParams e = ScheduleParams::edm(DofSpec::gaussian());
  const double m = 0.4, v = 2.0, sg = 1.3;
  const Vector xx = vec({2.2});
  const Vector sc = vec({-(xx[0] - m) / (v + sg * sg)});
  CHECK(tweedie_x0_estimate(xx, sc, Vector::Ones(1), sg, e)[0] ==
        doctest::Approx(m + v / (v + sg * sg) * (xx[0] - m)).epsilon(1e-14));
}

TEST_CASE("score-form and denoiser-form ODE drifts agree") {
  RngStream rng(13);
  for (const char* text : {"inf", "3.5", "20,4,7"}) {
    const ScheduleParams s = vp_like(DofSpec::parse(text));
    for (int k = 0; k < 100; ++k) {
      const double t = 0.05 + 2 * rng.uniform();
      const Vector x = vec({rng.normal(), rng.normal(), rng.normal()});
      const Vector D = vec({rng.normal(), rng.normal(), rng.normal()});
      const Vector score = score_from_denoiser(x, D, t, s);
      const Vector ratio = score_ratio(x - s.mu(t) * D, s.sigma(t), s.dof);
      const Vector a = denoiser_ode_drift(x, D, t, s);
      const Vector b = score_ode_step(x, score, ratio, t, s);
      REQUIRE((a - b).norm() <= 1e-12 * std::max(1.0, a.norm()));
    }
  }
  const ScheduleParams s = vp_like(DofSpec::scalar(4));
  const Vector x = vec({1.0, 2.0});
  CHECK((score_ode_step(x, Vector::Zero(2), Vector::Ones(2), 0.6, s) - s.mu_dot(0.6) / s.mu(0.6) * x).norm() == 0.0);
  // the ratio is 1 only when d1' = d
  Vector r = vec({1.0, 1.0});
  CHECK(score_ratio(r, 1.0, DofSpec::scalar(1e9))[0] == doctest::Approx(1.0));
  CHECK(score_ratio(r, 1.0, DofSpec::scalar(7))[0] == 1.0);
  CHECK(score_ratio(2 * r, 1.0, DofSpec::scalar(7))[0] != 1.0);
}
