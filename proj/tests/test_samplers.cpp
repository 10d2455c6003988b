#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "htd/errors.hpp"
#include "htd/samplers.hpp"
#include "htd/student_t.hpp"
#include "oracles.hpp"

using namespace htd;

namespace {

SamplerConfig base_config(int steps, std::size_t n, int d, DofSpec dof) {
  SamplerConfig c;
  c.grid.steps = steps;
  c.n = n;
  c.d = d;
  c.dof = std::move(dof);
  c.seed = 17;
  return c;
}

double max_abs_diff(const SampleMatrix& a, const SampleMatrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("timestep grid") {
  const std::vector<double> t = timestep_grid(18, 0.002, 80, 7);
  REQUIRE(t.size() == 19);
  CHECK(t[0] == 80.0);
  CHECK(t[17] == 0.002);
  CHECK(t[18] == 0.0);
  for (std::size_t i = 1; i < t.size(); ++i) REQUIRE(t[i] < t[i - 1]);
  // interior nodes from the rho formula, written out
  const double a = std::pow(80.0, 1 / 7.0), b = std::pow(0.002, 1 / 7.0);
  CHECK(t[5] == doctest::Approx(std::pow(a + 5.0 / 17 * (b - a), 7)).epsilon(1e-14));
  const std::vector<double> lin = timestep_grid(5, 1, 3, 1);
  for (int i = 0; i < 5; ++i) CHECK(lin[static_cast<std::size_t>(i)] == doctest::Approx(3 - 0.5 * i).epsilon(1e-15));
  const std::vector<double> one = timestep_grid(1, 0.002, 80, 7);
  CHECK(one == std::vector<double>{80.0, 0.0});
  CHECK_THROWS_AS(timestep_grid(0, 0.002, 80, 7), ConfigError);
  CHECK_THROWS_AS(timestep_grid(5, 1, 1, 7), ConfigError);
  CHECK(parse_sampler_kind("sde") == SamplerKind::sde);
  CHECK_THROWS_AS(parse_sampler_kind("dpm"), ConfigError);
}

TEST_CASE("Heun on the one-point oracle") {
  for (int steps : {1, 5, 18}) {
    const SamplerConfig c = base_config(steps, 100, 2, DofSpec::scalar(3));
    const SampleMatrix x = heun_ode_sample(unconditional(oracle::one_point(0.7)), c);
    CHECK(max_abs_diff(x, SampleMatrix::Constant(100, 2, 0.7)) < 1e-12);
  }
}

TEST_CASE("initial state is the scaled Student-t draw of each chain") {
  SamplerConfig c = base_config(3, 5, 2, DofSpec::parse("4,inf"));
  Trajectory tr;
  heun_ode_sample(unconditional(oracle::one_point(0.0)), c, &tr);
  for (std::size_t k = 0; k < 5; ++k) {
    RngStream r = chain_stream(c.seed, k);
    const Vector n = student_t_noise(2, c.dof, r);
    for (int j = 0; j < 2; ++j) REQUIRE(tr[0](static_cast<Eigen::Index>(k), j) == 80.0 * n[j]);
  }
}

TEST_CASE("infinite dof Heun is bitwise the Gaussian EDM sampler") {
  const SamplerConfig c = base_config(18, 300, 2, DofSpec::gaussian());
  Trajectory a, b;
  const ChunkDenoiseFn fn = unconditional(oracle::gaussian_affine(0.3, 0.8));
  const SampleMatrix xa = heun_ode_sample(fn, c, &a);
  const SampleMatrix xb = edm_heun_sample(fn, c, &b);
  CHECK(max_abs_diff(xa, xb) == 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(max_abs_diff(a[i], b[i]) == 0.0);
}

TEST_CASE("Heun is second order on the Gaussian model") {
  // The exact flow for Gaussian data keeps (x - m)/sqrt(t^2 + s^2) constant.
  const double m = 0.3, s = 0.5;
  std::vector<double> ns, errs;
  for (int steps : {8, 16, 32, 64}) {
    SamplerConfig c = base_config(steps, 1, 1, DofSpec::gaussian());
    Trajectory tr;
    heun_ode_sample(unconditional(oracle::gaussian_affine(m, s)), c, &tr);
    const double xT = tr[0](0, 0);
    const double exact = oracle::gaussian_affine_flow(xT, 80, 0.002, m, s);
    ns.push_back(steps);
    errs.push_back(std::abs(tr[static_cast<std::size_t>(steps) - 1](0, 0) - exact));
  }
  CHECK(oracle::loglog_slope(ns, errs) <= -1.8);
}

TEST_CASE("two-point oracle reproduces the mixture weights") {
  const double a = -1, b = 2, w = 0.3, nu = 5;
  SamplerConfig c = base_config(18, 1'000'000, 1, DofSpec::scalar(nu));
  const SampleMatrix x = heun_ode_sample(unconditional(oracle::two_point(a, b, w, nu)), c);
  std::size_t near_a = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) near_a += x(i, 0) < 0.5 ? 1 : 0;
  CHECK(std::abs(static_cast<double>(near_a) / 1e6 - w) < 0.01);
}

TEST_CASE("ancestral sampling") {
  SUBCASE("zero posterior variance gives iterated posterior means") {
    SamplerConfig c = base_config(6, 4, 2, DofSpec::scalar(5));
    c.ancestral_cross = CrossVariance::ode;
    const DenoiseFn dfn = oracle::gaussian_affine(0.1, 1.2);
    Trajectory tr;
    ancestral_sample(unconditional(dfn), c, &tr);
    const std::vector<double> t = timestep_grid(6, 0.002, 80, 7);
    SampleMatrix x = tr[0], den;
    for (std::size_t i = 0; i < 6; ++i) {
      dfn(x, t[i], den);
      // mean = (t'/t) x + (1 - t'/t) D under the sigma_t sigma_t' cross-scale
      const double r = t[i + 1] / t[i];
      x = r * x + (1 - r) * den;
      REQUIRE(max_abs_diff(x, tr[i + 1]) < 1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff()));
    }
  }
  SUBCASE("Gaussian limit is the DDPM-style step") {
    SamplerConfig c = base_config(4, 3, 1, DofSpec::gaussian());
    const DenoiseFn dfn = oracle::gaussian_affine(0.0, 1.0);
    Trajectory tr;
    ancestral_sample(unconditional(dfn), c, &tr);
    const std::vector<double> t = timestep_grid(4, 0.002, 80, 7);
    for (std::size_t k = 0; k < 3; ++k) {
      RngStream r = chain_stream(c.seed, k);
      double x = 80 * r.normal();
      for (std::size_t i = 0; i < 4; ++i) {
        const double d = x / (1 + t[i] * t[i]);
        const double a = t[i + 1] * t[i + 1] / (t[i] * t[i]);
        const double var = t[i + 1] * t[i + 1] - t[i + 1] * t[i + 1] * a;
        x = a * x + (1 - a) * d;
        if (var > 0) x += std::sqrt(var) * r.normal();
      }
      CHECK(tr[4](static_cast<Eigen::Index>(k), 0) == doctest::Approx(x).epsilon(1e-12));
    }
  }
  SUBCASE("one-point data: marginal std follows the grid, end point exact") {
    SamplerConfig c = base_config(10, 200'000, 1, DofSpec::gaussian());
    Trajectory tr;
    const SampleMatrix x = ancestral_sample(unconditional(oracle::one_point(1.5)), c, &tr);
    CHECK(max_abs_diff(x, SampleMatrix::Constant(200'000, 1, 1.5)) < 1e-12);
    const SampleMatrix& last = tr[9];
    const double sd = std::sqrt((last.array() - 1.5).square().mean());
    CHECK(sd == doctest::Approx(0.002).epsilon(0.01));
  }
}

TEST_CASE("SDE presets satisfy the consistency condition") {
  for (int steps : {2, 18, 64}) {
    for (double rho : {1.0, 7.0}) {
      const std::vector<double> t = timestep_grid(steps, 0.002, 80, rho);
      const ScheduleParams sched = ScheduleParams::edm(DofSpec::scalar(4));
      for (SdePreset p : {SdePreset::ode, SdePreset::markov}) {
        for (double beta : {0.5, 1.0, 3.0}) {
          for (std::size_t i = 0; i + 2 < t.size(); ++i) {
            const SdeCoefficients c = sde_preset(p, beta, t[i], t[i] - t[i + 1], sched);
            // condition written out: (sigma'^2 - beta g dt) / sigma_12^2 - 1 = f dt
            const double dt = t[i] - t[i + 1];
            const double lhs = (t[i + 1] * t[i + 1] - c.beta * c.g * dt) / c.cross12_sq - 1.0;
            REQUIRE(std::abs(lhs - c.f * dt) <= 1e-8);
            REQUIRE(c.g >= 0);
            if (p == SdePreset::ode) REQUIRE(c.g == 0.0);
          }
        }
      }
    }
  }
  const ScheduleParams sched = ScheduleParams::edm(DofSpec::scalar(4));
  SdeCoefficients bad = sde_preset(SdePreset::markov, 1.0, 2.0, 0.5, sched);
  bad.f += 1e-3;
  SampleMatrix x = SampleMatrix::Ones(1, 1), d = SampleMatrix::Zero(1, 1);
  std::vector<RngStream> r(1);
  CHECK_THROWS_AS(sde_step(x, d, bad, 2.0, 0.5, sched, PosteriorDofMode::per_coordinate, r), ConfigError);
}

TEST_CASE("noise-free SDE preset follows the ODE Euler path") {
  SamplerConfig c = base_config(18, 50, 2, DofSpec::scalar(4));
  c.kind = SamplerKind::sde;
  c.preset = SdePreset::ode;
  const DenoiseFn dfn = oracle::gaussian_affine(0.2, 0.7);
  Trajectory tr;
  sde_sample(unconditional(dfn), c, &tr);
  const std::vector<double> t = timestep_grid(18, 0.002, 80, 7);
  SampleMatrix x = tr[0], den;
  for (std::size_t i = 0; i < 18; ++i) {
    dfn(x, t[i], den);
    x = x + (t[i + 1] - t[i]) * ((x - den).array() / t[i]).matrix();
    REQUIRE(max_abs_diff(x, tr[i + 1]) <= 1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("Gaussian SDE increments are plain normal draws") {
  const ScheduleParams sched = ScheduleParams::edm(DofSpec::gaussian());
  const SdeCoefficients c = sde_preset(SdePreset::markov, 1.0, 2.0, 0.5, sched);
  SampleMatrix x = SampleMatrix::Zero(2, 3), d = SampleMatrix::Zero(2, 3);
  std::vector<RngStream> r{RngStream(1), RngStream(2)};
  sde_step(x, d, c, 2.0, 0.5, sched, PosteriorDofMode::per_coordinate, r);
  for (int k = 0; k < 2; ++k) {
    RngStream ref(static_cast<std::uint64_t>(k + 1));
    for (int j = 0; j < 3; ++j) REQUIRE(x(k, j) == std::sqrt(c.beta * c.g * 0.5) * ref.normal());
  }
}

TEST_CASE("SDE weak error halves with the step") {
  // Gaussian data N(0, 1): marginal at t is N(0, 1 + t^2). Integrate from
  // t = 2 to 0.5 on a uniform grid and compare E[x^2] with 1.25.
  const ScheduleParams sched = ScheduleParams::edm(DofSpec::gaussian());
  const DenoiseFn dfn = oracle::gaussian_affine(0.0, 1.0);
  const std::size_t chains = 2'000'000, block = 100'000;
  std::vector<double> err;
  for (int steps : {10, 20, 40, 80}) {
    const double dt = 1.5 / steps;
    double second = 0;
    for (std::size_t b0 = 0; b0 < chains; b0 += block) {
      std::vector<RngStream> r;
      SampleMatrix x(static_cast<Eigen::Index>(block), 1), den;
      for (std::size_t k = 0; k < block; ++k) {
        r.push_back(chain_stream(static_cast<std::uint64_t>(steps), b0 + k));
        x(static_cast<Eigen::Index>(k), 0) = std::sqrt(5.0) * r.back().normal();
      }
      for (int i = 0; i < steps; ++i) {
        const double t = 2.0 - i * dt;
        dfn(x, t, den);
        sde_step(x, den, sde_preset(SdePreset::markov, 1.0, t, dt, sched), t, dt, sched,
                 PosteriorDofMode::per_coordinate, r);
      }
      second += x.squaredNorm();
    }
    err.push_back(second / static_cast<double>(chains) - 1.25);
  }
  for (std::size_t i = 0; i + 1 < err.size(); ++i) {
    const double ratio = err[i] / err[i + 1];
    CHECK(ratio > 1.7);
    CHECK(ratio < 2.3);
  }
}

TEST_CASE("flow sampler") {
  SamplerConfig c = base_config(18, 20, 2, DofSpec::scalar(3));
  c.grid.sigma_max = 1.0;
  c.grid.sigma_min = 0.01;
  const std::vector<double> ft = flow_time_grid(c.grid);
  CHECK(ft.front() == 0.0);
  CHECK(ft[17] == doctest::Approx(0.99).epsilon(1e-15));
  CHECK(ft.back() == 1.0);

  // exact noise predictor for one-point data at x1*: eps = (x - (1 - sigma) x1*) / sigma
  const double x1 = -0.8;
  const DenoiseFn eps = [x1](const SampleMatrix& x, double sigma, SampleMatrix& out) {
    out = ((x.array() - (1 - sigma) * x1) / sigma).matrix();
  };
  for (int steps : {2, 7, 18}) {
    c.grid.steps = steps;
    const SampleMatrix x = tflow_heun_sample(unconditional(eps), c);
    CHECK(max_abs_diff(x, SampleMatrix::Constant(20, 2, x1)) < 1e-12);
  }

  // Gaussian limit: the starting state is the chain's plain normal draw
  c.dof = DofSpec::gaussian();
  Trajectory tr;
  tflow_heun_sample(unconditional(eps), c, &tr);
  for (std::size_t k = 0; k < 20; ++k) {
    RngStream r = chain_stream(c.seed, k);
    for (int j = 0; j < 2; ++j) REQUIRE(tr[0](static_cast<Eigen::Index>(k), j) == r.normal());
  }
  c.grid.sigma_max = 80;
  CHECK_THROWS_AS(tflow_heun_sample(unconditional(eps), c), ConfigError);
}

TEST_CASE("samplers are pure and thread-count independent") {
  const ChunkDenoiseFn fn = unconditional(oracle::gaussian_affine(0.0, 2.0));
  for (SamplerKind k : {SamplerKind::heun, SamplerKind::ancestral, SamplerKind::sde}) {
    SamplerConfig c = base_config(8, 1000, 2, DofSpec::parse("6,3"));
    c.kind = k;
    c.chunk = 64;
    const SampleMatrix a = run_sampler(fn, c);
    const SampleMatrix b = run_sampler(fn, c);
    c.threads = 3;
    const SampleMatrix d = run_sampler(fn, c);
    CHECK(max_abs_diff(a, b) == 0.0);
    CHECK(max_abs_diff(a, d) == 0.0);
  }
}

TEST_CASE("non-finite denoiser output aborts with a diagnostic") {
  const DenoiseFn bad = [](const SampleMatrix& x, double sigma, SampleMatrix& out) {
    out = x;
    if (sigma < 1) out(0, 0) = std::numeric_limits<double>::quiet_NaN();
  };
  const SamplerConfig c = base_config(18, 10, 1, DofSpec::scalar(5));
  try {
    heun_ode_sample(unconditional(bad), c);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("chain 0") != std::string::npos);
  }
}
