#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "htd/denoiser.hpp"
#include "htd/errors.hpp"
#include "htd/mlp.hpp"

using namespace htd;

namespace {

SampleMatrix random_rows(int n, int d, RngStream& rng, double scale = 1.0) {
  SampleMatrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = scale * rng.normal();
  return x;
}

// Loss L = sum(w .* D) so dL/dD = w.
double weighted_sum(const Denoiser& net, const SampleMatrix& x, const Vector& sigma, const SampleMatrix* cond,
                    const SampleMatrix& w) {
  SampleMatrix out;
  net.forward(x, sigma, cond, out);
  return (out.array() * w.array()).sum();
}

}  // namespace

TEST_CASE("preconditioner at zero noise and the EDM point") {
  const PrecondCoeffs z = precondition_coeffs(0.0, 5.0, 0.7);
  CHECK(z.c_skip == 1.0);
  CHECK(z.c_out == 0.0);
  CHECK(z.c_in == doctest::Approx(1 / 0.7).epsilon(1e-15));
  const PrecondCoeffs e = precondition_coeffs(1.0, std::nullopt, 1.0);
  CHECK(e.c_skip == 0.5);
  CHECK(e.c_out == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(e.c_in == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(e.c_noise == 0.0);
  CHECK_THROWS_AS(precondition_coeffs(1.0, 2.0, 1.0), ParameterError);
  CHECK_THROWS_AS(precondition_coeffs(1.0, 1.5, 1.0), ParameterError);
  CHECK_THROWS_AS(precondition_coeffs(-1.0, 5.0, 1.0), ParameterError);
}

TEST_CASE("unit-variance target identity over a grid") {
  double worst = 0;
  for (int a = 0; a < 10; ++a) {
    const double sigma = 0.002 * std::pow(80 / 0.002, a / 9.0);
    for (double nu : {2.5, 3.0, 4.0, 5.0, 7.0, 10.0, 20.0, 50.0, 1e3, 1e6}) {
      const double sd = 0.5;
      const PrecondCoeffs c = precondition_coeffs(sigma, nu, sd);
      const double s = nu / (nu - 2) * sigma * sigma;
      const double rhs = (1 - c.c_skip) * (1 - c.c_skip) * sd * sd + c.c_skip * c.c_skip * s;
      worst = std::max(worst, std::abs(c.c_out * c.c_out - rhs) / std::max(1.0, rhs));
      // input scaling gives unit variance: c_in^2 (sd^2 + s) = 1
      REQUIRE(c.c_in * c.c_in * (sd * sd + s) == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
  CHECK(worst < 1e-14);
}

TEST_CASE("infinite dof reproduces the EDM coefficients exactly") {
  for (int a = 0; a < 40; ++a) {
    const double sigma = 0.002 * std::pow(80 / 0.002, a / 39.0);
    const PrecondCoeffs t = precondition_coeffs(sigma, std::nullopt, 0.5);
    const PrecondCoeffs e = edm_precondition_coeffs(sigma, 0.5);
    REQUIRE(t.c_skip == e.c_skip);
    REQUIRE(t.c_out == e.c_out);
    REQUIRE(t.c_in == e.c_in);
    REQUIRE(t.c_noise == e.c_noise);
  }
}

TEST_CASE("denoiser forward basics") {
  RngStream rng(1);
  Denoiser net(2, 0, {64, 64}, PrecondKind::tedm, DofSpec::parse("20,4"), 1.0);
  net.net().init_uniform(rng);
  const SampleMatrix x = random_rows(7, 2, rng);
  SampleMatrix out, again;
  net.forward(x, 0.0, nullptr, out);
  CHECK(out.rows() == 7);
  CHECK(out.cols() == 2);
  CHECK((out - x).norm() == 0.0);

  net.forward(x, 1.3, nullptr, out);
  net.forward(x, 1.3, nullptr, again);
  CHECK((out - again).norm() == 0.0);
  SampleMatrix per_row;
  net.forward(x, Vector::Constant(7, 1.3), nullptr, per_row);
  CHECK((out - per_row).norm() < 1e-14);

  net.net().params().setZero();
  net.forward(x, 1.3, nullptr, out);
  for (int j = 0; j < 2; ++j) {
    const double cs = precondition_coeffs(1.3, net.dof().at(j), 1.0).c_skip;
    for (int i = 0; i < 7; ++i) REQUIRE(out(i, j) == cs * x(i, j));
  }
  CHECK_THROWS_AS(Denoiser(2, 0, {8}, PrecondKind::edm, DofSpec::scalar(4), 1.0), ParameterError);
  CHECK_THROWS_AS(Denoiser(2, 0, {8}, PrecondKind::tedm, DofSpec::scalar(2), 1.0), ParameterError);
  CHECK_THROWS_AS(Denoiser(3, 0, {8}, PrecondKind::tedm, DofSpec::parse("4,5"), 1.0), ParameterError);
}

TEST_CASE("backward matches central differences") {
  RngStream rng(7);
  double worst = 0;
  for (int cfg = 0; cfg < 50; ++cfg) {
    const int d = 1 + static_cast<int>(rng.below(3));
    const int cd = static_cast<int>(rng.below(2));
    const PrecondKind kind =
        cfg % 3 == 0 ? PrecondKind::edm : (cfg % 3 == 1 ? PrecondKind::tedm : PrecondKind::flow);
    const DofSpec dof = kind == PrecondKind::edm ? DofSpec::gaussian() : DofSpec::scalar(2.5 + 10 * rng.uniform());
    Denoiser net(d, cd, {5, 4}, kind, dof, 0.5 + rng.uniform());
    net.net().init_uniform(rng);
    const int n = 3;
    const SampleMatrix x = random_rows(n, d, rng, 2.0);
    Vector sigma(n);
    for (int i = 0; i < n; ++i) sigma[i] = std::exp(2 * rng.normal());
    SampleMatrix cond = random_rows(n, cd, rng);
    const SampleMatrix* cp = cd ? &cond : nullptr;
    const SampleMatrix w = random_rows(n, d, rng);

    Denoiser::Workspace ws;
    SampleMatrix out;
    net.forward(x, sigma, cp, out, &ws);
    Vector grad = Vector::Zero(static_cast<Eigen::Index>(net.net().params().size()));
    net.backward(ws, w, grad);

    Vector& p = net.net().params();
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double keep = p[k], h = 1e-5;
      p[k] = keep + h;
      const double up = weighted_sum(net, x, sigma, cp, w);
      p[k] = keep - h;
      const double dn = weighted_sum(net, x, sigma, cp, w);
      p[k] = keep;
      const double fd = (up - dn) / (2 * h);
      const double err = std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-3});
      worst = std::max(worst, err);
    }

    // linear in the upstream gradient
    Vector g2 = Vector::Zero(grad.size());
    net.backward(ws, 2.5 * w, g2);
    REQUIRE((g2 - 2.5 * grad).norm() <= 1e-12 * std::max(1.0, g2.norm()));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("loss gradient vanishes at a perfect denoiser") {
  // one-point data at 0 and sigma = 0: D = x = x0, so the residual is zero
  RngStream rng(9);
  Denoiser net(2, 0, {6}, PrecondKind::tedm, DofSpec::scalar(5), 1.0);
  net.net().init_uniform(rng);
  const SampleMatrix x = SampleMatrix::Zero(4, 2);
  Denoiser::Workspace ws;
  SampleMatrix out;
  net.forward(x, Vector::Zero(4), nullptr, out, &ws);
  const SampleMatrix resid = out - x;  // dL/dD for 0.5 ||D - x0||^2
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(net.net().params().size()));
  net.backward(ws, resid, grad);
  CHECK(grad.norm() < 1e-14);
}

TEST_CASE("MLP shape and init") {
  MlpShape s;
  s.in_dim = 3;
  s.hidden = {64, 64};
  s.out_dim = 2;
  CHECK(s.num_params() == static_cast<std::size_t>(3 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2));
  Mlp m(s);
  RngStream rng(2);
  m.init_uniform(rng);
  // first layer weights bounded by 1/sqrt(fan_in)
  CHECK(m.params().head(3 * 64).cwiseAbs().maxCoeff() <= 1 / std::sqrt(3.0));
  CHECK(m.params().allFinite());
  const Matrix in = Matrix::Random(3, 5);
  Matrix out;
  m.forward(in, out);
  CHECK(out.rows() == 2);
  CHECK(out.cols() == 5);
}

TEST_CASE("Adam") {
  Vector p(3);
  p << 1, -2, 3;
  const Vector keep = p;
  AdamState st;
  st.m = st.v = Vector::Zero(3);
  adam_step(p, Vector::Zero(3), st);
  CHECK((p - keep).norm() == 0.0);

  // first step after bias correction: lr * g / (|g| + eps)
  AdamState s1;
  s1.m = s1.v = Vector::Zero(3);
  Vector q = keep;
  Vector g(3);
  g << 0.5, -4.0, 1e-3;
  adam_step(q, g, s1);
  for (int i = 0; i < 3; ++i)
    CHECK(keep[i] - q[i] == doctest::Approx(1e-3 * g[i] / (std::abs(g[i]) + 1e-8)).epsilon(1e-9));

  // a quadratic 0.5 ||p - c||^2 keeps decreasing
  AdamState s2;
  s2.m = s2.v = Vector::Zero(3);
  s2.lr = 0.05;
  Vector c(3);
  c << 0.3, 0.1, -0.2;
  Vector r = keep;
  double prev = 0.5 * (r - c).squaredNorm();
  for (int k = 0; k < 20; ++k) {
    adam_step(r, r - c, s2);
    const double now = 0.5 * (r - c).squaredNorm();
    REQUIRE(now < prev);
    prev = now;
  }
}

TEST_CASE("checkpoint round trip") {
  RngStream rng(4);
  Denoiser net(2, 1, {8, 8}, PrecondKind::tedm, DofSpec::parse("inf,3.5"), 0.8);
  net.net().init_uniform(rng);
  AdamState st;
  st.m = Vector::Random(static_cast<Eigen::Index>(net.net().params().size()));
  st.v = st.m.cwiseAbs();
  st.step = 17;
  const auto dir = std::filesystem::temp_directory_path() / "htd_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "a.ckpt").string();
  save_checkpoint(path, net, &st);
  const LoadedCheckpoint back = load_checkpoint(path);
  CHECK(back.net.dof() == net.dof());
  CHECK(back.net.sigma_data() == 0.8);
  CHECK(back.net.cond_dim() == 1);
  CHECK(back.net.kind() == PrecondKind::tedm);
  CHECK((back.net.net().params() - net.net().params()).norm() == 0.0);
  REQUIRE(back.state);
  CHECK(back.state->step == 17);
  CHECK((back.state->m - st.m).norm() == 0.0);

  save_checkpoint(path, net);
  CHECK_FALSE(load_checkpoint(path).state);

  {
    std::ofstream f(path, std::ios::binary);
    f << "garbage!";
  }
  CHECK_THROWS_AS(load_checkpoint(path), ConfigError);
  std::filesystem::remove_all(dir);
}
