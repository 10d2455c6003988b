#include "htd/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "htd/errors.hpp"
#include "htd/samplers.hpp"
#include "htd/student_t.hpp"

namespace htd {
namespace {

constexpr std::uint64_t kProbeStream = 0x11CE;

double fd_step(const Vector& x) { return 1e-4 * (1.0 + x.norm()); }

void check_t(double t) {
  if (!(t > 0.0)) throw ParameterError("divergence needs t > 0");
}

SampleMatrix as_row(const Vector& x) {
  SampleMatrix m(1, x.size());
  m.row(0) = x.transpose();
  return m;
}

}  // namespace

DivergenceEstimator parse_estimator(const std::string& s) {
  if (s == "hutchinson") return DivergenceEstimator::hutchinson;
  if (s == "taylor") return DivergenceEstimator::taylor;
  throw ConfigError("unknown divergence estimator '" + s + "'");
}

void LikelihoodConfig::validate() const {
  if (n_probes < 1) throw ConfigError("n_probes must be at least 1");
  if (!(probe_sigma > 0.0)) throw ConfigError("probe_sigma must be positive");
  if (grid.steps < 1 || !(grid.sigma_min > 0.0) || !(grid.sigma_min < grid.sigma_max))
    throw ConfigError("likelihood grid needs steps >= 1 and 0 < sigma_min < sigma_max");
}

double divergence_hutchinson(const DenoiseFn& denoise, const Vector& x, double t, int n_probes,
                             RngStream& rng) {
  check_t(t);
  if (n_probes < 1) throw ParameterError("n_probes must be at least 1");
  const Eigen::Index d = x.size();
  const double h = fd_step(x);
  Matrix probes(n_probes, d);
  for (int k = 0; k < n_probes; ++k)
    for (Eigen::Index j = 0; j < d; ++j) probes(k, j) = (rng.next_u64() >> 63) ? 1.0 : -1.0;
  SampleMatrix pts(2 * n_probes, d), out;
  for (int k = 0; k < n_probes; ++k) {
    pts.row(2 * k) = x.transpose() + h * probes.row(k);
    pts.row(2 * k + 1) = x.transpose() - h * probes.row(k);
  }
  denoise(pts, t, out);
  double acc = 0.0;
  for (int k = 0; k < n_probes; ++k)
    acc += probes.row(k).dot(out.row(2 * k) - out.row(2 * k + 1)) / (2.0 * h);
  return (static_cast<double>(d) - acc / n_probes) / t;
}

double divergence_taylor(const DenoiseFn& denoise, const Vector& x, double t, double probe_sigma,
                         int n_probes, RngStream& rng) {
  check_t(t);
  if (n_probes < 1) throw ParameterError("n_probes must be at least 1");
  if (!(probe_sigma > 0.0)) throw ParameterError("probe_sigma must be positive");
  const Eigen::Index d = x.size();
  Matrix probes(n_probes, d);
  for (int k = 0; k < n_probes; ++k)
    for (Eigen::Index j = 0; j < d; ++j) probes(k, j) = probe_sigma * rng.normal();
  SampleMatrix pts(2 * n_probes, d), out;
  for (int k = 0; k < n_probes; ++k) {
    pts.row(2 * k) = x.transpose() + probes.row(k);
    pts.row(2 * k + 1) = x.transpose() - probes.row(k);
  }
  denoise(pts, t, out);
  double acc = 0.0;
  for (int k = 0; k < n_probes; ++k) acc += 0.5 * probes.row(k).dot(out.row(2 * k) - out.row(2 * k + 1));
  return (static_cast<double>(d) - acc / (n_probes * probe_sigma * probe_sigma)) / t;
}

double divergence_dense(const DenoiseFn& denoise, const Vector& x, double t) {
  check_t(t);
  const Eigen::Index d = x.size();
  const double h = fd_step(x);
  SampleMatrix pts(2 * d, d), out;
  for (Eigen::Index j = 0; j < d; ++j) {
    pts.row(2 * j) = x.transpose();
    pts.row(2 * j + 1) = x.transpose();
    pts(2 * j, j) += h;
    pts(2 * j + 1, j) -= h;
  }
  denoise(pts, t, out);
  double tr = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) tr += (out(2 * j, j) - out(2 * j + 1, j)) / (2.0 * h);
  return (static_cast<double>(d) - tr) / t;
}

LikelihoodResult log_likelihood(const DenoiseFn& denoise, const Vector& x0, const LikelihoodConfig& cfg,
                                std::uint64_t sample_index) {
  cfg.validate();
  cfg.prior_dof.check_dim(static_cast<std::size_t>(x0.size()));
  RngStream rng = RngStream(cfg.seed, kProbeStream).derive(sample_index);
  // Forward in noise level: sigma_min -> sigma_max over the sampler grid
  // (without its trailing zero). x0 stands in for the state at sigma_min.
  std::vector<double> t = timestep_grid(cfg.grid.steps, cfg.grid.sigma_min, cfg.grid.sigma_max, cfg.grid.rho);
  t.pop_back();
  std::reverse(t.begin(), t.end());

  auto drift = [&](const Vector& x, double time, Vector& f) {
    SampleMatrix out;
    denoise(as_row(x), time, out);
    if (!out.allFinite()) throw NumericError("likelihood: non-finite denoiser output at t=" + std::to_string(time));
    f = (x - out.row(0).transpose()) / time;
  };
  auto div = [&](const Vector& x, double time) {
    return cfg.estimator == DivergenceEstimator::hutchinson
               ? divergence_hutchinson(denoise, x, time, cfg.n_probes, rng)
               : divergence_taylor(denoise, x, time, cfg.probe_sigma, cfg.n_probes, rng);
  };

  Vector x = x0, f0, f1;
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double ta = t[i], tb = t[i + 1], h = tb - ta;
    drift(x, ta, f0);
    const double da = div(x, ta);
    const Vector xe = x + h * f0;
    drift(xe, tb, f1);
    const double db = div(xe, tb);
    x += 0.5 * h * (f0 + f1);
    integral += 0.5 * h * (da + db);
  }
  StudentTParams prior{Vector::Zero(x0.size()), cfg.grid.sigma_max, cfg.prior_dof};
  const double lp = cfg.prior_dof.is_per_dimension() ? product_student_t_log_density(x, prior)
                                                      : student_t_log_density(x, prior);
  return {lp + integral, lp, integral, x};
}

}  // namespace htd
