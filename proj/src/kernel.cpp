#include "htd/kernel.hpp"

#include <cmath>

#include "htd/errors.hpp"
#include "htd/student_t.hpp"

namespace htd {

ScheduleParams ScheduleParams::edm(DofSpec dof, CrossVariance cross, GridParams grid) {
  ScheduleParams s;
  s.mu = [](double) { return 1.0; };
  s.sigma = [](double t) { return t; };
  s.mu_dot = [](double) { return 0.0; };
  s.sigma_dot = [](double) { return 1.0; };
  s.dof = std::move(dof);
  s.grid = grid;
  s.set_cross(cross);
  return s;
}

void ScheduleParams::set_cross(CrossVariance cross) {
  auto sig = sigma;
  if (cross == CrossVariance::ode) {
    cross12_sq = [sig](double t, double tp) { return sig(t) * sig(tp); };
  } else {
    cross12_sq = [sig](double, double tp) { return sig(tp) * sig(tp); };
  }
  cross21_sq = cross12_sq;
}

Vector perturb(const Vector& x0, double t, const ScheduleParams& sched, RngStream& rng) {
  const double mu = sched.mu(t);
  const double sigma = sched.sigma(t);
  const Vector n = student_t_noise(static_cast<std::size_t>(x0.size()), sched.dof, rng);
  if (sigma == 0.0) return mu * x0;
  return mu * x0 + sigma * n;
}

double posterior_sigma_bar_sq(double t, double dt, const ScheduleParams& sched) {
  const double tp = t - dt;
  const double st = sched.sigma(t);
  const double sp = sched.sigma(tp);
  const double v = sp * sp - sched.cross21_sq(t, tp) * sched.cross12_sq(t, tp) / (st * st);
  // Rounding noise around an exact zero (the ode cross-scale) snaps to 0.
  if (std::abs(v) <= 1e-12 * sp * sp) return 0.0;
  if (v < 0.0) {
    throw ConfigError("schedule gives a negative posterior variance at t=" + std::to_string(t));
  }
  return v;
}

PosteriorParams forward_posterior(const Vector& x_t, const Vector& x0, double t, double dt,
                                  const ScheduleParams& sched, PosteriorDofMode mode) {
  const double st = sched.sigma(t);
  if (!(st > 0.0)) throw ParameterError("forward posterior needs sigma_t > 0");
  const auto d = static_cast<std::size_t>(x0.size());
  sched.dof.check_dim(d);
  const double tp = t - dt;
  const Vector r = x_t - sched.mu(t) * x0;
  const double a = sched.cross21_sq(t, tp) / (st * st);

  PosteriorParams post;
  post.mean = sched.mu(tp) * x0 + a * r;
  post.sigma_bar_sq = posterior_sigma_bar_sq(t, dt, sched);
  post.d1 = r.squaredNorm() / (st * st);
  post.scale_sq.resize(x0.size());
  const double dd = static_cast<double>(d);

  if (!sched.dof.is_per_dimension()) {
    const auto nu = sched.dof.scalar_value();
    const double ratio = nu ? (*nu + post.d1) / (*nu + dd) : 1.0;
    post.scale_sq.setConstant(ratio * post.sigma_bar_sq);
    post.dof = nu ? DofSpec::scalar(*nu + dd) : DofSpec::gaussian();
    return post;
  }

  std::vector<std::optional<double>> dofs(d);
  for (std::size_t i = 0; i < d; ++i) {
    const auto nu = sched.dof.at(i);
    const auto ii = static_cast<Eigen::Index>(i);
    if (!nu) {
      post.scale_sq[ii] = post.sigma_bar_sq;
      continue;
    }
    if (mode == PosteriorDofMode::per_coordinate) {
      const double d1i = r[ii] * r[ii] / (st * st);
      post.scale_sq[ii] = (*nu + d1i) / (*nu + 1.0) * post.sigma_bar_sq;
      dofs[i] = *nu + 1.0;
    } else {
      post.scale_sq[ii] = (*nu + post.d1) / (*nu + dd) * post.sigma_bar_sq;
      dofs[i] = *nu + dd;
    }
  }
  post.dof = DofSpec::per_dimension(std::move(dofs));
  return post;
}

Vector reverse_posterior_mean_x0pred(const Vector& x_t, const Vector& d_out, double t, double dt,
                                     const ScheduleParams& sched) {
  const double tp = t - dt;
  const double st = sched.sigma(t);
  const double a = sched.cross21_sq(t, tp) / (st * st);
  return a * x_t + (sched.mu(tp) - a * sched.mu(t)) * d_out;
}

Vector reverse_posterior_mean_epspred(const Vector& x_t, const Vector& eps_out, double t,
                                      double dt, const ScheduleParams& sched) {
  const double mu = sched.mu(t);
  if (mu == 0.0) throw ParameterError("epsilon parameterization is singular at mu_t = 0");
  const double tp = t - dt;
  const double st = sched.sigma(t);
  const double a = sched.cross21_sq(t, tp) / (st * st);
  const double mp = sched.mu(tp);
  return (mp / mu) * x_t - (st / mu) * (mp - mu * a) * eps_out;
}

double plugin_d1(const Vector& x_t, const Vector& d_out, double t, const ScheduleParams& sched) {
  const double st = sched.sigma(t);
  return (x_t - sched.mu(t) * d_out).squaredNorm() / (st * st);
}

Vector score_ratio(const Vector& residual, double sigma_t, const DofSpec& dof) {
  const auto d = static_cast<std::size_t>(residual.size());
  Vector ratio = Vector::Ones(residual.size());
  if (!dof.is_per_dimension()) {
    if (auto nu = dof.scalar_value()) {
      const double d1 = residual.squaredNorm() / (sigma_t * sigma_t);
      ratio.setConstant((*nu + d1) / (*nu + static_cast<double>(d)));
    }
    return ratio;
  }
  dof.check_dim(d);
  for (std::size_t i = 0; i < d; ++i) {
    if (auto nu = dof.at(i)) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double d1 = residual[ii] * residual[ii] / (sigma_t * sigma_t);
      ratio[ii] = (*nu + d1) / (*nu + 1.0);
    }
  }
  return ratio;
}

Vector score_from_denoiser(const Vector& x_t, const Vector& d_out, double t,
                           const ScheduleParams& sched) {
  const double st = sched.sigma(t);
  if (!(st > 0.0)) throw ParameterError("score needs sigma_t > 0");
  const Vector r = x_t - sched.mu(t) * d_out;
  const Vector ratio = score_ratio(r, st, sched.dof);
  return -(r.array() / (st * st * ratio.array())).matrix();
}

Vector tweedie_x0_estimate(const Vector& x_t, const Vector& score, const Vector& ratio, double t,
                           const ScheduleParams& sched) {
  const double mu = sched.mu(t);
  if (mu == 0.0) throw ParameterError("Tweedie estimate is singular at mu_t = 0");
  const double st = sched.sigma(t);
  return ((x_t.array() + st * st * ratio.array() * score.array()) / mu).matrix();
}

Vector denoiser_ode_drift(const Vector& x_t, const Vector& d_out, double t,
                          const ScheduleParams& sched) {
  const double mu = sched.mu(t);
  const double rate = sched.mu_dot(t) / mu;
  const double f = -sched.sigma_dot(t) / sched.sigma(t);
  return rate * x_t - (f + rate) * (x_t - mu * d_out);
}

Vector score_ode_step(const Vector& x_t, const Vector& score, const Vector& ratio, double t,
                      const ScheduleParams& sched) {
  const double rate = sched.mu_dot(t) / sched.mu(t);
  const double st = sched.sigma(t);
  const double c = st * st * (rate - sched.sigma_dot(t) / st);
  return rate * x_t + (c * ratio.array() * score.array()).matrix();
}

}  // namespace htd
