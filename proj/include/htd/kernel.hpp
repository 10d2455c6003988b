#pragma once

#include <functional>

#include "htd/dof.hpp"
#include "htd/rng.hpp"
#include "htd/types.hpp"

namespace htd {

// Choice of the squared cross-scales sigma_12^2, sigma_21^2 linking x_t and
// x_{t-dt}. Both are symmetric here.
enum class CrossVariance {
  ode,     // sigma_t * sigma_{t-dt}: zero posterior variance
  markov,  // sigma_{t-dt}^2: the variance-exploding Markov chain
};

struct GridParams {
  int steps = 18;
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double rho = 7.0;
};

// Perturbation kernel q(x_t | x0) = t_d(mu_t x0, sigma_t^2 I, nu).
struct ScheduleParams {
  std::function<double(double)> mu;
  std::function<double(double)> sigma;
  std::function<double(double)> mu_dot;
  std::function<double(double)> sigma_dot;
  // (t, t - dt) -> squared cross-scale
  std::function<double(double, double)> cross12_sq;
  std::function<double(double, double)> cross21_sq;
  DofSpec dof;
  GridParams grid;

  // mu_t = 1, sigma_t = t.
  static ScheduleParams edm(DofSpec dof, CrossVariance cross = CrossVariance::ode,
                            GridParams grid = {});
  void set_cross(CrossVariance cross);
};

// How the posterior dof is formed when the dof is per-dimension. For a
// scalar dof both give nu + d.
enum class PosteriorDofMode {
  per_coordinate,  // nu_i + 1, coordinates treated as independent 1-d problems
  joint,           // nu_i + d with the full-vector quadratic form
};

struct PosteriorParams {
  Vector mean;
  Vector scale_sq;  // per coordinate; constant for scalar dof
  DofSpec dof;
  double d1 = 0.0;  // ||x_t - mu_t x0||^2 / sigma_t^2
  double sigma_bar_sq = 0.0;
};

Vector perturb(const Vector& x0, double t, const ScheduleParams& sched, RngStream& rng);

// sigma_{t-dt}^2 - sigma_21^2 sigma_12^2 / sigma_t^2; throws ConfigError if negative
// beyond rounding.
double posterior_sigma_bar_sq(double t, double dt, const ScheduleParams& sched);

PosteriorParams forward_posterior(const Vector& x_t, const Vector& x0, double t, double dt,
                                  const ScheduleParams& sched,
                                  PosteriorDofMode mode = PosteriorDofMode::per_coordinate);

Vector reverse_posterior_mean_x0pred(const Vector& x_t, const Vector& d_out, double t, double dt,
                                     const ScheduleParams& sched);
Vector reverse_posterior_mean_epspred(const Vector& x_t, const Vector& eps_out, double t,
                                      double dt, const ScheduleParams& sched);

// ||x_t - mu_t D||^2 / sigma_t^2, the plug-in quadratic form used at inference.
double plugin_d1(const Vector& x_t, const Vector& d_out, double t, const ScheduleParams& sched);

// Per-coordinate (nu + d1') / (nu + d) factors relating residual and score:
// score = -(x_t - mu_t D) / (sigma_t^2 * ratio). For per-dimension dof each
// coordinate uses its own 1-d form.
Vector score_ratio(const Vector& residual, double sigma_t, const DofSpec& dof);

Vector score_from_denoiser(const Vector& x_t, const Vector& d_out, double t,
                           const ScheduleParams& sched);
// Inverts score_from_denoiser given the same plug-in residual ratio.
Vector tweedie_x0_estimate(const Vector& x_t, const Vector& score, const Vector& ratio, double t,
                           const ScheduleParams& sched);

// Probability-flow drift dx/dt in denoiser form:
// (mu'/mu) x - [f + mu'/mu] (x - mu D) with f = -sigma'/sigma.
Vector denoiser_ode_drift(const Vector& x_t, const Vector& d_out, double t,
                          const ScheduleParams& sched);
// The same drift written with the score:
// (mu'/mu) x + sigma^2 ratio [mu'/mu - sigma'/sigma] score.
Vector score_ode_step(const Vector& x_t, const Vector& score, const Vector& ratio, double t,
                      const ScheduleParams& sched);

}  // namespace htd
