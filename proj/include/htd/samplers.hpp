#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "htd/denoiser.hpp"
#include "htd/kernel.hpp"

namespace htd {

// t_i = (smax^(1/rho) + i/(N-1) (smin^(1/rho) - smax^(1/rho)))^rho for
// i < N, plus t_N = 0. N = 1 gives {smax, 0}.
std::vector<double> timestep_grid(int steps, double sigma_min, double sigma_max, double rho);

enum class SamplerKind { heun, ancestral, sde, tflow };
const char* to_string(SamplerKind k);
SamplerKind parse_sampler_kind(const std::string& s);

// Shipped (f, g, beta) choices for the stochastic sampler.
enum class SdePreset {
  ode,     // g = 0, sigma_12^2 = sigma_t sigma_{t-dt}
  // sigma_12^2 = sigma_{t-dt}^2 and beta g dt equal to the Markov-chain
  // posterior variance; g -> 2 sigma sigma' / beta as dt -> 0.
  markov,
};
const char* to_string(SdePreset p);
SdePreset parse_sde_preset(const std::string& s);

struct SamplerConfig {
  SamplerKind kind = SamplerKind::heun;
  GridParams grid;
  DofSpec dof;
  SdePreset preset = SdePreset::markov;
  double beta = 1.0;
  CrossVariance ancestral_cross = CrossVariance::markov;
  PosteriorDofMode posterior_dof = PosteriorDofMode::per_coordinate;
  std::uint64_t seed = 0;
  std::size_t n = 1;
  int d = 1;
  int threads = 1;
  std::size_t chunk = 8192;  // chains per chunk; results do not depend on threads
};

// Per-step states x_0 .. x_N (each n x d) when requested.
using Trajectory = std::vector<SampleMatrix>;

// Per-chain stream used for the initial draw and any later noise.
RngStream chain_stream(std::uint64_t seed, std::size_t chain);

// Probability-flow ODE with mu_t = 1, sigma_t = t, Heun's method.
SampleMatrix heun_ode_sample(const ChunkDenoiseFn& denoise, const SamplerConfig& cfg,
                             Trajectory* traj = nullptr);

// Gaussian EDM Heun sampler; independent implementation used as the
// reference for the nu = infinity limit of heun_ode_sample.
SampleMatrix edm_heun_sample(const ChunkDenoiseFn& denoise, const SamplerConfig& cfg,
                             Trajectory* traj = nullptr);

// Ancestral sampling through the reverse posterior.
SampleMatrix ancestral_sample(const ChunkDenoiseFn& denoise, const SamplerConfig& cfg,
                              Trajectory* traj = nullptr);

struct SdeCoefficients {
  double f;
  double g;
  double beta;
  double cross12_sq;
};

// Coefficients for the step t -> t - dt. f is solved from the discrete
// consistency condition (sigma_{t-dt}^2 - beta g dt)/sigma_12^2 - 1 = f dt.
SdeCoefficients sde_preset(SdePreset preset, double beta, double t, double dt,
                           const ScheduleParams& sched);
// Residual of the consistency condition.
double sde_consistency_residual(const SdeCoefficients& c, double t, double dt,
                                const ScheduleParams& sched);

// Euler-Maruyama step from t to t - dt on every row of x:
// x - dt [mu'/mu x - (f + mu'/mu)(x - mu D)] + sqrt(beta g dt) z / sqrt(kappa),
// kappa at the posterior dof. Throws ConfigError when the consistency
// residual exceeds 1e-8.
void sde_step(SampleMatrix& x, const SampleMatrix& d_out, const SdeCoefficients& c, double t,
              double dt, const ScheduleParams& sched, PosteriorDofMode mode,
              std::vector<RngStream>& chain_rngs);

SampleMatrix sde_sample(const ChunkDenoiseFn& denoise, const SamplerConfig& cfg,
                        Trajectory* traj = nullptr);

// Flow sampler: x at flow time 0 ~ t_d(0, I, nu), integrate
// dx/dt = (x - eps(x, 1 - t)) / t to t = 1 with Heun. Nodes t_i = 1 - sigma_i.
std::vector<double> flow_time_grid(const GridParams& grid);
SampleMatrix tflow_heun_sample(const ChunkDenoiseFn& eps, const SamplerConfig& cfg,
                               Trajectory* traj = nullptr);

// Dispatch on cfg.kind.
SampleMatrix run_sampler(const ChunkDenoiseFn& fn, const SamplerConfig& cfg);

}  // namespace htd
