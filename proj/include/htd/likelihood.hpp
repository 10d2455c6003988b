#pragma once

#include <cstdint>

#include "htd/denoiser.hpp"
#include "htd/kernel.hpp"
#include "htd/rng.hpp"

namespace htd {

enum class DivergenceEstimator { hutchinson, taylor };
DivergenceEstimator parse_estimator(const std::string& s);

struct LikelihoodConfig {
  DivergenceEstimator estimator = DivergenceEstimator::hutchinson;
  int n_probes = 16;
  double probe_sigma = 1e-2;  // Taylor perturbation scale
  GridParams grid;            // solver grid, integrated from sigma_min up to sigma_max
  DofSpec prior_dof;
  std::uint64_t seed = 0;

  void validate() const;
};

// Divergence of f = (x - D(x, t)) / t at one point:
// (1/t) [d - E eps^T J_D eps] with Rademacher probes and central-difference
// Jacobian-vector products, step h = 1e-4 (1 + ||x||).
double divergence_hutchinson(const DenoiseFn& denoise, const Vector& x, double t, int n_probes,
                             RngStream& rng);

// (1/t) [d - E eps^T D(x + eps) / sigma^2], eps ~ N(0, sigma^2 I). Probes are
// drawn in antithetic pairs; the pair average eps^T (D(x+eps) - D(x-eps)) / 2
// has the same expectation and lower variance.
double divergence_taylor(const DenoiseFn& denoise, const Vector& x, double t, double probe_sigma,
                         int n_probes, RngStream& rng);

// Exact divergence from the full central-difference Jacobian.
double divergence_dense(const DenoiseFn& denoise, const Vector& x, double t);

struct LikelihoodResult {
  double log_likelihood;
  double prior_term;
  double divergence_integral;
  Vector x_T;
};

// log p(x0) = log p(x_T) + int_{sigma_min}^{sigma_max} div f dt, with the ODE
// integrated forward by Heun on the (reversed) sampler grid and the prior
// t_d(0, sigma_max^2 I, nu).
LikelihoodResult log_likelihood(const DenoiseFn& denoise, const Vector& x0,
                                const LikelihoodConfig& cfg, std::uint64_t sample_index = 0);

}  // namespace htd
