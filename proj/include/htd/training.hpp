#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "htd/denoiser.hpp"
#include "htd/rng.hpp"

namespace htd {

enum class TrainMode { tedm, edm, tflow, gflow };

const char* to_string(TrainMode m);
TrainMode parse_train_mode(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::tedm;
  DofSpec dof;
  double pi_mean = -1.2;
  double pi_std = 1.2;
  int batch = 128;
  std::int64_t budget = 3'000'000;  // total training samples
  std::uint64_t seed = 0;
  double sigma_data = 1.0;
  std::vector<int> hidden = {64, 64};
  double lr = 1e-3;
  bool lambda_weighting = true;  // lambda = 1/c_out^2
  bool dsm_weighting = false;    // extra ((nu+d)/(nu+d1))^2 factor
  std::int64_t checkpoint_every = 0;  // steps; 0 disables

  std::int64_t steps() const { return batch > 0 ? budget / batch : 0; }
  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  Vector grad;
  double sigma_mean = 0.0;
};

// sigma = exp(pi_mean + pi_std z)
double sample_noise_level(double pi_mean, double pi_std, RngStream& rng);

// Diffusion loss on a batch: each row i draws (sigma, noise) from
// rng.derive(i). Mode edm runs the separate Gaussian path.
LossResult tedm_loss_batch(const Denoiser& net, const SampleMatrix& x0, const SampleMatrix* cond,
                           const TrainConfig& cfg, const RngStream& rng);

// Same loss with explicit sigma (n) and unit-scale noise (n x d), x = x0 + sigma * noise.
LossResult tedm_loss_given(const Denoiser& net, const SampleMatrix& x0, const SampleMatrix* cond,
                           const Vector& sigma, const SampleMatrix& noise, const TrainConfig& cfg);
LossResult edm_loss_given(const Denoiser& net, const SampleMatrix& x0, const SampleMatrix* cond,
                          const Vector& sigma, const SampleMatrix& noise, const TrainConfig& cfg);

// Flow-matching loss: t ~ U(0,1), x_t = t x1 + (1-t) n, target n, network
// evaluated at sigma = 1 - t.
LossResult tflow_loss_batch(const Denoiser& eps_net, const SampleMatrix& x1,
                            const SampleMatrix* cond, const TrainConfig& cfg, const RngStream& rng);
LossResult tflow_loss_given(const Denoiser& eps_net, const SampleMatrix& x1,
                            const SampleMatrix* cond, const Vector& t, const SampleMatrix& noise);

struct TraceRow {
  std::int64_t step;
  double loss;
  double sigma_mean;
};

struct TrainResult {
  Denoiser net;
  AdamState adam;
  std::vector<TraceRow> trace;
};

using CheckpointSink = std::function<void(const Denoiser&, const AdamState&)>;

// Fresh network for the config (weights from the seed).
Denoiser make_network(const TrainConfig& cfg, int d, int cond_dim);

// Runs cfg.steps() optimiser steps. With `resume`, continues from the stored
// weights and optimiser state; the remaining trace is identical to an
// uninterrupted run. The sink receives periodic checkpoints.
TrainResult train(const TrainConfig& cfg, const SampleMatrix& data, const SampleMatrix* cond,
                  const CheckpointSink& sink = {},
                  const std::optional<std::pair<Denoiser, AdamState>>& resume = std::nullopt);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace htd
