#pragma once

#include <functional>
#include <optional>
#include <string>

#include "htd/dof.hpp"
#include "htd/mlp.hpp"
#include "htd/types.hpp"

namespace htd {

struct PrecondCoeffs {
  double c_skip;
  double c_out;
  double c_in;
  double c_noise;
};

// Student-t preconditioning at kernel scale sigma. With s = nu/(nu-2) sigma^2
// (sigma^2 when nu is infinite):
//   c_in = 1/sqrt(s + sd^2), c_skip = sd^2/(s + sd^2),
//   c_out = sqrt(nu/(nu-2)) sigma sd / sqrt(s + sd^2), c_noise = log(sigma)/4.
PrecondCoeffs precondition_coeffs(double sigma, std::optional<double> nu, double sigma_data);

// Plain Gaussian EDM coefficients, written out separately so the Gaussian
// baseline does not share code with the Student-t path.
PrecondCoeffs edm_precondition_coeffs(double sigma, double sigma_data);

// s = nu/(nu-2) sigma^2; the marginal variance of the added noise.
double noise_variance(double sigma, std::optional<double> nu);

enum class PrecondKind {
  tedm,  // Student-t coefficients, per-coordinate when the dof is per-dimension
  edm,   // Gaussian EDM coefficients
  flow,  // c_skip = 0, c_out = 1, c_in = 1, c_noise = sigma (eps-prediction)
};

const char* to_string(PrecondKind k);
PrecondKind parse_precond_kind(const std::string& s);

// Per-row, per-coordinate coefficients for a batch.
struct BatchCoeffs {
  SampleMatrix c_skip;  // n x d
  SampleMatrix c_out;
  SampleMatrix c_in;
  Vector c_noise;  // n
};

// MLP plus preconditioning: D(x, sigma) = c_skip x + c_out F(c_in x, c_noise, cond).
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(int d, int cond_dim, std::vector<int> hidden, PrecondKind kind, DofSpec dof,
           double sigma_data);

  int dim() const { return d_; }
  int cond_dim() const { return cond_dim_; }
  PrecondKind kind() const { return kind_; }
  const DofSpec& dof() const { return dof_; }
  double sigma_data() const { return sigma_data_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  BatchCoeffs coeffs(const Vector& sigma) const;

  struct Workspace {
    BatchCoeffs coeffs;
    Matrix input;
    Matrix output;
    Mlp::Cache cache;
  };

  // x: n x d, sigma: n, cond: n x cond_dim (nullptr when cond_dim == 0).
  void forward(const SampleMatrix& x, const Vector& sigma, const SampleMatrix* cond,
               SampleMatrix& out, Workspace* ws = nullptr) const;
  // Same sigma for every row.
  void forward(const SampleMatrix& x, double sigma, const SampleMatrix* cond,
               SampleMatrix& out) const;
  // Adds dL/dparams given upstream = dL/dD (n x d) and the forward workspace.
  void backward(const Workspace& ws, const SampleMatrix& upstream, Vector& grad) const;

 private:
  int d_ = 0;
  int cond_dim_ = 0;
  PrecondKind kind_ = PrecondKind::tedm;
  DofSpec dof_;
  double sigma_data_ = 1.0;
  Mlp net_;
};

// Batched denoiser (or eps-network) call used by samplers: writes D(x, sigma)
// for every row of x. Must be safe to call concurrently.
using DenoiseFn = std::function<void(const SampleMatrix& x, double sigma, SampleMatrix& out)>;

// Binds a network; `cond` rows are matched to x rows by `row_offset`, so
// samplers can hand out chunks.
using ChunkDenoiseFn =
    std::function<void(const SampleMatrix& x, double sigma, std::size_t row_offset, SampleMatrix& out)>;
ChunkDenoiseFn bind_denoiser(const Denoiser& net, const SampleMatrix* cond = nullptr);
ChunkDenoiseFn unconditional(DenoiseFn fn);

// Checkpoint I/O. Header: magic, version, kind, d, cond_dim, hidden sizes,
// DofSpec, sigma_data; then the parameters as little-endian float64 in
// layer order; then an optional optimiser state block.
void save_checkpoint(const std::string& path, const Denoiser& net, const AdamState* state = nullptr);
struct LoadedCheckpoint {
  Denoiser net;
  std::optional<AdamState> state;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace htd
