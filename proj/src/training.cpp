#include "htd/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "htd/errors.hpp"
#include "htd/student_t.hpp"

namespace htd {
namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kBatchStream = 0xBA7C;
constexpr std::uint64_t kNoiseStream = 0x4015E;

// Mean of sum_j w_ij (D_ij - x0_ij)^2 over rows, and the matching upstream
// gradient 2 w (D - x0) / n.
double weighted_sq_error(const SampleMatrix& d_out, const SampleMatrix& x0, const SampleMatrix& w,
                         SampleMatrix& upstream) {
  const Eigen::Index n = x0.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  upstream.resize(n, x0.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < x0.cols(); ++j) {
      const double r = d_out(i, j) - x0(i, j);
      total += w(i, j) * r * r;
      upstream(i, j) = 2.0 * w(i, j) * r * inv_n;
    }
  }
  return total * inv_n;
}

}  // namespace

const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::tedm: return "tedm";
    case TrainMode::edm: return "edm";
    case TrainMode::tflow: return "tflow";
    case TrainMode::gflow: return "gflow";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "tedm") return TrainMode::tedm;
  if (s == "edm") return TrainMode::edm;
  if (s == "tflow") return TrainMode::tflow;
  if (s == "gflow") return TrainMode::gflow;
  throw ConfigError("unknown training mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(pi_std > 0.0)) throw ParameterError("pi_std must be positive");
  if (batch <= 0) throw ParameterError("batch size must be positive");
  if (budget < 0) throw ParameterError("sample budget must be non-negative");
  if (!(sigma_data > 0.0)) throw ParameterError("sigma_data must be positive");
  if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
  if (mode == TrainMode::tedm) dof.require_greater(2.0, "t-EDM training");
  if (mode == TrainMode::edm && !dof.is_gaussian())
    throw ParameterError("EDM mode uses Gaussian noise; set nu = inf or use tedm");
}

double sample_noise_level(double pi_mean, double pi_std, RngStream& rng) {
  if (!(pi_std >= 0.0)) throw ParameterError("pi_std must be non-negative");
  return std::exp(pi_mean + pi_std * rng.normal());
}

LossResult tedm_loss_given(const Denoiser& net, const SampleMatrix& x0, const SampleMatrix* cond,
                           const Vector& sigma, const SampleMatrix& noise, const TrainConfig& cfg) {
  const Eigen::Index n = x0.rows(), d = x0.cols();
  SampleMatrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = x0(i, j) + sigma[i] * noise(i, j);

  Denoiser::Workspace ws;
  SampleMatrix out;
  net.forward(x, sigma, cond, out, &ws);

  SampleMatrix w = SampleMatrix::Ones(n, d);
  if (cfg.lambda_weighting)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) w(i, j) = 1.0 / (ws.coeffs.c_out(i, j) * ws.coeffs.c_out(i, j));
  if (cfg.dsm_weighting) {
    // ((nu + d) / (nu + d1))^2 with the exact d1 = ||x - x0||^2 / sigma^2.
    const DofSpec& dof = net.dof();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!dof.is_per_dimension()) {
        if (auto nu = dof.scalar_value()) {
          const double d1 = noise.row(i).squaredNorm();
          const double f = (*nu + static_cast<double>(d)) / (*nu + d1);
          w.row(i) *= f * f;
        }
        continue;
      }
      for (Eigen::Index j = 0; j < d; ++j)
        if (auto nu = dof.at(static_cast<std::size_t>(j))) {
          const double f = (*nu + 1.0) / (*nu + noise(i, j) * noise(i, j));
          w(i, j) *= f * f;
        }
    }
  }

  LossResult res;
  SampleMatrix upstream;
  res.loss = weighted_sq_error(out, x0, w, upstream);
  res.grad = Vector::Zero(static_cast<Eigen::Index>(net.net().params().size()));
  net.backward(ws, upstream, res.grad);
  res.sigma_mean = sigma.mean();
  return res;
}

LossResult edm_loss_given(const Denoiser& net, const SampleMatrix& x0, const SampleMatrix* cond,
                          const Vector& sigma, const SampleMatrix& noise, const TrainConfig& cfg) {
  if (net.kind() != PrecondKind::edm) throw ParameterError("EDM loss needs an EDM-preconditioned network");
  const Eigen::Index n = x0.rows(), d = x0.cols();
  SampleMatrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = x0(i, j) + sigma[i] * noise(i, j);

  Denoiser::Workspace ws;
  SampleMatrix out;
  net.forward(x, sigma, cond, out, &ws);

  SampleMatrix w = SampleMatrix::Ones(n, d);
  if (cfg.lambda_weighting) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double c_out = edm_precondition_coeffs(sigma[i], net.sigma_data()).c_out;
      for (Eigen::Index j = 0; j < d; ++j) w(i, j) = 1.0 / (c_out * c_out);
    }
  }
  LossResult res;
  SampleMatrix upstream;
  res.loss = weighted_sq_error(out, x0, w, upstream);
  res.grad = Vector::Zero(static_cast<Eigen::Index>(net.net().params().size()));
  net.backward(ws, upstream, res.grad);
  res.sigma_mean = sigma.mean();
  return res;
}

LossResult tedm_loss_batch(const Denoiser& net, const SampleMatrix& x0, const SampleMatrix* cond,
                           const TrainConfig& cfg, const RngStream& rng) {
  const Eigen::Index n = x0.rows(), d = x0.cols();
  Vector sigma(n);
  SampleMatrix noise(n, d);
  if (cfg.mode == TrainMode::edm) {
    for (Eigen::Index i = 0; i < n; ++i) {
      RngStream r = rng.derive(static_cast<std::uint64_t>(i));
      sigma[i] = sample_noise_level(cfg.pi_mean, cfg.pi_std, r);
      for (Eigen::Index j = 0; j < d; ++j) noise(i, j) = r.normal();
    }
    return edm_loss_given(net, x0, cond, sigma, noise, cfg);
  }
  if (cfg.mode != TrainMode::tedm) throw ConfigError("diffusion loss needs mode tedm or edm");
  cfg.dof.require_greater(2.0, "t-EDM training");
  for (Eigen::Index i = 0; i < n; ++i) {
    RngStream r = rng.derive(static_cast<std::uint64_t>(i));
    sigma[i] = sample_noise_level(cfg.pi_mean, cfg.pi_std, r);
    student_t_noise(cfg.dof, r, noise.row(i).data(), static_cast<std::size_t>(d));
  }
  return tedm_loss_given(net, x0, cond, sigma, noise, cfg);
}

LossResult tflow_loss_given(const Denoiser& eps_net, const SampleMatrix& x1,
                            const SampleMatrix* cond, const Vector& t, const SampleMatrix& noise) {
  const Eigen::Index n = x1.rows(), d = x1.cols();
  SampleMatrix x(n, d);
  Vector sigma(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sigma[i] = 1.0 - t[i];
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = t[i] * x1(i, j) + sigma[i] * noise(i, j);
  }
  Denoiser::Workspace ws;
  SampleMatrix out;
  eps_net.forward(x, sigma, cond, out, &ws);
  LossResult res;
  SampleMatrix upstream;
  res.loss = weighted_sq_error(out, noise, SampleMatrix::Ones(n, d), upstream);
  res.grad = Vector::Zero(static_cast<Eigen::Index>(eps_net.net().params().size()));
  eps_net.backward(ws, upstream, res.grad);
  res.sigma_mean = sigma.mean();
  return res;
}

LossResult tflow_loss_batch(const Denoiser& eps_net, const SampleMatrix& x1,
                            const SampleMatrix* cond, const TrainConfig& cfg, const RngStream& rng) {
  const Eigen::Index n = x1.rows(), d = x1.cols();
  const DofSpec dof = cfg.mode == TrainMode::gflow ? DofSpec::gaussian() : cfg.dof;
  Vector t(n);
  SampleMatrix noise(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    RngStream r = rng.derive(static_cast<std::uint64_t>(i));
    t[i] = r.uniform();
    student_t_noise(dof, r, noise.row(i).data(), static_cast<std::size_t>(d));
  }
  return tflow_loss_given(eps_net, x1, cond, t, noise);
}

Denoiser make_network(const TrainConfig& cfg, int d, int cond_dim) {
  PrecondKind kind = PrecondKind::tedm;
  DofSpec dof = cfg.dof;
  switch (cfg.mode) {
    case TrainMode::tedm: kind = PrecondKind::tedm; break;
    case TrainMode::edm: kind = PrecondKind::edm; dof = DofSpec::gaussian(); break;
    case TrainMode::tflow: kind = PrecondKind::flow; break;
    case TrainMode::gflow: kind = PrecondKind::flow; dof = DofSpec::gaussian(); break;
  }
  Denoiser net(d, cond_dim, cfg.hidden, kind, dof, cfg.sigma_data);
  RngStream init(cfg.seed, kInitStream);
  net.net().init_uniform(init);
  return net;
}

TrainResult train(const TrainConfig& cfg, const SampleMatrix& data, const SampleMatrix* cond,
                  const CheckpointSink& sink,
                  const std::optional<std::pair<Denoiser, AdamState>>& resume) {
  cfg.validate();
  const Eigen::Index n_data = data.rows();
  const int d = static_cast<int>(data.cols());
  const int cond_dim = cond ? static_cast<int>(cond->cols()) : 0;
  if (cond && cond->rows() != n_data) throw ParameterError("conditioning rows do not match data rows");
  if (n_data == 0 && cfg.steps() > 0) throw ParameterError("empty training set");

  TrainResult res;
  if (resume) {
    res.net = resume->first;
    res.adam = resume->second;
  } else {
    res.net = make_network(cfg, d, cond_dim);
    res.adam.lr = cfg.lr;
  }
  const bool flow = cfg.mode == TrainMode::tflow || cfg.mode == TrainMode::gflow;
  const RngStream batch_root(cfg.seed, kBatchStream);
  const RngStream noise_root(cfg.seed, kNoiseStream);

  SampleMatrix x0(cfg.batch, d);
  SampleMatrix c0(cfg.batch, cond_dim);
  for (std::int64_t step = res.adam.step; step < cfg.steps(); ++step) {
    RngStream pick = batch_root.derive(static_cast<std::uint64_t>(step));
    for (int i = 0; i < cfg.batch; ++i) {
      const auto k = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(n_data)));
      x0.row(i) = data.row(k);
      if (cond) c0.row(i) = cond->row(k);
    }
    const RngStream noise = noise_root.derive(static_cast<std::uint64_t>(step));
    LossResult lr = flow ? tflow_loss_batch(res.net, x0, cond ? &c0 : nullptr, cfg, noise)
                         : tedm_loss_batch(res.net, x0, cond ? &c0 : nullptr, cfg, noise);
    if (!std::isfinite(lr.loss) || !lr.grad.allFinite())
      throw NumericError("non-finite loss or gradient at step " + std::to_string(step));
    adam_step(res.net.net().params(), lr.grad, res.adam);
    res.trace.push_back({step, lr.loss, lr.sigma_mean});
    if (sink && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      sink(res.net, res.adam);
  }
  return res;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "step,loss,sigma_mean\n" << std::setprecision(17);
  for (const auto& r : trace) out << r.step << ',' << r.loss << ',' << r.sigma_mean << '\n';
}

}  // namespace htd
