#include "htd/samplers.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "htd/errors.hpp"
#include "htd/student_t.hpp"

namespace htd {
namespace {

constexpr std::uint64_t kChainStream = 0xC4A1;
constexpr double kConsistencyTol = 1e-8;

// Runs fn(begin, count) over fixed-size chunks of [0, n). Chunk boundaries do
// not depend on the thread count, so results are identical for any count.
template <class Fn>
void for_chunks(std::size_t n, std::size_t chunk, int threads, Fn fn) {
  if (chunk == 0) chunk = n ? n : 1;
  const std::size_t nchunks = (n + chunk - 1) / chunk;
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers <= 1 || nchunks <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c) fn(c * chunk, std::min(chunk, n - c * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= nchunks) return;
      try {
        fn(c * chunk, std::min(chunk, n - c * chunk));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = nchunks;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, nchunks); ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void check_grid(const GridParams& g) {
  if (g.steps < 1) throw ConfigError("sampler needs at least one step");
  if (!(g.sigma_min > 0.0) || !(g.sigma_min < g.sigma_max))
    throw ConfigError("sampler grid needs 0 < sigma_min < sigma_max");
  if (!(g.rho > 0.0)) throw ConfigError("sampler grid needs rho > 0");
}

void check_finite(const SampleMatrix& m, const char* sampler, int step, double t, std::size_t begin) {
  if (m.allFinite()) return;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!m.row(i).allFinite()) {
      std::ostringstream os;
      os << sampler << ": non-finite denoiser output at step " << step << " (t=" << t << "), chain "
         << begin + static_cast<std::size_t>(i);
      throw NumericError(os.str());
    }
  }
}

void record(Trajectory* traj, int step, std::size_t begin, const SampleMatrix& x) {
  if (traj) (*traj)[static_cast<std::size_t>(step)].middleRows(static_cast<Eigen::Index>(begin), x.rows()) = x;
}

void prepare(Trajectory* traj, int states, const SamplerConfig& cfg) {
  if (traj) traj->assign(static_cast<std::size_t>(states), SampleMatrix(static_cast<Eigen::Index>(cfg.n), cfg.d));
}

// Posterior dof used for stochastic increments: nu + d for a scalar nu; per
// coordinate nu_i + 1 or nu_i + d for per-dimension dof.
DofSpec increment_dof(const DofSpec& dof, int d, PosteriorDofMode mode) {
  if (!dof.is_per_dimension()) {
    const auto nu = dof.scalar_value();
    return nu ? DofSpec::scalar(*nu + d) : DofSpec::gaussian();
  }
  std::vector<std::optional<double>> v(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    const auto nu = dof.at(static_cast<std::size_t>(i));
    if (nu) v[static_cast<std::size_t>(i)] = *nu + (mode == PosteriorDofMode::per_coordinate ? 1.0 : d);
  }
  return DofSpec::per_dimension(std::move(v));
}

void validate(const SamplerConfig& cfg) {
  check_grid(cfg.grid);
  if (cfg.d <= 0) throw ConfigError("sample dimension must be positive");
  cfg.dof.check_dim(static_cast<std::size_t>(cfg.d));
}

}  // namespace

std::vector<double> timestep_grid(int steps, double sigma_min, double sigma_max, double rho) {
  check_grid({steps, sigma_min, sigma_max, rho});
  std::vector<double> t(static_cast<std::size_t>(steps) + 1);
  t[0] = sigma_max;
  if (steps > 1) {
    const double a = std::pow(sigma_max, 1.0 / rho);
    const double b = std::pow(sigma_min, 1.0 / rho);
    for (int i = 1; i < steps - 1; ++i)
      t[static_cast<std::size_t>(i)] = std::pow(a + (static_cast<double>(i) / (steps - 1)) * (b - a), rho);
    t[static_cast<std::size_t>(steps) - 1] = sigma_min;
  }
  t[static_cast<std::size_t>(steps)] = 0.0;
  return t;
}

const char* to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::heun: return "heun";
    case SamplerKind::ancestral: return "ancestral";
    case SamplerKind::sde: return "sde";
    case SamplerKind::tflow: return "tflow";
  }
  return "?";
}

SamplerKind parse_sampler_kind(const std::string& s) {
  if (s == "heun") return SamplerKind::heun;
  if (s == "ancestral") return SamplerKind::ancestral;
  if (s == "sde") return SamplerKind::sde;
  if (s == "tflow") return SamplerKind::tflow;
  throw ConfigError("unknown sampler '" + s + "'");
}

const char* to_string(SdePreset p) { return p == SdePreset::ode ? "ode" : "markov"; }

SdePreset parse_sde_preset(const std::string& s) {
  if (s == "ode") return SdePreset::ode;
  if (s == "markov") return SdePreset::markov;
  throw ConfigError("unknown SDE preset '" + s + "'");
}

RngStream chain_stream(std::uint64_t seed, std::size_t chain) {
  return RngStream(seed, kChainStream).derive(static_cast<std::uint64_t>(chain));
}

SampleMatrix heun_ode_sample(const ChunkDenoiseFn& denoise, const SamplerConfig& cfg, Trajectory* traj) {
  validate(cfg);
  const std::vector<double> t = timestep_grid(cfg.grid.steps, cfg.grid.sigma_min, cfg.grid.sigma_max, cfg.grid.rho);
  const int steps = cfg.grid.steps;
  SampleMatrix result(static_cast<Eigen::Index>(cfg.n), cfg.d);
  prepare(traj, steps + 1, cfg);
  for_chunks(cfg.n, cfg.chunk, cfg.threads, [&](std::size_t begin, std::size_t count) {
    const auto m = static_cast<Eigen::Index>(count);
    SampleMatrix x(m, cfg.d);
    for (Eigen::Index k = 0; k < m; ++k) {
      RngStream rng = chain_stream(cfg.seed, begin + static_cast<std::size_t>(k));
      student_t_noise(cfg.dof, rng, x.row(k).data(), static_cast<std::size_t>(cfg.d));
    }
    x *= t[0];
    record(traj, 0, begin, x);
    SampleMatrix den, den2, x_next;
    for (int i = 0; i < steps; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      const double tn = t[static_cast<std::size_t>(i) + 1];
      denoise(x, ti, begin, den);
      check_finite(den, "heun", i, ti, begin);
      const SampleMatrix di = ((x - den).array() / ti).matrix();
      x_next = x + (tn - ti) * di;
      if (tn != 0.0) {
        denoise(x_next, tn, begin, den2);
        check_finite(den2, "heun", i, tn, begin);
        const SampleMatrix dp = ((x_next - den2).array() / tn).matrix();
        x_next = x + (tn - ti) * (0.5 * di + 0.5 * dp);
      }
      x = x_next;
      record(traj, i + 1, begin, x);
    }
    result.middleRows(static_cast<Eigen::Index>(begin), m) = x;
  });
  return result;
}

SampleMatrix edm_heun_sample(const ChunkDenoiseFn& denoise, const SamplerConfig& cfg, Trajectory* traj) {
  validate(cfg);
  const GridParams& g = cfg.grid;
  // Grid written out directly.
  std::vector<double> t(static_cast<std::size_t>(g.steps) + 1, 0.0);
  t[0] = g.sigma_max;
  if (g.steps > 1) {
    const double hi = std::pow(g.sigma_max, 1.0 / g.rho), lo = std::pow(g.sigma_min, 1.0 / g.rho);
    for (int i = 1; i + 1 < g.steps; ++i)
      t[static_cast<std::size_t>(i)] = std::pow(hi + (static_cast<double>(i) / (g.steps - 1)) * (lo - hi), g.rho);
    t[static_cast<std::size_t>(g.steps) - 1] = g.sigma_min;
  }
  SampleMatrix result(static_cast<Eigen::Index>(cfg.n), cfg.d);
  prepare(traj, g.steps + 1, cfg);
  for_chunks(cfg.n, cfg.chunk, cfg.threads, [&](std::size_t begin, std::size_t count) {
    const auto m = static_cast<Eigen::Index>(count);
    SampleMatrix x(m, cfg.d);
    for (Eigen::Index k = 0; k < m; ++k) {
      RngStream rng = chain_stream(cfg.seed, begin + static_cast<std::size_t>(k));
      for (int j = 0; j < cfg.d; ++j) x(k, j) = rng.normal();
    }
    x *= t[0];
    record(traj, 0, begin, x);
    SampleMatrix den, den2;
    for (int i = 0; i < g.steps; ++i) {
      const double tc = t[static_cast<std::size_t>(i)], tn = t[static_cast<std::size_t>(i) + 1];
      denoise(x, tc, begin, den);
      check_finite(den, "edm-heun", i, tc, begin);
      const SampleMatrix d_cur = ((x - den).array() / tc).matrix();
      SampleMatrix x_euler = x + (tn - tc) * d_cur;
      if (tn == 0.0) {
        x = x_euler;
      } else {
        denoise(x_euler, tn, begin, den2);
        check_finite(den2, "edm-heun", i, tn, begin);
        const SampleMatrix d_next = ((x_euler - den2).array() / tn).matrix();
        x = x + (tn - tc) * (0.5 * d_cur + 0.5 * d_next);
      }
      record(traj, i + 1, begin, x);
    }
    result.middleRows(static_cast<Eigen::Index>(begin), m) = x;
  });
  return result;
}

SampleMatrix ancestral_sample(const ChunkDenoiseFn& denoise, const SamplerConfig& cfg, Trajectory* traj) {
  validate(cfg);
  const std::vector<double> t = timestep_grid(cfg.grid.steps, cfg.grid.sigma_min, cfg.grid.sigma_max, cfg.grid.rho);
  const ScheduleParams sched = ScheduleParams::edm(cfg.dof, cfg.ancestral_cross, cfg.grid);
  const DofSpec inc_dof = increment_dof(cfg.dof, cfg.d, cfg.posterior_dof);
  const int steps = cfg.grid.steps;
  SampleMatrix result(static_cast<Eigen::Index>(cfg.n), cfg.d);
  prepare(traj, steps + 1, cfg);
  for_chunks(cfg.n, cfg.chunk, cfg.threads, [&](std::size_t begin, std::size_t count) {
    const auto m = static_cast<Eigen::Index>(count);
    std::vector<RngStream> rngs;
    SampleMatrix x(m, cfg.d);
    for (Eigen::Index k = 0; k < m; ++k) {
      rngs.push_back(chain_stream(cfg.seed, begin + static_cast<std::size_t>(k)));
      student_t_noise(cfg.dof, rngs.back(), x.row(k).data(), static_cast<std::size_t>(cfg.d));
    }
    x *= t[0];
    record(traj, 0, begin, x);
    SampleMatrix den;
    Vector noise(cfg.d);
    for (int i = 0; i < steps; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      const double dt = ti - t[static_cast<std::size_t>(i) + 1];
      denoise(x, ti, begin, den);
      check_finite(den, "ancestral", i, ti, begin);
      const double sbar = std::sqrt(posterior_sigma_bar_sq(ti, dt, sched));
      for (Eigen::Index k = 0; k < m; ++k) {
        Vector mean = reverse_posterior_mean_x0pred(x.row(k).transpose(), den.row(k).transpose(), ti, dt, sched);
        if (sbar > 0.0) {
          student_t_noise(inc_dof, rngs[static_cast<std::size_t>(k)], noise.data(), static_cast<std::size_t>(cfg.d));
          mean += sbar * noise;
        }
        x.row(k) = mean.transpose();
      }
      record(traj, i + 1, begin, x);
    }
    result.middleRows(static_cast<Eigen::Index>(begin), m) = x;
  });
  return result;
}

SdeCoefficients sde_preset(SdePreset preset, double beta, double t, double dt, const ScheduleParams& sched) {
  if (!(dt > 0.0)) throw ConfigError("SDE step needs dt > 0");
  const double tp = t - dt;
  const double st = sched.sigma(t), sp = sched.sigma(tp);
  SdeCoefficients c{};
  c.beta = beta;
  if (preset == SdePreset::ode) {
    c.g = 0.0;
    c.cross12_sq = st * sp;
  } else {
    if (!(beta > 0.0)) throw ConfigError("stochastic preset needs beta > 0");
    // Noise variance beta g dt equal to the posterior variance of the
    // variance-exploding chain; the drift then matches ancestral sampling.
    c.cross12_sq = sp * sp;
    const double sbar = sp * sp - sp * sp * sp * sp / (st * st);
    c.g = sbar / (beta * dt);
  }
  if (!(c.cross12_sq > 0.0)) throw ConfigError("SDE preset needs sigma_{t-dt} > 0");
  c.f = ((sp * sp - c.beta * c.g * dt) / c.cross12_sq - 1.0) / dt;
  return c;
}

double sde_consistency_residual(const SdeCoefficients& c, double t, double dt, const ScheduleParams& sched) {
  const double sp = sched.sigma(t - dt);
  return (sp * sp - c.beta * c.g * dt) / c.cross12_sq - 1.0 - c.f * dt;
}

void sde_step(SampleMatrix& x, const SampleMatrix& d_out, const SdeCoefficients& c, double t, double dt,
              const ScheduleParams& sched, PosteriorDofMode mode, std::vector<RngStream>& chain_rngs) {
  const double res = sde_consistency_residual(c, t, dt, sched);
  if (!(std::abs(res) <= kConsistencyTol)) {
    std::ostringstream os;
    os << "SDE coefficients violate the consistency condition at t=" << t << " (residual " << res << ")";
    throw ConfigError(os.str());
  }
  if (c.g < 0.0 || c.beta < 0.0) throw ConfigError("SDE needs beta g >= 0");
  const double mu = sched.mu(t);
  const double rate = sched.mu_dot(t) / mu;
  const Eigen::Index m = x.rows();
  const int d = static_cast<int>(x.cols());
  const SampleMatrix drift = rate * x - (c.f + rate) * (x - mu * d_out);
  x = x - dt * drift;
  const double amp = std::sqrt(c.beta * c.g * dt);
  if (amp == 0.0) return;
  if (static_cast<Eigen::Index>(chain_rngs.size()) != m) throw ParameterError("one RNG stream per chain required");
  const DofSpec inc_dof = increment_dof(sched.dof, d, mode);
  Vector noise(d);
  for (Eigen::Index k = 0; k < m; ++k) {
    student_t_noise(inc_dof, chain_rngs[static_cast<std::size_t>(k)], noise.data(), static_cast<std::size_t>(d));
    x.row(k) += amp * noise.transpose();
  }
}

SampleMatrix sde_sample(const ChunkDenoiseFn& denoise, const SamplerConfig& cfg, Trajectory* traj) {
  validate(cfg);
  const std::vector<double> t = timestep_grid(cfg.grid.steps, cfg.grid.sigma_min, cfg.grid.sigma_max, cfg.grid.rho);
  const ScheduleParams sched = ScheduleParams::edm(cfg.dof, CrossVariance::ode, cfg.grid);
  const int steps = cfg.grid.steps;
  SampleMatrix result(static_cast<Eigen::Index>(cfg.n), cfg.d);
  prepare(traj, steps + 1, cfg);
  for_chunks(cfg.n, cfg.chunk, cfg.threads, [&](std::size_t begin, std::size_t count) {
    const auto m = static_cast<Eigen::Index>(count);
    std::vector<RngStream> rngs;
    SampleMatrix x(m, cfg.d);
    for (Eigen::Index k = 0; k < m; ++k) {
      rngs.push_back(chain_stream(cfg.seed, begin + static_cast<std::size_t>(k)));
      student_t_noise(cfg.dof, rngs.back(), x.row(k).data(), static_cast<std::size_t>(cfg.d));
    }
    x *= t[0];
    record(traj, 0, begin, x);
    SampleMatrix den;
    for (int i = 0; i < steps; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      const double tn = t[static_cast<std::size_t>(i) + 1];
      denoise(x, ti, begin, den);
      check_finite(den, "sde", i, ti, begin);
      if (tn == 0.0) {
        // Last step lands on sigma = 0 where the cross-scale vanishes; take
        // the deterministic Euler step, which returns the denoiser output.
        x = x + (tn - ti) * ((x - den).array() / ti).matrix();
      } else {
        const SdeCoefficients c = sde_preset(cfg.preset, cfg.beta, ti, ti - tn, sched);
        sde_step(x, den, c, ti, ti - tn, sched, cfg.posterior_dof, rngs);
      }
      record(traj, i + 1, begin, x);
    }
    result.middleRows(static_cast<Eigen::Index>(begin), m) = x;
  });
  return result;
}

std::vector<double> flow_time_grid(const GridParams& grid) {
  if (grid.sigma_max > 1.0) throw ConfigError("flow grid needs sigma_max <= 1");
  std::vector<double> s = timestep_grid(grid.steps, grid.sigma_min, grid.sigma_max, grid.rho);
  for (double& v : s) v = 1.0 - v;
  return s;
}

SampleMatrix tflow_heun_sample(const ChunkDenoiseFn& eps, const SamplerConfig& cfg, Trajectory* traj) {
  validate(cfg);
  const std::vector<double> t = flow_time_grid(cfg.grid);
  const int steps = cfg.grid.steps;
  SampleMatrix result(static_cast<Eigen::Index>(cfg.n), cfg.d);
  prepare(traj, steps + 1, cfg);
  for_chunks(cfg.n, cfg.chunk, cfg.threads, [&](std::size_t begin, std::size_t count) {
    const auto m = static_cast<Eigen::Index>(count);
    SampleMatrix x(m, cfg.d);
    for (Eigen::Index k = 0; k < m; ++k) {
      RngStream rng = chain_stream(cfg.seed, begin + static_cast<std::size_t>(k));
      student_t_noise(cfg.dof, rng, x.row(k).data(), static_cast<std::size_t>(cfg.d));
    }
    record(traj, 0, begin, x);
    SampleMatrix e, e2, x_next;
    auto velocity = [&](const SampleMatrix& state, double time, SampleMatrix& buf, int step) {
      eps(state, 1.0 - time, begin, buf);
      check_finite(buf, "tflow", step, time, begin);
      return SampleMatrix(((state - buf).array() / time).matrix());
    };
    for (int i = 0; i < steps; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      const double tn = t[static_cast<std::size_t>(i) + 1];
      if (ti <= 0.0) {
        // (x - eps) / t is 0/0 at flow time 0: take a first-order step with
        // the velocity read at the end of the interval instead.
        x = x + (tn - ti) * velocity(x, tn, e, i);
      } else {
        const SampleMatrix b = velocity(x, ti, e, i);
        x_next = x + (tn - ti) * b;
        if (tn < 1.0) {
          const SampleMatrix bp = velocity(x_next, tn, e2, i);
          x_next = x + (tn - ti) * (0.5 * b + 0.5 * bp);
        }
        x = x_next;
      }
      record(traj, i + 1, begin, x);
    }
    result.middleRows(static_cast<Eigen::Index>(begin), m) = x;
  });
  return result;
}

SampleMatrix run_sampler(const ChunkDenoiseFn& fn, const SamplerConfig& cfg) {
  switch (cfg.kind) {
    case SamplerKind::heun: return heun_ode_sample(fn, cfg);
    case SamplerKind::ancestral: return ancestral_sample(fn, cfg);
    case SamplerKind::sde: return sde_sample(fn, cfg);
    case SamplerKind::tflow: return tflow_heun_sample(fn, cfg);
  }
  throw ConfigError("unknown sampler");
}

}  // namespace htd
