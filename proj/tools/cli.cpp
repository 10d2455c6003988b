#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "htd/datasets.hpp"
#include "htd/errors.hpp"
#include "htd/io.hpp"
#include "htd/likelihood.hpp"
#include "htd/metrics.hpp"
#include "htd/samplers.hpp"
#include "htd/schedule_design.hpp"
#include "htd/training.hpp"
#include "svg.hpp"

#ifndef HTD_GIT_REV
#define HTD_GIT_REV "unknown"
#endif

namespace htd::cli {
namespace {

using json = nlohmann::json;
constexpr const char* kVersion = "0.1.0";

std::uint64_t default_seed() {
  const char* env = std::getenv("HTD_SEED");
  if (!env || !*env) return 0;
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(env, &pos);
    if (pos != std::string(env).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(std::string("HTD_SEED is not an unsigned integer: ") + env);
  }
}

int default_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// Everything a run writes, for the manifest.
struct Run {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  json seeds = json::object();
  json inputs = json::array();
  json outputs = json::array();
  json extra = json::object();
};

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stoi(item));
    } catch (const std::logic_error&) {
      throw ConfigError("bad integer list '" + s + "'");
    }
  }
  if (v.empty()) throw ConfigError("empty integer list");
  return v;
}

// Applies key=value pairs from the config file to options the command line
// left unset: flags > file > defaults.
void apply_config_file(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  for (const auto& [key, value] : read_key_values(path)) {
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt) throw ConfigError(path + ": unknown key '" + key + "' for " + sub->get_name());
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

json snapshot(const CLI::App* sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

void write_manifest(const std::string& path, const Run& run, double seconds, int threads) {
  json m;
  m["tool"] = "htdiff";
  m["version"] = kVersion;
  m["git"] = HTD_GIT_REV;
  m["command"] = run.command;
  m["argv"] = run.argv;
  m["config"] = run.config;
  m["seeds"] = run.seeds;
  m["inputs"] = run.inputs;
  m["outputs"] = run.outputs;
  m["threads"] = threads;
  m["wall_clock_seconds"] = seconds;
  for (const auto& [k, v] : run.extra.items()) m[k] = v;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << m.dump(2) << "\n";
}

// ---- gen-data ----

struct GenOpts {
  std::string dist = "funnel";
  std::size_t n = 100000;
  std::uint64_t seed = 0;
  std::string out;
  std::string funnel_convention = "std";
  std::string nu = "3";
  int dim = 2;
  double scale = 1.0;
};

void cmd_gen_data(const GenOpts& o, Run& run) {
  RngStream rng(o.seed, 0xDA7A);
  SampleMatrix x;
  std::vector<std::string> header;
  if (o.dist == "funnel") {
    x = neals_funnel(o.n, rng, parse_funnel_convention(o.funnel_convention));
    header = {"x1", "x2"};
  } else if (o.dist == "tmix") {
    if (o.dim < 1) throw ConfigError("--dim must be positive");
    DofSpec dof = DofSpec::parse(o.nu);
    Vector a = Vector::Zero(o.dim), b = Vector::Zero(o.dim);
    a[0] = -2.0;
    b[0] = 2.0;
    x = student_t_mixture(o.n, {a, b}, o.scale, dof, rng);
  } else {
    throw ConfigError("unknown --dist '" + o.dist + "' (funnel, tmix)");
  }
  write_matrix(o.out, x, header);
  run.seeds["data"] = o.seed;
  run.outputs.push_back(o.out);
}

// ---- train ----

struct TrainOpts {
  std::string mode = "tedm";
  std::string nu;  // empty: inf for the Gaussian modes, 4 otherwise
  double pi_mean = -1.2, pi_std = 1.2;
  int batch = 128;
  std::int64_t budget = 3'000'000;
  std::uint64_t seed = 0;
  std::string data, out, trace, normalizer = "none", hidden = "64,64", resume;
  double lr = 1e-3, sigma_data = 1.0;
  bool no_lambda = false, dsm = false, svg = false;
  std::int64_t checkpoint_every = 0;
  int cond_dim = 0;
};

void cmd_train(const TrainOpts& o, Run& run) {
  TrainConfig cfg;
  cfg.mode = parse_train_mode(o.mode);
  const bool gaussian = cfg.mode == TrainMode::edm || cfg.mode == TrainMode::gflow;
  cfg.dof = DofSpec::parse(o.nu.empty() ? (gaussian ? "inf" : "4") : o.nu);
  cfg.pi_mean = o.pi_mean;
  cfg.pi_std = o.pi_std;
  cfg.batch = o.batch;
  cfg.budget = o.budget;
  cfg.seed = o.seed;
  cfg.sigma_data = o.sigma_data;
  cfg.hidden = parse_int_list(o.hidden);
  cfg.lr = o.lr;
  cfg.lambda_weighting = !o.no_lambda;
  cfg.dsm_weighting = o.dsm;
  cfg.checkpoint_every = o.checkpoint_every;
  cfg.validate();

  SampleMatrix all = read_matrix(o.data);
  run.inputs.push_back(o.data);
  if (o.cond_dim < 0 || o.cond_dim >= all.cols()) throw ConfigError("--cond-dim must leave at least one target column");
  SampleMatrix cond = all.leftCols(o.cond_dim);
  SampleMatrix data = all.rightCols(all.cols() - o.cond_dim);
  const NormalizerKind nk = parse_normalizer_kind(o.normalizer);
  if (nk != NormalizerKind::none) {
    const NormalizerState ns = fit_normalizer(nk, data);
    normalize(ns, data);
    const std::string npath = o.out + ".norm.csv";
    save_normalizer(npath, ns);
    run.outputs.push_back(npath);
  }
  cfg.dof.check_dim(static_cast<std::size_t>(data.cols()));

  std::optional<std::pair<Denoiser, AdamState>> resume;
  if (!o.resume.empty()) {
    LoadedCheckpoint ck = load_checkpoint(o.resume);
    if (!ck.state) throw ConfigError(o.resume + " has no optimiser state to resume from");
    resume.emplace(std::move(ck.net), *ck.state);
    run.inputs.push_back(o.resume);
  }
  auto sink = [&](const Denoiser& net, const AdamState& adam) {
    const std::string p = o.out + ".step" + std::to_string(adam.step);
    save_checkpoint(p, net, &adam);
    run.outputs.push_back(p);
  };
  const TrainResult res = train(cfg, data, o.cond_dim > 0 ? &cond : nullptr, sink, resume);
  save_checkpoint(o.out, res.net, &res.adam);
  run.outputs.push_back(o.out);
  const std::string trace = o.trace.empty() ? o.out + ".trace.csv" : o.trace;
  write_trace_csv(trace, res.trace);
  run.outputs.push_back(trace);
  if (o.svg && !res.trace.empty()) {
    std::vector<double> xs, ys;
    for (const TraceRow& r : res.trace) {
      xs.push_back(static_cast<double>(r.step));
      ys.push_back(r.loss);
    }
    svg::write_series(o.out + ".trace.svg", xs, ys, "training loss");
    run.outputs.push_back(o.out + ".trace.svg");
  }
  run.seeds["train"] = o.seed;
  run.extra["steps"] = cfg.steps();
  if (!res.trace.empty()) run.extra["final_loss"] = res.trace.back().loss;
}

// ---- sample ----

struct SampleOpts {
  std::string checkpoint, sampler, out, preset = "markov", posterior_dof = "per-coordinate", normalizer, cond;
  std::size_t n = 10000;
  int steps = 18;
  double sigma_min = 0.002, sigma_max = 80.0, rho = 7.0, beta = 1.0;
  std::uint64_t seed = 0;
  int threads = 1;
};

void cmd_sample(const SampleOpts& o, CLI::App* sub, Run& run) {
  const LoadedCheckpoint ck = load_checkpoint(o.checkpoint);
  run.inputs.push_back(o.checkpoint);
  const bool flow = ck.net.kind() == PrecondKind::flow;
  SamplerConfig cfg;
  cfg.kind = o.sampler.empty() ? (flow ? SamplerKind::tflow : SamplerKind::heun) : parse_sampler_kind(o.sampler);
  if (flow != (cfg.kind == SamplerKind::tflow))
    throw ConfigError(std::string("sampler '") + to_string(cfg.kind) + "' does not match a " + to_string(ck.net.kind()) +
                      " checkpoint");
  cfg.grid = {o.steps, o.sigma_min, o.sigma_max, o.rho};
  if (flow) {
    if (sub->get_option("--sigma-min")->count() == 0) cfg.grid.sigma_min = 0.01;
    if (sub->get_option("--sigma-max")->count() == 0) cfg.grid.sigma_max = 1.0;
  }
  cfg.dof = ck.net.dof();
  cfg.preset = parse_sde_preset(o.preset);
  cfg.beta = o.beta;
  if (o.posterior_dof == "per-coordinate") cfg.posterior_dof = PosteriorDofMode::per_coordinate;
  else if (o.posterior_dof == "joint") cfg.posterior_dof = PosteriorDofMode::joint;
  else throw ConfigError("--posterior-dof must be per-coordinate or joint");
  cfg.seed = o.seed;
  cfg.n = o.n;
  cfg.d = ck.net.dim();
  cfg.threads = o.threads;

  SampleMatrix cond;
  if (ck.net.cond_dim() > 0) {
    if (o.cond.empty()) throw ConfigError("conditional checkpoint needs --cond");
    cond = read_matrix(o.cond);
    run.inputs.push_back(o.cond);
    if (cond.cols() != ck.net.cond_dim() || static_cast<std::size_t>(cond.rows()) != o.n)
      throw ConfigError("--cond must have n rows and cond_dim columns");
  }
  SampleMatrix x = run_sampler(bind_denoiser(ck.net, ck.net.cond_dim() > 0 ? &cond : nullptr), cfg);
  if (!o.normalizer.empty()) {
    const std::size_t clamped = denormalize(load_normalizer(o.normalizer), x);
    run.inputs.push_back(o.normalizer);
    if (clamped) std::cerr << "warning: " << clamped << " values clamped to the normalizer's fitted range\n";
  }
  write_matrix(o.out, x);
  run.outputs.push_back(o.out);
  run.seeds["sample"] = o.seed;
  run.extra["chain_streams"] = "chain i draws from RngStream(seed, 0xC4A1).derive(i)";
  run.extra["nfe_per_chain"] = cfg.kind == SamplerKind::heun || cfg.kind == SamplerKind::tflow ? 2 * cfg.grid.steps - 1
                                                                                               : cfg.grid.steps;
}

// ---- schedule ----

struct ScheduleOpts {
  std::string data, mode = "gauss", out;
  double lambda = 1.0, target_mi = 0.0, nu = 4.0;
};

void cmd_schedule(const ScheduleOpts& o, CLI::App* sub, Run& run) {
  const SampleMatrix x = read_matrix(o.data);
  run.inputs.push_back(o.data);
  const DataMoments m = DataMoments::from_samples(x, o.mode == "corr");
  const bool by_mi = sub->get_option("--target-mi")->count() > 0;
  const double lambda = by_mi ? lambda_from_mi(o.target_mi, m) : o.lambda;
  std::ofstream out(o.out);
  if (!out) throw ConfigError("cannot write " + o.out);
  out.precision(17);
  if (o.mode == "gauss" || o.mode == "t") {
    const double s2 = o.mode == "gauss" ? sigma_max_gaussian(m, lambda) : sigma_max_student_t(m, lambda, o.nu);
    out << "mode,lambda,mean_sq_norm,nu,sigma_max_sq,sigma_max,mutual_information\n";
    out << o.mode << "," << lambda << "," << m.mean_sq_norm << "," << (o.mode == "t" ? o.nu : 0.0) << "," << s2 << ","
        << std::sqrt(s2) << "," << m.mean_sq_norm / (2.0 * s2) << "\n";
  } else if (o.mode == "corr") {
    const Matrix sig = correlated_sigma(*m.second_moment, lambda);
    out << "# Sigma* = sqrt(lambda) R^(1/2), lambda=" << lambda
        << ", objective=" << correlated_objective(sig, *m.second_moment, lambda) << "\n";
    for (Eigen::Index i = 0; i < sig.rows(); ++i) {
      for (Eigen::Index j = 0; j < sig.cols(); ++j) out << (j ? "," : "") << sig(i, j);
      out << "\n";
    }
  } else {
    throw ConfigError("unknown --mode '" + o.mode + "' (gauss, t, corr)");
  }
  run.outputs.push_back(o.out);
}

// ---- loglik ----

struct LoglikOpts {
  std::string checkpoint, data, out, estimator = "hutchinson";
  int probes = 16, steps = 64, threads = 1;
  double probe_sigma = 1e-2, sigma_min = 0.002, sigma_max = 80.0, rho = 7.0;
  std::uint64_t seed = 0;
};

void cmd_loglik(const LoglikOpts& o, Run& run) {
  const LoadedCheckpoint ck = load_checkpoint(o.checkpoint);
  if (ck.net.kind() == PrecondKind::flow) throw ConfigError("log-likelihood needs a diffusion checkpoint");
  if (ck.net.cond_dim() > 0) throw ConfigError("log-likelihood of conditional models is not supported");
  const SampleMatrix x = read_matrix(o.data);
  if (x.cols() != ck.net.dim()) throw ConfigError("data dimension does not match the checkpoint");
  run.inputs.push_back(o.checkpoint);
  run.inputs.push_back(o.data);
  LikelihoodConfig cfg;
  cfg.estimator = parse_estimator(o.estimator);
  cfg.n_probes = o.probes;
  cfg.probe_sigma = o.probe_sigma;
  cfg.grid = {o.steps, o.sigma_min, o.sigma_max, o.rho};
  cfg.prior_dof = ck.net.dof();
  cfg.seed = o.seed;
  cfg.validate();
  const Denoiser& net = ck.net;
  DenoiseFn fn = [&net](const SampleMatrix& in, double s, SampleMatrix& out) { net.forward(in, s, nullptr, out); };

  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<LikelihoodResult> res(n);
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex mu;
  const auto workers = static_cast<std::size_t>(std::max(1, o.threads));
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          res[i] = log_likelihood(fn, x.row(static_cast<Eigen::Index>(i)).transpose(), cfg, i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
  std::ofstream out(o.out);
  if (!out) throw ConfigError("cannot write " + o.out);
  out.precision(17);
  out << "index,log_likelihood,prior,divergence_integral\n";
  for (std::size_t i = 0; i < n; ++i)
    out << i << "," << res[i].log_likelihood << "," << res[i].prior_term << "," << res[i].divergence_integral << "\n";
  run.outputs.push_back(o.out);
  run.seeds["probes"] = o.seed;
}

// ---- eval ----

struct EvalOpts {
  std::string sim, ref, tails = "both", metrics = "kr,sr,ks,hist", out_dir;
  int column = -1, window = 0, stride = 0, members = 0, height = 0, width = 0;
  double threshold = -std::numeric_limits<double>::infinity();
  bool svg = false, excess = false;
};

std::vector<double> column_of(const SampleMatrix& m, Eigen::Index j) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, j);
  return v;
}

void cmd_eval_windowed(const EvalOpts& o, const SampleMatrix& sim, const SampleMatrix& ref, Run& run) {
  if (o.members < 2 || o.height < 1 || o.width < 1)
    throw ConfigError("windowed evaluation needs --members >= 2, --height and --width");
  const Eigen::Index px = static_cast<Eigen::Index>(o.height) * o.width;
  if (ref.cols() != px || sim.cols() != px || sim.rows() != ref.rows() * o.members)
    throw ConfigError("windowed evaluation: --sim must be (cases*members) x (height*width), --ref cases x (height*width)");
  auto field = [&](const SampleMatrix& m, Eigen::Index r) {
    Field f{o.height, o.width, std::vector<double>(m.row(r).data(), m.row(r).data() + px)};
    return f;
  };
  std::vector<Field> truth;
  std::vector<std::vector<Field>> ens;
  for (Eigen::Index k = 0; k < ref.rows(); ++k) {
    truth.push_back(field(ref, k));
    ens.emplace_back();
    for (int m = 0; m < o.members; ++m) ens.back().push_back(field(sim, k * o.members + m));
  }
  const WindowedScores s = windowed_conditional_eval(ens, truth, o.window, o.threshold, o.stride);
  const std::string path = o.out_dir + "/windowed.csv";
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out.precision(17);
  out << "window,threshold,windows_total,windows_kept,crps,rmse,ssr\n"
      << o.window << "," << o.threshold << "," << s.windows_total << "," << s.windows_kept << "," << s.crps << ","
      << s.rmse << "," << s.ssr << "\n";
  run.outputs.push_back(path);
}

void cmd_eval(const EvalOpts& o, Run& run) {
  const SampleMatrix sim = read_matrix(o.sim), ref = read_matrix(o.ref);
  run.inputs.push_back(o.sim);
  run.inputs.push_back(o.ref);
  if (o.window > 0) return cmd_eval_windowed(o, sim, ref, run);
  if (sim.cols() != ref.cols()) throw ConfigError("--sim and --ref differ in column count");
  const TailMode tails = parse_tail_mode(o.tails);
  std::set<std::string> want;
  {
    std::stringstream ss(o.metrics);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item != "kr" && item != "sr" && item != "ks" && item != "hist")
        throw ConfigError("unknown metric '" + item + "' (kr, sr, ks, hist)");
      want.insert(item);
    }
  }
  std::vector<Eigen::Index> cols;
  if (o.column >= 0) {
    if (o.column >= sim.cols()) throw ConfigError("--column out of range");
    cols.push_back(o.column);
  } else {
    for (Eigen::Index j = 0; j < sim.cols(); ++j) cols.push_back(j);
  }
  const std::string report = o.out_dir + "/report.csv", summary = o.out_dir + "/summary.txt";
  std::ofstream rep(report), sum(summary);
  if (!rep || !sum) throw ConfigError("cannot write into " + o.out_dir);
  rep.precision(17);
  rep << "column,metric,value\n";
  for (Eigen::Index j : cols) {
    const std::vector<double> a = column_of(sim, j), b = column_of(ref, j);
    sum << "column " << j << " (" << a.size() << " generated, " << b.size() << " reference)\n";
    if (want.count("kr")) {
      const double v = kurtosis_ratio(a, b, o.excess);
      rep << j << ",kr," << v << "\n";
      sum << "  kurtosis ratio  " << v << "\n";
    }
    if (want.count("sr")) {
      const double v = skewness_ratio(a, b);
      rep << j << ",sr," << v << "\n";
      sum << "  skewness ratio  " << v << "\n";
    }
    if (want.count("ks")) {
      const TailKs ks = ks_tail(a, b, 0.999, 0.001, tails);
      rep << j << ",ks_left," << ks.ks_left << "\n" << j << ",ks_right," << ks.ks_right << "\n"
          << j << ",ks_avg," << ks.ks_avg << "\n";
      sum << "  tail KS         left " << ks.ks_left << "  right " << ks.ks_right << "  avg(" << o.tails << ") "
          << ks.ks_avg << "\n";
      if (ks.few_points)
        std::cerr << "warning: column " << j << ": fewer than 30 retained tail points; KS is noisy\n";
    }
    if (want.count("hist")) {
      const Histogram h = shared_histogram(a, b);
      const std::string hp = o.out_dir + "/hist_c" + std::to_string(j) + ".csv";
      std::ofstream hf(hp);
      if (!hf) throw ConfigError("cannot write " + hp);
      hf.precision(17);
      hf << "edge_lo,edge_hi,count_sim,count_data\n";
      for (std::size_t k = 0; k < h.counts_sim.size(); ++k)
        hf << h.edges[k] << "," << h.edges[k + 1] << "," << h.counts_sim[k] << "," << h.counts_data[k] << "\n";
      run.outputs.push_back(hp);
      if (o.svg) {
        const std::string sp = o.out_dir + "/hist_c" + std::to_string(j) + ".svg";
        svg::write_histogram(sp, h, "column " + std::to_string(j));
        run.outputs.push_back(sp);
      }
    }
  }
  run.outputs.push_back(report);
  run.outputs.push_back(summary);
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Heavy-tailed diffusion and flow toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion) + " (" + HTD_GIT_REV + ")");
  app.option_defaults()->always_capture_default();

  std::string config_path, manifest_path;
  int threads = default_threads();
  std::uint64_t seed = 0;
  try {
    seed = default_seed();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  auto common = [&](CLI::App* s, bool with_threads) {
    s->add_option("--config", config_path, "flat key=value file; command-line flags take precedence");
    s->add_option("--manifest", manifest_path, "run manifest path (default: next to the main output)");
    if (with_threads) s->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  };

  GenOpts gen;
  gen.seed = seed;
  auto* g = app.add_subcommand("gen-data", "generate toy data");
  g->add_option("--dist", gen.dist, "funnel or tmix");
  g->add_option("--n", gen.n);
  g->add_option("--seed", gen.seed);
  g->add_option("--out", gen.out)->required();
  g->add_option("--funnel-std-convention", gen.funnel_convention, "std or var");
  g->add_option("--nu", gen.nu, "dof of the t mixture");
  g->add_option("--dim", gen.dim);
  g->add_option("--scale", gen.scale);
  common(g, false);

  TrainOpts tr;
  tr.seed = seed;
  auto* t = app.add_subcommand("train", "train a denoiser or flow network");
  t->add_option("--mode", tr.mode, "tedm, edm, tflow, gflow");
  t->add_option("--nu", tr.nu, "scalar, inf, or comma list per dimension (default 4; inf for edm, gflow)");
  t->add_option("--pi-mean", tr.pi_mean);
  t->add_option("--pi-std", tr.pi_std);
  t->add_option("--batch", tr.batch);
  t->add_option("--budget", tr.budget, "total training samples");
  t->add_option("--seed", tr.seed);
  t->add_option("--data", tr.data)->required();
  t->add_option("--normalizer", tr.normalizer, "none, zscore, inc");
  t->add_option("--out", tr.out, "checkpoint path")->required();
  t->add_option("--trace", tr.trace, "loss trace CSV (default <out>.trace.csv)");
  t->add_option("--hidden", tr.hidden);
  t->add_option("--lr", tr.lr);
  t->add_option("--sigma-data", tr.sigma_data);
  t->add_flag("--no-lambda", tr.no_lambda, "unit loss weighting");
  t->add_flag("--dsm", tr.dsm, "extra score-matching weight");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "steps");
  t->add_option("--resume", tr.resume);
  t->add_option("--cond-dim", tr.cond_dim, "leading data columns used as the condition");
  t->add_flag("--svg", tr.svg, "also plot the loss trace");
  common(t, false);

  SampleOpts sa;
  sa.seed = seed;
  auto* s = app.add_subcommand("sample", "generate samples from a checkpoint");
  s->add_option("--checkpoint", sa.checkpoint)->required();
  s->add_option("--sampler", sa.sampler, "heun, ancestral, sde, tflow");
  s->add_option("--n", sa.n);
  s->add_option("--steps", sa.steps);
  s->add_option("--sigma-min", sa.sigma_min);
  s->add_option("--sigma-max", sa.sigma_max);
  s->add_option("--rho", sa.rho);
  s->add_option("--seed", sa.seed);
  s->add_option("--out", sa.out)->required();
  s->add_option("--preset", sa.preset, "SDE preset: ode or markov");
  s->add_option("--beta", sa.beta);
  s->add_option("--posterior-dof", sa.posterior_dof, "per-coordinate or joint");
  s->add_option("--normalizer", sa.normalizer, "normalizer CSV to undo on the output");
  s->add_option("--cond", sa.cond, "condition rows for a conditional checkpoint");
  common(s, true);

  ScheduleOpts sc;
  auto* d = app.add_subcommand("schedule", "sigma_max design from data statistics");
  d->add_option("--data", sc.data)->required();
  d->add_option("--mode", sc.mode, "gauss, t, corr");
  auto* lam = d->add_option("--lambda", sc.lambda);
  d->add_option("--target-mi", sc.target_mi)->excludes(lam);
  d->add_option("--nu", sc.nu);
  d->add_option("--out", sc.out)->required();
  common(d, false);

  LoglikOpts ll;
  ll.seed = seed;
  auto* l = app.add_subcommand("loglik", "per-sample log-likelihood");
  l->add_option("--checkpoint", ll.checkpoint)->required();
  l->add_option("--data", ll.data)->required();
  l->add_option("--out", ll.out)->required();
  l->add_option("--probes", ll.probes);
  l->add_option("--estimator", ll.estimator, "hutchinson or taylor");
  l->add_option("--probe-sigma", ll.probe_sigma);
  l->add_option("--steps", ll.steps);
  l->add_option("--sigma-min", ll.sigma_min);
  l->add_option("--sigma-max", ll.sigma_max);
  l->add_option("--rho", ll.rho);
  l->add_option("--seed", ll.seed);
  common(l, true);

  EvalOpts ev;
  auto* e = app.add_subcommand("eval", "tail statistics and ensemble scores");
  e->add_option("--sim", ev.sim)->required();
  e->add_option("--ref", ev.ref)->required();
  e->add_option("--tails", ev.tails, "both, right, left");
  e->add_option("--metrics", ev.metrics, "comma list of kr, sr, ks, hist");
  e->add_option("--column", ev.column, "single column (default: all)");
  e->add_option("--out-dir", ev.out_dir)->required();
  e->add_flag("--svg", ev.svg);
  e->add_flag("--excess-kurtosis", ev.excess);
  e->add_option("--window", ev.window, "windowed ensemble scoring when > 0");
  e->add_option("--threshold", ev.threshold);
  e->add_option("--stride", ev.stride);
  e->add_option("--members", ev.members);
  e->add_option("--height", ev.height);
  e->add_option("--width", ev.width);
  common(e, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  Run run;
  run.command = sub->get_name();
  for (int i = 0; i < argc; ++i) run.argv.emplace_back(argv[i]);
  const auto start = std::chrono::steady_clock::now();
  try {
    apply_config_file(sub, config_path);
    run.config = snapshot(sub);
    std::string main_out;
    if (sub == g) cmd_gen_data(gen, run), main_out = gen.out;
    else if (sub == t) cmd_train(tr, run), main_out = tr.out;
    else if (sub == s) {
      sa.threads = threads;
      cmd_sample(sa, s, run);
      main_out = sa.out;
    } else if (sub == d) cmd_schedule(sc, d, run), main_out = sc.out;
    else if (sub == l) {
      ll.threads = threads;
      cmd_loglik(ll, run);
      main_out = ll.out;
    } else {
      cmd_eval(ev, run);
      main_out = ev.out_dir + "/eval";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(manifest_path.empty() ? main_out + ".manifest.json" : manifest_path, run, secs, threads);
    return 0;
  } catch (const NumericError& ex) {
    std::cerr << "numeric error: " << ex.what() << "\n";
    return 3;
  } catch (const ParameterError& ex) {
    std::cerr << "parameter error: " << ex.what() << "\n";
    return 2;
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return 2;
  } catch (const UnsupportedError& ex) {
    std::cerr << "unsupported: " << ex.what() << "\n";
    return 2;
  } catch (const CLI::Error& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}

}  // namespace htd::cli
