#include "htd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "htd/errors.hpp"

namespace htd {
namespace {

struct Moments {
  double mean, m2, m3, m4;
};

Moments central_moments(const std::vector<double>& x) {
  if (x.size() < 2) throw ParameterError("need at least two samples");
  const double mean = sample_mean(x);
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : x) {
    const double c = v - mean, c2 = c * c;
    m2 += c2;
    m3 += c2 * c;
    m4 += c2 * c2;
  }
  const double n = static_cast<double>(x.size());
  if (!(m2 > 0.0)) throw ParameterError("degenerate sample (zero variance)");
  return {mean, m2 / n, m3 / n, m4 / n};
}

constexpr std::size_t kMinTailPoints = 30;

}  // namespace

double sample_mean(const std::vector<double>& x) {
  if (x.empty()) throw ParameterError("empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sample_skewness(const std::vector<double>& x) {
  const Moments m = central_moments(x);
  return m.m3 / std::pow(m.m2, 1.5);
}

double sample_kurtosis(const std::vector<double>& x, bool excess) {
  const Moments m = central_moments(x);
  return m.m4 / (m.m2 * m.m2) - (excess ? 3.0 : 0.0);
}

double kurtosis_ratio(const std::vector<double>& sim, const std::vector<double>& data, bool excess) {
  const double kd = sample_kurtosis(data, excess);
  if (kd == 0.0) throw ParameterError("kurtosis ratio undefined: reference kurtosis is zero");
  return std::abs(1.0 - sample_kurtosis(sim, excess) / kd);
}

double skewness_ratio(const std::vector<double>& sim, const std::vector<double>& data) {
  const double sd = sample_skewness(data);
  if (sd == 0.0) throw ParameterError("skewness ratio undefined: reference skewness is zero");
  return std::abs(1.0 - sample_skewness(sim) / sd);
}

double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw ParameterError("quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("quantile level outside [0, 1]");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty() || b.empty()) return 1.0;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  while (i < a.size() || j < b.size()) {
    double v;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) v = a[i];
    else v = b[j];
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

TailMode parse_tail_mode(const std::string& s) {
  if (s == "both") return TailMode::both;
  if (s == "right") return TailMode::right;
  if (s == "left") return TailMode::left;
  throw ConfigError("unknown tail mode '" + s + "'");
}

TailKs ks_tail(const std::vector<double>& sim, const std::vector<double>& data, double upper_q, double lower_q,
               TailMode tails) {
  if (!(lower_q < upper_q)) throw ParameterError("tail quantiles need lower_q < upper_q");
  const double hi = quantile(data, upper_q);
  const double lo = quantile(data, lower_q);
  std::vector<double> sl, sr, dl, dr;
  for (double v : sim) {
    if (v > hi) sr.push_back(v);
    if (v < lo) sl.push_back(v);
  }
  for (double v : data) {
    if (v > hi) dr.push_back(v);
    if (v < lo) dl.push_back(v);
  }
  TailKs r;
  r.n_sim_left = sl.size();
  r.n_sim_right = sr.size();
  r.n_data_left = dl.size();
  r.n_data_right = dr.size();
  r.ks_left = ks_statistic(sl, dl);
  r.ks_right = ks_statistic(sr, dr);
  const bool few_left = std::min(sl.size(), dl.size()) < kMinTailPoints;
  const bool few_right = std::min(sr.size(), dr.size()) < kMinTailPoints;
  switch (tails) {
    case TailMode::both:
      r.ks_avg = 0.5 * (r.ks_left + r.ks_right);
      r.few_points = few_left || few_right;
      break;
    case TailMode::right:
      r.ks_avg = r.ks_right;
      r.few_points = few_right;
      break;
    case TailMode::left:
      r.ks_avg = r.ks_left;
      r.few_points = few_left;
      break;
  }
  return r;
}

double crps_ensemble(std::vector<double> members, double y) {
  if (members.empty()) throw ParameterError("empty ensemble");
  const std::size_t m = members.size();
  double abs_err = 0.0;
  for (double v : members) abs_err += std::abs(v - y);
  abs_err /= static_cast<double>(m);
  if (m == 1) return abs_err;
  std::sort(members.begin(), members.end());
  // sum_{i<j} |x_i - x_j| = sum_i x_(i) (2i - m - 1), i 1-based
  double pair = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    pair += members[i] * (2.0 * static_cast<double>(i + 1) - static_cast<double>(m) - 1.0);
  return abs_err - pair / (static_cast<double>(m) * static_cast<double>(m - 1));
}

double crps_ensemble_bruteforce(const std::vector<double>& members, double y) {
  if (members.empty()) throw ParameterError("empty ensemble");
  const std::size_t m = members.size();
  double a = 0.0, b = 0.0;
  for (double v : members) a += std::abs(v - y);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) b += std::abs(members[i] - members[j]);
  a /= static_cast<double>(m);
  if (m > 1) b /= static_cast<double>(m) * static_cast<double>(m - 1);
  return a - 0.5 * b;
}

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.empty()) throw ParameterError("rmse needs equal non-empty inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double ssr(const Matrix& ensembles, const std::vector<double>& truths) {
  if (ensembles.rows() != static_cast<Eigen::Index>(truths.size()) || truths.empty())
    throw ParameterError("ssr needs one truth per case");
  if (ensembles.cols() < 2) throw ParameterError("ssr needs at least two members");
  const double m = static_cast<double>(ensembles.cols());
  double spread = 0.0, skill = 0.0;
  for (Eigen::Index k = 0; k < ensembles.rows(); ++k) {
    const double mean = ensembles.row(k).mean();
    spread += std::sqrt((ensembles.row(k).array() - mean).square().sum() / (m - 1.0));
    skill += (mean - truths[static_cast<std::size_t>(k)]) * (mean - truths[static_cast<std::size_t>(k)]);
  }
  const double n = static_cast<double>(truths.size());
  spread /= n;
  skill = std::sqrt(skill / n);
  if (skill == 0.0) {
    if (spread == 0.0) return 0.0;
    throw NumericError("ssr undefined: ensemble means match the truths exactly");
  }
  return spread / skill;
}

Histogram shared_histogram(const std::vector<double>& sim, const std::vector<double>& data, std::size_t max_bins) {
  std::vector<double> all(sim);
  all.insert(all.end(), data.begin(), data.end());
  if (all.empty()) throw ParameterError("histogram of empty samples");
  const auto [mn, mx] = std::minmax_element(all.begin(), all.end());
  const double lo = *mn, hi = *mx;
  const double iqr = quantile(all, 0.75) - quantile(all, 0.25);
  const double width = 2.0 * iqr / std::cbrt(static_cast<double>(all.size()));
  std::size_t bins = 1;
  if (width > 0.0 && hi > lo)
    bins = static_cast<std::size_t>(std::clamp(std::ceil((hi - lo) / width), 1.0, static_cast<double>(max_bins)));
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  h.edges.back() = hi;
  auto fill = [&](const std::vector<double>& v, std::vector<std::size_t>& counts) {
    counts.assign(bins, 0);
    for (double x : v) {
      std::size_t b = hi > lo ? static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins)) : 0;
      ++counts[std::min(b, bins - 1)];
    }
  };
  fill(sim, h.counts_sim);
  fill(data, h.counts_data);
  return h;
}

EvalReport evaluate(const std::vector<double>& sim, const std::vector<double>& data, TailMode tails,
                    bool excess_kurtosis) {
  EvalReport r;
  r.kr = kurtosis_ratio(sim, data, excess_kurtosis);
  r.sr = skewness_ratio(sim, data);
  r.ks = ks_tail(sim, data, 0.999, 0.001, tails);
  r.histogram = shared_histogram(sim, data);
  r.n_sim = sim.size();
  r.n_data = data.size();
  return r;
}

WindowedScores windowed_conditional_eval(const std::vector<std::vector<Field>>& ensemble,
                                         const std::vector<Field>& truth, int window, double threshold,
                                         int stride) {
  if (ensemble.size() != truth.size() || truth.empty()) throw ParameterError("one ensemble per truth field");
  if (window < 1) throw ParameterError("window must be positive");
  if (stride <= 0) stride = window;
  WindowedScores out;
  std::vector<std::vector<double>> members_per_px;
  std::vector<double> truths;
  double crps_sum = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const Field& tf = truth[k];
    const auto& ens = ensemble[k];
    if (ens.size() < 2) throw ParameterError("windowed evaluation needs at least two members");
    for (const Field& f : ens)
      if (f.height != tf.height || f.width != tf.width) throw ParameterError("field shape mismatch");
    if (window > tf.height || window > tf.width) throw ParameterError("window larger than field");
    for (int r0 = 0; r0 + window <= tf.height; r0 += stride) {
      for (int c0 = 0; c0 + window <= tf.width; c0 += stride) {
        ++out.windows_total;
        double mx = -std::numeric_limits<double>::infinity();
        for (int r = r0; r < r0 + window; ++r)
          for (int c = c0; c < c0 + window; ++c) mx = std::max(mx, tf.at(r, c));
        if (mx < threshold) continue;
        ++out.windows_kept;
        for (int r = r0; r < r0 + window; ++r) {
          for (int c = c0; c < c0 + window; ++c) {
            std::vector<double> mem(ens.size());
            for (std::size_t m = 0; m < ens.size(); ++m) mem[m] = ens[m].at(r, c);
            crps_sum += crps_ensemble(mem, tf.at(r, c));
            members_per_px.push_back(std::move(mem));
            truths.push_back(tf.at(r, c));
          }
        }
      }
    }
  }
  if (out.windows_kept == 0) throw ConfigError("no window passes the threshold");
  const std::size_t n = truths.size(), m = members_per_px.front().size();
  Matrix ens(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  std::vector<double> means(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) ens(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = members_per_px[i][j];
    means[i] = ens.row(static_cast<Eigen::Index>(i)).mean();
  }
  out.crps = crps_sum / static_cast<double>(n);
  out.rmse = rmse(means, truths);
  out.ssr = ssr(ens, truths);
  return out;
}

}  // namespace htd
