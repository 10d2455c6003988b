#pragma once

#include <string>
#include <vector>

#include "htd/types.hpp"

namespace htd {

// Uncorrected (population) moment estimators.
double sample_mean(const std::vector<double>& x);
double sample_skewness(const std::vector<double>& x);
// Raw fourth standardized moment; excess subtracts 3.
double sample_kurtosis(const std::vector<double>& x, bool excess = false);

// |1 - k_sim / k_data|
double kurtosis_ratio(const std::vector<double>& sim, const std::vector<double>& data,
                      bool excess = false);
// |1 - s_sim / s_data|
double skewness_ratio(const std::vector<double>& sim, const std::vector<double>& data);

// Linear-interpolation quantile (numpy default) of unsorted data.
double quantile(std::vector<double> x, double q);

// sup |F_a - F_b| over the pooled points.
double ks_statistic(std::vector<double> a, std::vector<double> b);

enum class TailMode { both, right, left };
TailMode parse_tail_mode(const std::string& s);

struct TailKs {
  double ks_left = 0.0;
  double ks_right = 0.0;
  double ks_avg = 0.0;
  std::size_t n_sim_left = 0, n_sim_right = 0, n_data_left = 0, n_data_right = 0;
  bool few_points = false;  // fewer than 30 retained points on a used side
};

// Retains points beyond the data-side quantiles and compares the tails.
TailKs ks_tail(const std::vector<double>& sim, const std::vector<double>& data,
               double upper_q = 0.999, double lower_q = 0.001, TailMode tails = TailMode::both);

// mean|X - y| - (1/2) mean_{i != j}|X_i - X_j|; O(m log m) via sorting.
double crps_ensemble(std::vector<double> members, double y);
double crps_ensemble_bruteforce(const std::vector<double>& members, double y);

double rmse(const std::vector<double>& pred, const std::vector<double>& truth);

// Spread (mean ensemble std, ddof 1) over skill (RMSE of the ensemble mean).
// ensembles: cases x members.
double ssr(const Matrix& ensembles, const std::vector<double>& truths);

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts_sim;
  std::vector<std::size_t> counts_data;
};
// Freedman-Diaconis width on the union, shared edges.
Histogram shared_histogram(const std::vector<double>& sim, const std::vector<double>& data,
                           std::size_t max_bins = 1000);

struct EvalReport {
  double kr = 0.0, sr = 0.0;
  TailKs ks;
  Histogram histogram;
  std::size_t n_sim = 0, n_data = 0;
};
EvalReport evaluate(const std::vector<double>& sim, const std::vector<double>& data,
                    TailMode tails = TailMode::both, bool excess_kurtosis = false);

// Fields are stored row-major height x width.
struct Field {
  int height = 0, width = 0;
  std::vector<double> values;
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
};

struct WindowedScores {
  double crps = 0.0, rmse = 0.0, ssr = 0.0;
  std::size_t windows_total = 0, windows_kept = 0;
};

// Windows of size window x window at the given stride; a window is kept when
// the truth field's maximum inside it is >= threshold. Scores are averaged
// over all pixels of the kept windows (pixels counted once per window).
// ensemble[k][m]: member m of case k; truth[k]: case k.
WindowedScores windowed_conditional_eval(const std::vector<std::vector<Field>>& ensemble,
                                         const std::vector<Field>& truth, int window,
                                         double threshold, int stride = 0);

}  // namespace htd
