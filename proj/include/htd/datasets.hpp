#pragma once

#include <string>
#include <vector>

#include "htd/dof.hpp"
#include "htd/rng.hpp"
#include "htd/types.hpp"

namespace htd {

enum class FunnelConvention {
  stddev,    // x1 ~ N(0, 3^2), x2 | x1 ~ N(0, exp(x1/2)^2)
  variance,  // x1 ~ N(0, 3), x2 | x1 ~ N(0, exp(x1/2))
};
FunnelConvention parse_funnel_convention(const std::string& s);

// Row i uses the stream rng.derive(i).
SampleMatrix neals_funnel(std::size_t n, const RngStream& rng,
                          FunnelConvention conv = FunnelConvention::stddev);

struct ConditionalPairs {
  SampleMatrix condition;  // n x 1, x1
  SampleMatrix target;     // n x 1, x2
};
ConditionalPairs conditional_funnel_pairs(std::size_t n, const RngStream& rng,
                                          FunnelConvention conv = FunnelConvention::stddev);

// Equal-weight mixture of product Student-t components at the given centres.
SampleMatrix student_t_mixture(std::size_t n, const std::vector<Vector>& centers, double scale,
                               const DofSpec& dof, const RngStream& rng);

enum class NormalizerKind { none, zscore, inverse_cdf };
NormalizerKind parse_normalizer_kind(const std::string& s);
const char* to_string(NormalizerKind k);

struct CdfTable {
  std::vector<double> knots;  // strictly increasing
  std::vector<double> probs;  // strictly increasing in (0, 1]... see inc_fit
};

struct NormalizerState {
  NormalizerKind kind = NormalizerKind::none;
  std::vector<double> mean, stddev;  // zscore
  std::vector<CdfTable> cdf;         // inverse_cdf, one per column
  double p_min = 0.0;
};

NormalizerState zscore_fit(const SampleMatrix& data);
void zscore_apply(const NormalizerState& s, SampleMatrix& x);
void zscore_invert(const NormalizerState& s, SampleMatrix& x);

NormalizerState inc_fit(const SampleMatrix& data, int n_bins = 4096);
// Returns how many values fell outside the fitted support and were clamped.
std::size_t inc_apply(const NormalizerState& s, SampleMatrix& x);
std::size_t inc_invert(const NormalizerState& s, SampleMatrix& x);

NormalizerState fit_normalizer(NormalizerKind kind, const SampleMatrix& data);
std::size_t normalize(const NormalizerState& s, SampleMatrix& x);
std::size_t denormalize(const NormalizerState& s, SampleMatrix& x);

void save_normalizer(const std::string& path, const NormalizerState& s);
NormalizerState load_normalizer(const std::string& path);

double normal_cdf(double z);
double normal_quantile(double p);

}  // namespace htd
