#include "htd/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

#include "htd/errors.hpp"
#include "htd/student_t.hpp"

namespace htd {
namespace {

// Linear interpolation of y(x) on strictly increasing xs; clamps outside.
double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x, bool& clamped) {
  clamped = false;
  if (x <= xs.front()) {
    clamped = x < xs.front();
    return ys.front();
  }
  if (x >= xs.back()) {
    clamped = x > xs.back();
    return ys.back();
  }
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - xs.begin());
  const double w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
  return ys[j - 1] + w * (ys[j] - ys[j - 1]);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

FunnelConvention parse_funnel_convention(const std::string& s) {
  if (s == "std" || s == "stddev") return FunnelConvention::stddev;
  if (s == "var" || s == "variance") return FunnelConvention::variance;
  throw ConfigError("unknown funnel convention '" + s + "'");
}

SampleMatrix neals_funnel(std::size_t n, const RngStream& rng, FunnelConvention conv) {
  SampleMatrix x(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream r = rng.derive(i);
    const double z1 = r.normal(), z2 = r.normal();
    double x1, s2;
    if (conv == FunnelConvention::stddev) {
      x1 = 3.0 * z1;
      s2 = std::exp(x1 / 2.0);
    } else {
      x1 = std::sqrt(3.0) * z1;
      s2 = std::exp(x1 / 4.0);
    }
    x(static_cast<Eigen::Index>(i), 0) = x1;
    x(static_cast<Eigen::Index>(i), 1) = s2 * z2;
  }
  return x;
}

ConditionalPairs conditional_funnel_pairs(std::size_t n, const RngStream& rng, FunnelConvention conv) {
  const SampleMatrix f = neals_funnel(n, rng, conv);
  return {f.col(0), f.col(1)};
}

SampleMatrix student_t_mixture(std::size_t n, const std::vector<Vector>& centers, double scale,
                               const DofSpec& dof, const RngStream& rng) {
  if (centers.empty()) throw ParameterError("mixture needs at least one centre");
  if (!(scale > 0.0)) throw ParameterError("mixture scale must be positive");
  const auto d = static_cast<std::size_t>(centers.front().size());
  for (const Vector& c : centers)
    if (static_cast<std::size_t>(c.size()) != d) throw ParameterError("mixture centres differ in dimension");
  dof.check_dim(d);
  dof.require_greater(0.0, "mixture dof");
  SampleMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Vector noise(d);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream r = rng.derive(i);
    const Vector& c = centers[r.below(centers.size())];
    student_t_noise(dof, r, noise.data(), d);
    x.row(static_cast<Eigen::Index>(i)) = (c + scale * noise).transpose();
  }
  return x;
}

NormalizerKind parse_normalizer_kind(const std::string& s) {
  if (s == "none") return NormalizerKind::none;
  if (s == "zscore") return NormalizerKind::zscore;
  if (s == "inc" || s == "inverse_cdf") return NormalizerKind::inverse_cdf;
  throw ConfigError("unknown normalizer '" + s + "'");
}

const char* to_string(NormalizerKind k) {
  switch (k) {
    case NormalizerKind::none: return "none";
    case NormalizerKind::zscore: return "zscore";
    case NormalizerKind::inverse_cdf: return "inc";
  }
  return "?";
}

NormalizerState zscore_fit(const SampleMatrix& data) {
  if (data.rows() < 2) throw ParameterError("zscore fit needs at least two rows");
  NormalizerState s;
  s.kind = NormalizerKind::zscore;
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    const double mean = data.col(j).mean();
    const double sd = std::sqrt((data.col(j).array() - mean).square().mean());
    if (!(sd > 0.0)) throw ParameterError("zscore fit: column " + std::to_string(j) + " is constant");
    s.mean.push_back(mean);
    s.stddev.push_back(sd);
  }
  return s;
}

void zscore_apply(const NormalizerState& s, SampleMatrix& x) {
  if (static_cast<std::size_t>(x.cols()) != s.mean.size()) throw ParameterError("normalizer dimension mismatch");
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    x.col(j) = (x.col(j).array() - s.mean[static_cast<std::size_t>(j)]) / s.stddev[static_cast<std::size_t>(j)];
}

void zscore_invert(const NormalizerState& s, SampleMatrix& x) {
  if (static_cast<std::size_t>(x.cols()) != s.mean.size()) throw ParameterError("normalizer dimension mismatch");
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    x.col(j) = x.col(j).array() * s.stddev[static_cast<std::size_t>(j)] + s.mean[static_cast<std::size_t>(j)];
}

NormalizerState inc_fit(const SampleMatrix& data, int n_bins) {
  if (n_bins < 1) throw ParameterError("inc fit needs at least one bin");
  if (data.rows() < 2) throw ParameterError("inc fit needs at least two rows");
  NormalizerState s;
  s.kind = NormalizerKind::inverse_cdf;
  const double n = static_cast<double>(data.rows());
  s.p_min = 1.0 / (2.0 * n);
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    const double lo = data.col(j).minCoeff(), hi = data.col(j).maxCoeff();
    if (!(hi > lo)) throw ParameterError("inc fit: column " + std::to_string(j) + " is constant");
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_bins), 0);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      auto b = static_cast<std::size_t>((data(i, j) - lo) / (hi - lo) * n_bins);
      ++counts[std::min(b, counts.size() - 1)];
    }
    CdfTable t;
    t.knots.push_back(lo);
    t.probs.push_back(0.0);
    std::size_t cum = 0;
    for (int b = 0; b < n_bins; ++b) {
      cum += counts[static_cast<std::size_t>(b)];
      if (counts[static_cast<std::size_t>(b)] == 0) continue;  // flat: no new knot
      t.knots.push_back(b + 1 == n_bins ? hi : lo + (hi - lo) * (b + 1.0) / n_bins);
      t.probs.push_back(static_cast<double>(cum) / n);
    }
    s.cdf.push_back(std::move(t));
  }
  return s;
}

std::size_t inc_apply(const NormalizerState& s, SampleMatrix& x) {
  if (static_cast<std::size_t>(x.cols()) != s.cdf.size()) throw ParameterError("normalizer dimension mismatch");
  std::size_t clamped = 0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const CdfTable& t = s.cdf[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      bool c = false;
      const double p = std::clamp(interp(t.knots, t.probs, x(i, j), c), s.p_min, 1.0 - s.p_min);
      clamped += c;
      x(i, j) = normal_quantile(p);
    }
  }
  return clamped;
}

std::size_t inc_invert(const NormalizerState& s, SampleMatrix& x) {
  if (static_cast<std::size_t>(x.cols()) != s.cdf.size()) throw ParameterError("normalizer dimension mismatch");
  std::size_t clamped = 0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const CdfTable& t = s.cdf[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      bool c = false;
      x(i, j) = interp(t.probs, t.knots, normal_cdf(x(i, j)), c);
      clamped += c;
    }
  }
  return clamped;
}

NormalizerState fit_normalizer(NormalizerKind kind, const SampleMatrix& data) {
  switch (kind) {
    case NormalizerKind::zscore: return zscore_fit(data);
    case NormalizerKind::inverse_cdf: return inc_fit(data);
    case NormalizerKind::none: break;
  }
  return {};
}

std::size_t normalize(const NormalizerState& s, SampleMatrix& x) {
  if (s.kind == NormalizerKind::zscore) zscore_apply(s, x);
  if (s.kind == NormalizerKind::inverse_cdf) return inc_apply(s, x);
  return 0;
}

std::size_t denormalize(const NormalizerState& s, SampleMatrix& x) {
  if (s.kind == NormalizerKind::zscore) zscore_invert(s, x);
  if (s.kind == NormalizerKind::inverse_cdf) return inc_invert(s, x);
  return 0;
}

// kind,<name>
// zscore rows:  column,mean,std
// inc: p_min,<v> then column,knot,prob
void save_normalizer(const std::string& path, const NormalizerState& s) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "kind," << to_string(s.kind) << "\n";
  if (s.kind == NormalizerKind::zscore) {
    for (std::size_t j = 0; j < s.mean.size(); ++j) out << j << "," << fmt(s.mean[j]) << "," << fmt(s.stddev[j]) << "\n";
  } else if (s.kind == NormalizerKind::inverse_cdf) {
    out << "p_min," << fmt(s.p_min) << "\n";
    for (std::size_t j = 0; j < s.cdf.size(); ++j)
      for (std::size_t k = 0; k < s.cdf[j].knots.size(); ++k)
        out << j << "," << fmt(s.cdf[j].knots[k]) << "," << fmt(s.cdf[j].probs[k]) << "\n";
  }
  if (!out) throw ConfigError("failed writing " + path);
}

NormalizerState load_normalizer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::string line;
  NormalizerState s;
  if (!std::getline(in, line) || line.rfind("kind,", 0) != 0) throw ConfigError(path + ": missing kind header");
  s.kind = parse_normalizer_kind(line.substr(5));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    try {
      if (a == "p_min") {
        s.p_min = std::stod(b);
        continue;
      }
      const auto j = static_cast<std::size_t>(std::stoul(a));
      if (s.kind == NormalizerKind::zscore) {
        if (j != s.mean.size()) throw ConfigError("columns out of order");
        s.mean.push_back(std::stod(b));
        s.stddev.push_back(std::stod(c));
      } else {
        if (j >= s.cdf.size()) s.cdf.resize(j + 1);
        s.cdf[j].knots.push_back(std::stod(b));
        s.cdf[j].probs.push_back(std::stod(c));
      }
    } catch (const std::logic_error&) {
      throw ConfigError(path + ": malformed line '" + line + "'");
    }
  }
  return s;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError("normal quantile needs p in (0, 1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

}  // namespace htd
