#include "htd/divergence.hpp"

#include <cmath>
#include <numbers>

#include "htd/errors.hpp"

namespace htd {
namespace {

QuadOptions tight() {
  QuadOptions o;
  o.abs_tol = 1e-15;
  o.rel_tol = 1e-13;
  o.max_intervals = 8000;
  return o;
}

double checked_integral(const std::function<double(double)>& f, double center, double scale,
                        const char* what) {
  if (tail_decay_exponent(f, center) <= 1.0 + 1e-6)
    throw NumericError(std::string(what) + ": integrand tails decay too slowly, integral diverges");
  const QuadResult r = integrate_real_line(f, center, scale, tight());
  if (!std::isfinite(r.value)) throw NumericError(std::string(what) + ": non-finite integral");
  return r.value;
}

}  // namespace

GammaParams GammaParams::from_dof(double nu, double d) {
  GammaParams g{-2.0 / (nu + d)};
  g.validate();
  return g;
}

void GammaParams::validate() const {
  if (gamma == 0.0 || !(gamma > -1.0) || !std::isfinite(gamma))
    throw ParameterError("gamma must lie in (-1, 0) or (0, inf)");
}

double gamma_divergence_student_t_diag(const Vector& mu0, const Vector& var0, const Vector& mu1,
                                       const Vector& var1, double nu) {
  const auto d = static_cast<double>(mu0.size());
  if (mu1.size() != mu0.size() || var0.size() != mu0.size() || var1.size() != mu0.size())
    throw ParameterError("dimension mismatch in gamma divergence");
  if (!(nu > 2.0)) throw ParameterError("gamma divergence closed form needs nu > 2");
  if ((var0.array() <= 0.0).any() || (var1.array() <= 0.0).any())
    throw ParameterError("variances must be positive");

  const double g = -2.0 / (nu + d);
  const double e = g / (1.0 + g);  // exponent gamma/(1+gamma)
  const double log_c = student_t_log_norm(nu, d);
  const double log_k = e * log_c - e * std::log1p(d / (nu - 2.0));

  const double logdet0 = var0.array().log().sum();
  const double logdet1 = var1.array().log().sum();
  const double a0 = std::exp(-0.5 * e * logdet0);
  const double a1 = std::exp(-0.5 * e * logdet1);
  const double tr = (var0.array() / var1.array()).sum();
  const double maha = ((mu0 - mu1).array().square() / var1.array()).sum();

  const double bracket =
      -a0 * (1.0 + d / (nu - 2.0)) + a1 * (1.0 + tr / (nu - 2.0) + maha / nu);
  return -(1.0 / g) * std::exp(log_k) * bracket;
}

double gamma_divergence_student_t(const StudentTParams& q, const StudentTParams& p) {
  q.validate();
  p.validate();
  if (q.dof.is_per_dimension() || p.dof.is_per_dimension() || !(q.dof == p.dof))
    throw UnsupportedError("closed-form gamma divergence needs one shared scalar nu");
  const auto nu = q.dof.scalar_value();
  if (!nu) throw ParameterError("closed-form gamma divergence needs finite nu");
  const auto n = q.location.size();
  return gamma_divergence_student_t_diag(q.location, Vector::Constant(n, q.scale * q.scale),
                                         p.location, Vector::Constant(n, p.scale * p.scale), *nu);
}

double gamma_power_norm(const Density1d& p, double gamma, double center, double scale) {
  GammaParams{gamma}.validate();
  auto f = [&](double x) {
    const double v = p(x);
    return v > 0.0 ? std::pow(v, 1.0 + gamma) : 0.0;
  };
  const double integral = checked_integral(f, center, scale, "gamma-power norm");
  return std::pow(integral, 1.0 / (1.0 + gamma));
}

double gamma_entropy_quadrature(const Density1d& p, double gamma, double center, double scale) {
  return -gamma_power_norm(p, gamma, center, scale);
}

double gamma_cross_entropy_quadrature(const Density1d& q, const Density1d& p, double gamma,
                                      double center, double scale) {
  const double norm = gamma_power_norm(p, gamma, center, scale);
  auto f = [&](double x) {
    const double qv = q(x);
    if (qv == 0.0) return 0.0;
    return qv * std::pow(p(x) / norm, gamma);
  };
  return -checked_integral(f, center, scale, "gamma-power cross-entropy");
}

double gamma_divergence_quadrature(const Density1d& q, const Density1d& p, double gamma,
                                   double center, double scale) {
  const double c = gamma_cross_entropy_quadrature(q, p, gamma, center, scale);
  const double h = gamma_entropy_quadrature(q, gamma, center, scale);
  return (c - h) / gamma;
}

double kl_divergence_quadrature(const Density1d& q, const Density1d& p, double center,
                                double scale) {
  auto f = [&](double x) {
    const double qv = q(x);
    if (qv == 0.0) return 0.0;
    return qv * (std::log(qv) - std::log(p(x)));
  };
  return checked_integral(f, center, scale, "KL divergence");
}

LocationFamily student_t_location_family(double scale, double nu) {
  const double log_norm = student_t_log_norm(nu, 1.0) - std::log(scale);
  LocationFamily fam;
  fam.density = [=](double x, double theta) {
    const double r = (x - theta) / scale;
    return std::exp(log_norm - 0.5 * (nu + 1.0) * std::log1p(r * r / nu));
  };
  fam.dlog_dtheta = [=](double x, double theta) {
    const double r = x - theta;
    return (nu + 1.0) * r / (nu * scale * scale + r * r);
  };
  return fam;
}

LocationFamily gaussian_location_family(double scale) {
  LocationFamily fam;
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(scale);
  fam.density = [=](double x, double theta) {
    const double r = (x - theta) / scale;
    return std::exp(log_norm - 0.5 * r * r);
  };
  fam.dlog_dtheta = [=](double x, double theta) { return (x - theta) / (scale * scale); };
  return fam;
}

GradientCheck gamma_gradient_identity_check(const LocationFamily& family, const Density1d& q,
                                            double theta, double gamma, double h) {
  GammaParams{gamma}.validate();
  auto div_at = [&](double th) {
    Density1d p = [&, th](double x) { return family.density(x, th); };
    return gamma_divergence_quadrature(q, p, gamma, th, 1.0);
  };
  GradientCheck out;
  out.lhs = (div_at(theta + h) - div_at(theta - h)) / (2.0 * h);

  Density1d p = [&](double x) { return family.density(x, theta); };
  auto powered = [&](double x) { return std::pow(p(x), 1.0 + gamma); };
  const double z = checked_integral(powered, theta, 1.0, "tilted normaliser");
  const double mean_score = checked_integral(
      [&](double x) { return powered(x) * family.dlog_dtheta(x, theta); }, theta, 1.0,
      "tilted score mean") / z;
  const double norm = std::pow(z, 1.0 / (1.0 + gamma));
  out.rhs = -checked_integral(
      [&](double x) {
        const double qv = q(x);
        if (qv == 0.0) return 0.0;
        return qv * std::pow(p(x) / norm, gamma) * (family.dlog_dtheta(x, theta) - mean_score);
      },
      theta, 1.0, "gradient identity");
  return out;
}

}  // namespace htd
