#include "htd/student_t.hpp"

#include <cmath>
#include <numbers>

#include "htd/errors.hpp"

namespace htd {

void StudentTParams::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw ParameterError("Student-t scale must be positive");
  if (location.size() == 0) throw ParameterError("Student-t location is empty");
  dof.check_dim(static_cast<std::size_t>(location.size()));
}

double sample_gamma(double shape, RngStream& rng) {
  if (!(shape > 0.0)) throw ParameterError("gamma shape must be positive");
  if (shape < 1.0) {
    const double g = sample_gamma(shape + 1.0, rng);
    return g * std::pow(rng.uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double z, v;
    do {
      z = rng.normal();
      v = 1.0 + c * z;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * z * z * z * z) return d * v;
    if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_chi2_scaled(double nu, RngStream& rng) {
  if (!(nu > 0.0) || !std::isfinite(nu))
    throw ParameterError("chi-squared dof must be positive and finite");
  // chi^2(nu) = Gamma(nu/2, scale 2)
  double k = 2.0 * sample_gamma(0.5 * nu, rng) / nu;
  // Gamma(small shape) can underflow to 0; keep kappa strictly positive.
  if (k <= 0.0) k = std::numeric_limits<double>::min();
  return k;
}

StudentTDraw draw_student_t_raw(std::size_t d, const DofSpec& dof, RngStream& rng) {
  dof.check_dim(d);
  StudentTDraw out;
  out.z.resize(static_cast<Eigen::Index>(d));
  out.kappa = Vector::Ones(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) out.z[static_cast<Eigen::Index>(i)] = rng.normal();
  if (dof.is_per_dimension()) {
    for (std::size_t i = 0; i < d; ++i)
      if (auto nu = dof.at(i)) out.kappa[static_cast<Eigen::Index>(i)] = sample_chi2_scaled(*nu, rng);
  } else if (auto nu = dof.scalar_value()) {
    out.kappa.setConstant(sample_chi2_scaled(*nu, rng));
  }
  return out;
}

void student_t_noise(const DofSpec& dof, RngStream& rng, double* out, std::size_t d) {
  for (std::size_t i = 0; i < d; ++i) out[i] = rng.normal();
  if (dof.is_per_dimension()) {
    dof.check_dim(d);
    for (std::size_t i = 0; i < d; ++i)
      if (auto nu = dof.at(i)) out[i] = out[i] / std::sqrt(sample_chi2_scaled(*nu, rng));
  } else if (auto nu = dof.scalar_value()) {
    const double s = std::sqrt(sample_chi2_scaled(*nu, rng));
    for (std::size_t i = 0; i < d; ++i) out[i] = out[i] / s;
  }
}

Vector student_t_noise(std::size_t d, const DofSpec& dof, RngStream& rng) {
  Vector v(static_cast<Eigen::Index>(d));
  student_t_noise(dof, rng, v.data(), d);
  return v;
}

Vector sample_student_t(const StudentTParams& params, RngStream& rng) {
  params.validate();
  const auto d = static_cast<std::size_t>(params.location.size());
  const StudentTDraw raw = draw_student_t_raw(d, params.dof, rng);
  Vector x(params.location.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    // Gaussian coordinates skip the division entirely.
    const bool gaussian = !params.dof.at(static_cast<std::size_t>(i)).has_value();
    const double n = gaussian ? raw.z[i] : raw.z[i] / std::sqrt(raw.kappa[i]);
    x[i] = params.location[i] + params.scale * n;
  }
  return x;
}

double student_t_log_norm(std::optional<double> nu, double d) {
  if (!nu) return -0.5 * d * std::log(2.0 * std::numbers::pi);
  const double v = *nu;
  return std::lgamma(0.5 * (v + d)) - std::lgamma(0.5 * v) - 0.5 * d * std::log(v * std::numbers::pi);
}

double student_t_log_density(const Vector& x, const StudentTParams& params) {
  params.validate();
  if (params.dof.is_per_dimension())
    throw UnsupportedError(
        "multivariate Student-t density needs a scalar dof; use product_student_t_log_density");
  if (x.size() != params.location.size()) throw ParameterError("dimension mismatch");
  const double d = static_cast<double>(x.size());
  const double q = (x - params.location).squaredNorm() / (params.scale * params.scale);
  const auto nu = params.dof.scalar_value();
  const double lognorm = student_t_log_norm(nu, d) - d * std::log(params.scale);
  if (!nu) return lognorm - 0.5 * q;
  return lognorm - 0.5 * (*nu + d) * std::log1p(q / *nu);
}

double product_student_t_log_density(const Vector& x, const StudentTParams& params) {
  params.validate();
  if (x.size() != params.location.size()) throw ParameterError("dimension mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const auto nu = params.dof.at(static_cast<std::size_t>(i));
    const double r = (x[i] - params.location[i]) / params.scale;
    const double lognorm = student_t_log_norm(nu, 1.0) - std::log(params.scale);
    total += nu ? lognorm - 0.5 * (*nu + 1.0) * std::log1p(r * r / *nu) : lognorm - 0.5 * r * r;
  }
  return total;
}

double t_variance_factor(std::optional<double> nu) {
  if (!nu) return 1.0;
  if (!(*nu > 2.0)) throw ParameterError("variance undefined for nu <= 2");
  return *nu / (*nu - 2.0);
}

}  // namespace htd
