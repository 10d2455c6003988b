#include "htd/schedule_design.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "htd/errors.hpp"
#include "htd/student_t.hpp"

namespace htd {
namespace {

void check(const DataMoments& m, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be positive");
  if (!(m.mean_sq_norm >= 0.0)) throw ParameterError("mean squared norm must be non-negative");
}

void check_nu(double nu) {
  if (!(nu > 2.0)) throw ParameterError("schedule design needs nu > 2");
}

}  // namespace

DataMoments DataMoments::from_samples(const SampleMatrix& x, bool with_matrix) {
  if (x.rows() == 0) throw ParameterError("no samples");
  DataMoments m;
  m.d = static_cast<int>(x.cols());
  m.mean_sq_norm = x.rowwise().squaredNorm().mean();
  if (with_matrix) m.second_moment = Matrix(x.transpose() * x / static_cast<double>(x.rows()));
  return m;
}

double sigma_max_gaussian(const DataMoments& m, double lambda) {
  check(m, lambda);
  return std::sqrt(lambda * m.mean_sq_norm / 2.0);
}

double gaussian_design_objective(double sigma_sq, const DataMoments& m, double lambda) {
  return sigma_sq + lambda * m.mean_sq_norm / (2.0 * sigma_sq);
}

double mi_at_optimum_gaussian(const DataMoments& m, double lambda) {
  return m.mean_sq_norm / (2.0 * sigma_max_gaussian(m, lambda));
}

double lambda_from_mi(double target_mi, const DataMoments& m) {
  if (!(target_mi > 0.0)) throw ParameterError("target mutual information must be positive");
  return m.mean_sq_norm / (2.0 * target_mi * target_mi);
}

double student_t_design_factor(double nu, double d) {
  check_nu(nu);
  const double g = -2.0 / (nu + d);
  const double r = g / (1.0 + g);
  const double log_f = -std::log(-nu * g) + r * student_t_log_norm(nu, d) - r * std::log1p(d / (nu - 2.0));
  return std::exp(log_f);
}

double student_t_design_exponent(double nu, double d) {
  return (nu - 2.0 + d) / (2.0 * (nu - 2.0) + d);
}

double sigma_max_student_t(const DataMoments& m, double lambda, double nu) {
  check(m, lambda);
  check_nu(nu);
  const double d = m.d;
  const double base = lambda * student_t_design_factor(nu, d) * ((nu - 2.0) / (nu - 2.0 + d)) * m.mean_sq_norm;
  return std::pow(base, student_t_design_exponent(nu, d));
}

double student_t_design_objective(double sigma_sq, const DataMoments& m, double lambda, double nu) {
  check_nu(nu);
  const double d = m.d;
  const double e = -(nu - 2.0) / (nu - 2.0 + d);
  return sigma_sq + lambda * student_t_design_factor(nu, d) * m.mean_sq_norm * std::pow(sigma_sq, e);
}

Matrix symmetric_sqrt(const Matrix& R, double floor) {
  if (R.rows() != R.cols()) throw ParameterError("matrix square root needs a square matrix");
  if (!R.isApprox(R.transpose(), 1e-10)) throw ParameterError("matrix square root needs a symmetric matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> es(R);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const Vector ev = es.eigenvalues().cwiseMax(floor).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Matrix correlated_sigma(const Matrix& R, double lambda) {
  if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
  return std::sqrt(lambda) * symmetric_sqrt(R);
}

double correlated_objective(const Matrix& sigma, const Matrix& R, double lambda) {
  return sigma.trace() + lambda * sigma.ldlt().solve(R).trace();
}

Matrix correlated_stationarity(const Matrix& sigma, const Matrix& R, double lambda) {
  const Matrix inv = sigma.inverse();
  return Matrix::Identity(sigma.rows(), sigma.cols()) - lambda * inv * R * inv;
}

double pcp_pi_mean(double d_range, double alpha, double beta) {
  const double off = d_range - 1.0;
  return -1.2 + alpha * std::exp(-beta * off * off);
}

double pcp_range_offset(double pi_mean, double alpha, double beta) {
  if (!(beta > 0.0)) throw ParameterError("beta must be positive");
  const double r = (pi_mean + 1.2) / alpha;
  if (!(r > 0.0 && r <= 1.0)) throw ParameterError("pi_mean not reachable for this alpha");
  return std::sqrt(-std::log(r) / beta);
}

}  // namespace htd
