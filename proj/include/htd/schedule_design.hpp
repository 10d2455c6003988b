#pragma once

#include <optional>

#include "htd/types.hpp"

namespace htd {

struct DataMoments {
  double mean_sq_norm = 0.0;  // (1/N) sum ||x_i||^2
  int d = 0;
  std::optional<Matrix> second_moment;  // E[x x^T]

  static DataMoments from_samples(const SampleMatrix& x, bool with_matrix = false);
};

// Minimiser of sigma^2 + lambda E[KL(N(x, sigma^2 I) || N(0, sigma^2 I))]
// = sigma^2 + lambda E||x||^2 / (2 sigma^2): sigma^2 = sqrt(lambda E||x||^2 / 2).
// The 1/2 of the Gaussian KL is kept so that this is the nu -> infinity
// limit of sigma_max_student_t.
double sigma_max_gaussian(const DataMoments& m, double lambda);
// The Lagrangian above as a function of s = sigma^2.
double gaussian_design_objective(double sigma_sq, const DataMoments& m, double lambda);
// Mutual-information level at the optimum: E||x||^2 / (2 sigma^2).
double mi_at_optimum_gaussian(const DataMoments& m, double lambda);
// lambda giving a target level I*: E||x||^2 / (2 I*^2).
double lambda_from_mi(double target_mi, const DataMoments& m);

// f(nu, d) = -(1/(nu gamma)) C^{gamma/(1+gamma)} (1 + d/(nu-2))^{-gamma/(1+gamma)}
double student_t_design_factor(double nu, double d);
// (nu-2+d) / (2(nu-2)+d)
double student_t_design_exponent(double nu, double d);
// [lambda f (nu-2)/(nu-2+d) E||x||^2]^{(nu-2+d)/(2(nu-2)+d)}
double sigma_max_student_t(const DataMoments& m, double lambda, double nu);
// s + lambda f E||x||^2 s^{-(nu-2)/(nu-2+d)}, the Lagrangian with the
// closed-form divergence substituted.
double student_t_design_objective(double sigma_sq, const DataMoments& m, double lambda, double nu);

// Sigma* = sqrt(lambda) R^{1/2}, symmetric eigendecomposition with
// eigenvalues floored at 1e-12.
Matrix correlated_sigma(const Matrix& R, double lambda);
Matrix symmetric_sqrt(const Matrix& R, double floor = 1e-12);
double correlated_objective(const Matrix& sigma, const Matrix& R, double lambda);
// I - lambda Sigma^-1 R Sigma^-1
Matrix correlated_stationarity(const Matrix& sigma, const Matrix& R, double lambda);

// pi_mean = -1.2 + alpha exp(-beta (d_range - 1)^2)
double pcp_pi_mean(double d_range, double alpha, double beta);
// |d_range - 1| that produces pi_mean; throws if unreachable.
double pcp_range_offset(double pi_mean, double alpha, double beta);

}  // namespace htd
