#pragma once

#include <functional>

#include "htd/quadrature.hpp"
#include "htd/student_t.hpp"

namespace htd {

using Density1d = std::function<double(double)>;

struct GammaParams {
  double gamma;

  // gamma = -2 / (nu + d)
  static GammaParams from_dof(double nu, double d);
  void validate() const;
};

// Closed-form gamma-power divergence D_gamma(q || p) between two Student-t
// distributions sharing a scalar nu, with gamma = -2/(nu+d). Evaluated in log
// space. Diagonal covariances given as per-coordinate variances.
double gamma_divergence_student_t_diag(const Vector& mu0, const Vector& var0, const Vector& mu1,
                                       const Vector& var1, double nu);
double gamma_divergence_student_t(const StudentTParams& q, const StudentTParams& p);

// ||p||_{1+gamma} = (int p^{1+gamma})^{1/(1+gamma)}
double gamma_power_norm(const Density1d& p, double gamma, double center = 0.0,
                        double scale = 1.0);
// H_gamma(p) = -||p||_{1+gamma}
double gamma_entropy_quadrature(const Density1d& p, double gamma, double center = 0.0,
                                double scale = 1.0);
// C_gamma(q, p) = -int q (p / ||p||_{1+gamma})^gamma
double gamma_cross_entropy_quadrature(const Density1d& q, const Density1d& p, double gamma,
                                      double center = 0.0, double scale = 1.0);
// (1/gamma) [C_gamma(q, p) - H_gamma(q)]
double gamma_divergence_quadrature(const Density1d& q, const Density1d& p, double gamma,
                                   double center = 0.0, double scale = 1.0);
double kl_divergence_quadrature(const Density1d& q, const Density1d& p, double center = 0.0,
                                double scale = 1.0);

// A 1-d location family p(x; theta) with its theta-score d/dtheta log p.
struct LocationFamily {
  std::function<double(double x, double theta)> density;
  std::function<double(double x, double theta)> dlog_dtheta;
};
LocationFamily student_t_location_family(double scale, double nu);
LocationFamily gaussian_location_family(double scale);

struct GradientCheck {
  double lhs;  // central difference of D_gamma[q || p_theta] in theta
  double rhs;  // -int q (p/||p||)^gamma (dlog p - E_{p~}[dlog p]), p~ prop. to p^{1+gamma}
};
GradientCheck gamma_gradient_identity_check(const LocationFamily& family, const Density1d& q,
                                            double theta, double gamma, double h = 1e-5);

}  // namespace htd
