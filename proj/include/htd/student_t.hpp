#pragma once

#include <optional>

#include "htd/dof.hpp"
#include "htd/rng.hpp"
#include "htd/types.hpp"

namespace htd {

struct StudentTParams {
  Vector location;
  double scale = 1.0;  // isotropic: Sigma = scale^2 I
  DofSpec dof;

  void validate() const;
};

// Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 via the U^(1/shape) boost.
double sample_gamma(double shape, RngStream& rng);

// kappa ~ chi^2(nu) / nu, drawn as Gamma(nu/2, 2) / nu so nu may be fractional.
double sample_chi2_scaled(double nu, RngStream& rng);

// Raw draws behind one Student-t vector: z ~ N(0, I) and one kappa per
// finite-dof group (a single kappa for scalar dof, one per coordinate for
// per-dimension dof; kappa = 1 where the dof is infinite).
struct StudentTDraw {
  Vector z;
  Vector kappa;  // size d; entries equal for scalar dof
};

// Draw order: all d normals first, then the kappas. The normals are thus
// the same as a plain Gaussian draw from the same stream.
StudentTDraw draw_student_t_raw(std::size_t d, const DofSpec& dof, RngStream& rng);

// Writes z / sqrt(kappa) into `out` (size d), the unit-scale centred noise.
void student_t_noise(const DofSpec& dof, RngStream& rng, double* out, std::size_t d);
Vector student_t_noise(std::size_t d, const DofSpec& dof, RngStream& rng);

// location + scale * z / sqrt(kappa)
Vector sample_student_t(const StudentTParams& params, RngStream& rng);

// log C_{nu,d} = lgamma((nu+d)/2) - lgamma(nu/2) - d/2 log(nu pi); Gaussian
// normaliser -d/2 log(2 pi) when nu is infinite.
double student_t_log_norm(std::optional<double> nu, double d);

// Multivariate log density of t_d(location, scale^2 I, nu). Scalar dof only.
double student_t_log_density(const Vector& x, const StudentTParams& params);

// Sum of 1-d log densities, one per coordinate; the density of the
// per-dimension construction. Accepts scalar dof too (then it is the
// product of identical 1-d t's, not the multivariate t).
double product_student_t_log_density(const Vector& x, const StudentTParams& params);

// Variance factor nu/(nu-2) (1 for infinite nu). Throws for nu <= 2.
double t_variance_factor(std::optional<double> nu);

}  // namespace htd
