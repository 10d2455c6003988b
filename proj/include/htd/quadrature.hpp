#pragma once

#include <functional>

namespace htd {

struct QuadOptions {
  double abs_tol = 1e-14;
  double rel_tol = 1e-12;
  int max_intervals = 4000;
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Globally adaptive 15-point Gauss-Kronrod on [a, b].
QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     const QuadOptions& opt = {});

// Integral over the real line via x = center + scale * tan(u), which turns
// polynomial tails into bounded integrands on (-pi/2, pi/2).
QuadResult integrate_real_line(const std::function<double(double)>& f, double center = 0.0,
                               double scale = 1.0, const QuadOptions& opt = {});

// Estimated power-law decay exponent p in f(x) ~ |x|^-p on each side,
// measured between |x| = 1e6 and 1e9 relative to `center`. Returns the
// smaller of the two; +inf when the integrand vanishes (faster than any power).
double tail_decay_exponent(const std::function<double(double)>& f, double center = 0.0);

}  // namespace htd
