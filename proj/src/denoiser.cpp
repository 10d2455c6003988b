#include "htd/denoiser.hpp"

#include <cmath>

#include "htd/errors.hpp"
#include "htd/student_t.hpp"

namespace htd {

double noise_variance(double sigma, std::optional<double> nu) {
  if (!nu) return sigma * sigma;
  return t_variance_factor(nu) * sigma * sigma;
}

PrecondCoeffs precondition_coeffs(double sigma, std::optional<double> nu, double sigma_data) {
  if (!(sigma >= 0.0)) throw ParameterError("sigma must be non-negative");
  if (!(sigma_data > 0.0)) throw ParameterError("sigma_data must be positive");
  const double sd2 = sigma_data * sigma_data;
  PrecondCoeffs c{};
  if (nu) {
    const double f = t_variance_factor(nu);
    const double s = f * sigma * sigma;
    c.c_in = 1.0 / std::sqrt(s + sd2);
    c.c_skip = sd2 / (s + sd2);
    c.c_out = std::sqrt(f) * sigma * sigma_data / std::sqrt(s + sd2);
  } else {
    const double s = sigma * sigma;
    c.c_in = 1.0 / std::sqrt(s + sd2);
    c.c_skip = sd2 / (s + sd2);
    c.c_out = sigma * sigma_data / std::sqrt(s + sd2);
  }
  c.c_noise = 0.25 * std::log(sigma);
  return c;
}

PrecondCoeffs edm_precondition_coeffs(double sigma, double sigma_data) {
  if (!(sigma >= 0.0)) throw ParameterError("sigma must be non-negative");
  if (!(sigma_data > 0.0)) throw ParameterError("sigma_data must be positive");
  const double var = sigma * sigma + sigma_data * sigma_data;
  return {sigma_data * sigma_data / var, sigma * sigma_data / std::sqrt(var), 1.0 / std::sqrt(var),
          0.25 * std::log(sigma)};
}

const char* to_string(PrecondKind k) {
  switch (k) {
    case PrecondKind::tedm: return "tedm";
    case PrecondKind::edm: return "edm";
    case PrecondKind::flow: return "flow";
  }
  return "?";
}

PrecondKind parse_precond_kind(const std::string& s) {
  if (s == "tedm") return PrecondKind::tedm;
  if (s == "edm") return PrecondKind::edm;
  if (s == "flow") return PrecondKind::flow;
  throw ConfigError("unknown preconditioner kind '" + s + "'");
}

Denoiser::Denoiser(int d, int cond_dim, std::vector<int> hidden, PrecondKind kind, DofSpec dof,
                   double sigma_data)
    : d_(d), cond_dim_(cond_dim), kind_(kind), dof_(std::move(dof)), sigma_data_(sigma_data) {
  if (d <= 0 || cond_dim < 0) throw ParameterError("bad denoiser dimensions");
  if (!(sigma_data > 0.0)) throw ParameterError("sigma_data must be positive");
  dof_.check_dim(static_cast<std::size_t>(d));
  if (kind_ == PrecondKind::tedm) dof_.require_greater(2.0, "Student-t preconditioning");
  if (kind_ == PrecondKind::edm && !dof_.is_gaussian())
    throw ParameterError("EDM preconditioning is Gaussian; dof must be infinite");
  MlpShape shape;
  shape.in_dim = d + 1 + cond_dim;
  shape.hidden = std::move(hidden);
  shape.out_dim = d;
  net_ = Mlp(std::move(shape));
}

BatchCoeffs Denoiser::coeffs(const Vector& sigma) const {
  const Eigen::Index n = sigma.size();
  BatchCoeffs c;
  c.c_skip.resize(n, d_);
  c.c_out.resize(n, d_);
  c.c_in.resize(n, d_);
  c.c_noise.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d_; ++j) {
      PrecondCoeffs k{};
      switch (kind_) {
        case PrecondKind::tedm:
          k = precondition_coeffs(sigma[i], dof_.at(static_cast<std::size_t>(j)), sigma_data_);
          break;
        case PrecondKind::edm:
          k = edm_precondition_coeffs(sigma[i], sigma_data_);
          break;
        case PrecondKind::flow:
          k = {0.0, 1.0, 1.0, sigma[i]};
          break;
      }
      c.c_skip(i, j) = k.c_skip;
      c.c_out(i, j) = k.c_out;
      c.c_in(i, j) = k.c_in;
      // At sigma = 0 the network term is multiplied by c_out = 0; keep its
      // input finite so that product stays 0.
      c.c_noise[i] = std::isfinite(k.c_noise) ? k.c_noise : 0.0;
    }
  }
  return c;
}

void Denoiser::forward(const SampleMatrix& x, const Vector& sigma, const SampleMatrix* cond,
                       SampleMatrix& out, Workspace* ws) const {
  const Eigen::Index n = x.rows();
  if (x.cols() != d_ || sigma.size() != n) throw ParameterError("denoiser input shape mismatch");
  if (cond_dim_ > 0 && (!cond || cond->rows() != n || cond->cols() != cond_dim_))
    throw ParameterError("denoiser conditioning shape mismatch");
  Workspace local;
  Workspace& w = ws ? *ws : local;
  w.coeffs = coeffs(sigma);
  w.input.resize(d_ + 1 + cond_dim_, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d_; ++j) w.input(j, i) = w.coeffs.c_in(i, j) * x(i, j);
    w.input(d_, i) = w.coeffs.c_noise[i];
    for (int k = 0; k < cond_dim_; ++k) w.input(d_ + 1 + k, i) = (*cond)(i, k);
  }
  net_.forward(w.input, w.output, ws ? &w.cache : nullptr);
  out.resize(n, d_);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < d_; ++j)
      out(i, j) = w.coeffs.c_skip(i, j) * x(i, j) + w.coeffs.c_out(i, j) * w.output(j, i);
}

void Denoiser::forward(const SampleMatrix& x, double sigma, const SampleMatrix* cond,
                       SampleMatrix& out) const {
  const Eigen::Index n = x.rows();
  if (x.cols() != d_) throw ParameterError("denoiser input shape mismatch");
  if (cond_dim_ > 0 && (!cond || cond->rows() != n || cond->cols() != cond_dim_))
    throw ParameterError("denoiser conditioning shape mismatch");
  // One sigma for the whole batch: coefficients per coordinate only.
  const BatchCoeffs c = coeffs(Vector::Constant(1, sigma));
  Matrix input(d_ + 1 + cond_dim_, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d_; ++j) input(j, i) = c.c_in(0, j) * x(i, j);
    input(d_, i) = c.c_noise[0];
    for (int k = 0; k < cond_dim_; ++k) input(d_ + 1 + k, i) = (*cond)(i, k);
  }
  Matrix f;
  net_.forward(input, f);
  out.resize(n, d_);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < d_; ++j) out(i, j) = c.c_skip(0, j) * x(i, j) + c.c_out(0, j) * f(j, i);
}

void Denoiser::backward(const Workspace& ws, const SampleMatrix& upstream, Vector& grad) const {
  const Eigen::Index n = upstream.rows();
  Matrix df(d_, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < d_; ++j) df(j, i) = ws.coeffs.c_out(i, j) * upstream(i, j);
  net_.backward(ws.cache, df, grad);
}

ChunkDenoiseFn bind_denoiser(const Denoiser& net, const SampleMatrix* cond) {
  return [&net, cond](const SampleMatrix& x, double sigma, std::size_t offset, SampleMatrix& out) {
    if (net.cond_dim() == 0) {
      net.forward(x, sigma, nullptr, out);
      return;
    }
    if (!cond) throw ParameterError("conditional denoiser needs conditioning rows");
    const SampleMatrix slice = cond->middleRows(static_cast<Eigen::Index>(offset), x.rows());
    net.forward(x, sigma, &slice, out);
  };
}

ChunkDenoiseFn unconditional(DenoiseFn fn) {
  return [fn = std::move(fn)](const SampleMatrix& x, double sigma, std::size_t, SampleMatrix& out) {
    fn(x, sigma, out);
  };
}

}  // namespace htd
