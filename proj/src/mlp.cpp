#include "htd/mlp.hpp"

#include <cmath>

#include "htd/errors.hpp"

namespace htd {

std::size_t MlpShape::num_params() const {
  std::size_t total = 0;
  int prev = in_dim;
  for (int h : hidden) {
    total += static_cast<std::size_t>(h) * prev + h;
    prev = h;
  }
  total += static_cast<std::size_t>(out_dim) * prev + out_dim;
  return total;
}

Mlp::Mlp(MlpShape shape) : shape_(std::move(shape)) {
  if (shape_.in_dim <= 0 || shape_.out_dim <= 0) throw ParameterError("MLP dims must be positive");
  for (int h : shape_.hidden)
    if (h <= 0) throw ParameterError("MLP hidden sizes must be positive");
  params_ = Vector::Zero(static_cast<Eigen::Index>(shape_.num_params()));
  std::size_t off = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(layer_out(l)) * layer_in(l) + layer_out(l);
  }
}

int Mlp::layer_in(std::size_t layer) const {
  return layer == 0 ? shape_.in_dim : shape_.hidden[layer - 1];
}

int Mlp::layer_out(std::size_t layer) const {
  return layer < shape_.hidden.size() ? shape_.hidden[layer] : shape_.out_dim;
}

void Mlp::init_uniform(RngStream& rng) {
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer_in(l)));
    const std::size_t n = static_cast<std::size_t>(layer_out(l)) * layer_in(l) + layer_out(l);
    for (std::size_t k = 0; k < n; ++k)
      params_[static_cast<Eigen::Index>(offsets_[l] + k)] = bound * (2.0 * rng.uniform() - 1.0);
  }
}

void Mlp::forward(const Eigen::Ref<const Matrix>& in, Matrix& out, Cache* cache) const {
  if (in.rows() != shape_.in_dim) throw ParameterError("MLP input has wrong row count");
  const Eigen::Index batch = in.cols();
  if (cache) {
    cache->pre.resize(num_layers());
    cache->acts.resize(num_layers());
    cache->acts[0] = in;
  }
  Matrix cur = in;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const int ni = layer_in(l), no = layer_out(l);
    Eigen::Map<const Matrix> w(params_.data() + offsets_[l], no, ni);
    Eigen::Map<const Vector> b(params_.data() + offsets_[l] + static_cast<std::size_t>(no) * ni, no);
    Matrix z(no, batch);
    z.noalias() = w * cur;
    z.colwise() += b;
    if (l + 1 == num_layers()) {
      out = std::move(z);
      break;
    }
    // SiLU: z * sigmoid(z)
    Matrix a = (z.array() / (1.0 + (-z.array()).exp())).matrix();
    if (cache) {
      cache->pre[l] = std::move(z);
      cache->acts[l + 1] = a;
    }
    cur = std::move(a);
  }
}

void Mlp::backward(const Cache& cache, const Matrix& upstream, Vector& grad, Matrix* grad_in) const {
  if (grad.size() != params_.size()) grad = Vector::Zero(params_.size());
  Matrix delta = upstream;  // dL/dz of the current layer
  for (std::size_t li = num_layers(); li-- > 0;) {
    const int ni = layer_in(li), no = layer_out(li);
    const Matrix& a_in = cache.acts[li];
    Eigen::Map<Matrix> gw(grad.data() + offsets_[li], no, ni);
    Eigen::Map<Vector> gb(grad.data() + offsets_[li] + static_cast<std::size_t>(no) * ni, no);
    gw.noalias() += delta * a_in.transpose();
    gb += delta.rowwise().sum();
    if (li == 0 && !grad_in) break;
    Eigen::Map<const Matrix> w(params_.data() + offsets_[li], no, ni);
    Matrix back(ni, delta.cols());
    back.noalias() = w.transpose() * delta;
    if (li == 0) {
      *grad_in = std::move(back);
      break;
    }
    const auto z = cache.pre[li - 1].array();
    const auto s = 1.0 / (1.0 + (-z).exp());
    delta = (back.array() * (s * (1.0 + z * (1.0 - s)))).matrix();
  }
}

void adam_step(Vector& params, const Vector& grads, AdamState& st) {
  if (st.m.size() != params.size()) {
    st.m = Vector::Zero(params.size());
    st.v = Vector::Zero(params.size());
  }
  ++st.step;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grads;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  params.array() -= st.lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + st.eps);
}

}  // namespace htd
