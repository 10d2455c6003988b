#pragma once

#include <vector>

#include "htd/rng.hpp"
#include "htd/types.hpp"

namespace htd {

enum class Activation { silu };

struct MlpShape {
  int in_dim = 0;
  std::vector<int> hidden;
  int out_dim = 0;
  Activation activation = Activation::silu;

  std::size_t num_params() const;
  bool operator==(const MlpShape&) const = default;
};

// Fully connected network. All parameters live in one flat vector, layer by
// layer: W_l (out x in, column-major) followed by b_l.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpShape shape);

  const MlpShape& shape() const { return shape_; }
  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  std::size_t num_layers() const { return shape_.hidden.size() + 1; }

  // W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), b likewise.
  void init_uniform(RngStream& rng);

  // Per-layer activations kept for backprop. acts[0] is the input.
  struct Cache {
    std::vector<Matrix> pre;
    std::vector<Matrix> acts;
  };

  // in: in_dim x batch, out: out_dim x batch.
  void forward(const Eigen::Ref<const Matrix>& in, Matrix& out, Cache* cache = nullptr) const;
  // Adds dL/dparams to `grad` given upstream = dL/dout. Optionally writes
  // dL/din.
  void backward(const Cache& cache, const Matrix& upstream, Vector& grad,
                Matrix* grad_in = nullptr) const;

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  int layer_in(std::size_t layer) const;
  int layer_out(std::size_t layer) const;

  MlpShape shape_;
  Vector params_;
  std::vector<std::size_t> offsets_;
};

struct AdamState {
  Vector m;
  Vector v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(Vector& params, const Vector& grads, AdamState& state);

}  // namespace htd
