#pragma once

#include <vector>

#include "ttd/autodiff.hpp"
#include "ttd/rng.hpp"

namespace ttd {

enum class Activation { Relu, Tanh };

// Fully connected network.  Parameters are graph leaves when trainable,
// constants otherwise (target networks still differentiate w.r.t. inputs).
struct MlpParams {
  struct Layer {
    Node weight;  // in x out
    Node bias;    // 1 x out
  };

  std::vector<Layer> layers;
  Activation hidden_act = Activation::Relu;
  bool tanh_output = false;
  double output_scale = 1.0;
  bool trainable = true;

  // sizes = {in, h1, ..., out}; weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static MlpParams create(const std::vector<std::int64_t>& sizes, Activation act, Rng& rng,
                          bool tanh_output = false, double output_scale = 1.0);

  std::int64_t input_dim() const { return layers.front().weight.value().rows(); }
  std::int64_t output_dim() const { return layers.back().weight.value().cols(); }

  // x: batch x in -> batch x out.
  Node forward(const Node& x) const;

  // Flat parameter list, weights and biases interleaved per layer.
  std::vector<Node> params() const;
  std::vector<Tensor> param_values() const;
  // Rebuilds leaves (or constants when not trainable) from the given values.
  void set_param_values(const std::vector<Tensor>& values);

  // Deep copy with constant (non-trainable) parameters; for target networks.
  MlpParams target_copy() const;

  std::int64_t param_count() const;
};

// target <- (1 - tau) * target + tau * online, elementwise per tensor.
void soft_update(MlpParams& target, const MlpParams& online, double tau);

// Adaptive-moment optimizer over one network's parameters.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(MlpParams& net, const std::vector<Tensor>& grads);

  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace ttd
