#include "ttd/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace ttd {

MlpParams MlpParams::create(const std::vector<std::int64_t>& sizes, Activation act, Rng& rng,
                            bool tanh_output, double output_scale) {
  if (sizes.size() < 2) throw std::invalid_argument("MlpParams: need at least in/out sizes");
  MlpParams net;
  net.hidden_act = act;
  net.tanh_output = tanh_output;
  net.output_scale = output_scale;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    Layer layer;
    layer.weight = leaf(rng.uniform_tensor({sizes[l], sizes[l + 1]}, -bound, bound));
    layer.bias = leaf(rng.uniform_tensor({1, sizes[l + 1]}, -bound, bound));
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Node MlpParams::forward(const Node& x) const {
  Node h = x;
  const std::int64_t batch = x.value().rows();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = add(matmul(h, layers[l].weight), broadcast_rows(layers[l].bias, batch));
    const bool last = (l + 1 == layers.size());
    if (!last) {
      h = hidden_act == Activation::Relu ? relu(h) : tanh_(h);
    } else if (tanh_output) {
      h = tanh_(h);
    }
  }
  if (output_scale != 1.0) h = mul_scalar(h, output_scale);
  return h;
}

std::vector<Node> MlpParams::params() const {
  std::vector<Node> out;
  out.reserve(layers.size() * 2);
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::vector<Tensor> MlpParams::param_values() const {
  std::vector<Tensor> out;
  out.reserve(layers.size() * 2);
  for (const auto& l : layers) {
    out.push_back(l.weight.value());
    out.push_back(l.bias.value());
  }
  return out;
}

void MlpParams::set_param_values(const std::vector<Tensor>& values) {
  if (values.size() != layers.size() * 2)
    throw std::invalid_argument("set_param_values: count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!values[2 * l].same_shape(layers[l].weight.value()) ||
        !values[2 * l + 1].same_shape(layers[l].bias.value()))
      throw std::invalid_argument("set_param_values: shape mismatch at layer " + std::to_string(l));
    layers[l].weight = trainable ? leaf(values[2 * l]) : constant(values[2 * l]);
    layers[l].bias = trainable ? leaf(values[2 * l + 1]) : constant(values[2 * l + 1]);
  }
}

MlpParams MlpParams::target_copy() const {
  MlpParams t = *this;
  t.trainable = false;
  t.set_param_values(param_values());
  return t;
}

std::int64_t MlpParams::param_count() const {
  std::int64_t n = 0;
  for (const auto& l : layers) n += l.weight.value().size() + l.bias.value().size();
  return n;
}

namespace {

// Parameter tensors mutated in place; callers must not hold graphs built
// before the write (each training step rebuilds its graph anyway).
std::vector<Tensor*> param_tensors(MlpParams& net) {
  std::vector<Tensor*> out;
  out.reserve(net.layers.size() * 2);
  for (auto& l : net.layers) {
    out.push_back(&l.weight.get()->value);
    out.push_back(&l.bias.get()->value);
  }
  return out;
}

}  // namespace

void soft_update(MlpParams& target, const MlpParams& online, double tau) {
  auto tv = param_tensors(target);
  auto ov = param_tensors(const_cast<MlpParams&>(online));
  if (tv.size() != ov.size()) throw std::invalid_argument("soft_update: layer count mismatch");
  for (std::size_t i = 0; i < tv.size(); ++i) {
    if (!tv[i]->same_shape(*ov[i])) throw std::invalid_argument("soft_update: shape mismatch");
    double* t = tv[i]->ptr();
    const double* o = ov[i]->ptr();
    for (std::int64_t j = 0; j < tv[i]->size(); ++j)
      t[j] = (1.0 - tau) * t[j] + tau * o[j];
  }
}

void Adam::step(MlpParams& net, const std::vector<Tensor>& grads) {
  auto values = param_tensors(net);
  if (grads.size() != values.size()) throw std::invalid_argument("Adam::step: grad count mismatch");
  if (m_.empty()) {
    for (const Tensor* v : values) {
      m_.push_back(Tensor::zeros(v->shape()));
      v_.push_back(Tensor::zeros(v->shape()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < values.size(); ++i) {
    double* w = values[i]->ptr();
    double* m = m_[i].ptr();
    double* v = v_[i].ptr();
    const double* g = grads[i].ptr();
    for (std::int64_t j = 0; j < values[i]->size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
  }
}

}  // namespace ttd
