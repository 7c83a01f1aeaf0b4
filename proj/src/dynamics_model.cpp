#include "ttd/dynamics_model.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace ttd {

namespace {

constexpr double kLogVarMin = -18.420680743952367;  // ln 1e-8
constexpr double kLogVarMax = 4.605170185988092;    // ln 1e2
constexpr double kLn2Pi = 1.8378770664093453;

// Smooth two-sided clamp of raw log-variance into (kLogVarMin, kLogVarMax).
Node squash_log_var(const Node& raw) {
  Node upper = add_scalar(neg(softplus(add_scalar(neg(raw), kLogVarMax))), kLogVarMax);
  return add_scalar(softplus(add_scalar(upper, -kLogVarMin)), kLogVarMin);
}

}  // namespace

ModelBatch ModelBatch::from_transitions(const std::vector<Transition>& ts) {
  if (ts.empty()) throw std::invalid_argument("ModelBatch: empty transition list");
  std::int64_t n = static_cast<std::int64_t>(ts.size());
  std::int64_t ds = ts.front().s.cols(), da = ts.front().a.cols();
  ModelBatch b{Tensor::zeros({n, ds}), Tensor::zeros({n, da}), Tensor::zeros({n, 1}),
               Tensor::zeros({n, ds})};
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& t = ts[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < ds; ++j) {
      b.s.at(i, j) = t.s(0, j);
      b.s_next.at(i, j) = t.s_next(0, j);
    }
    for (std::int64_t j = 0; j < da; ++j) b.a.at(i, j) = t.a(0, j);
    b.r.at(i, 0) = t.r;
  }
  return b;
}

Normalizer Normalizer::fit(const Tensor& rows) {
  std::int64_t n = rows.rows(), d = rows.cols();
  Normalizer nm{Tensor::zeros({1, d}), Tensor::full({1, d}, 1.0)};
  if (n == 0) return nm;
  for (std::int64_t j = 0; j < d; ++j) {
    double m = 0;
    for (std::int64_t i = 0; i < n; ++i) m += rows(i, j);
    m /= static_cast<double>(n);
    double v = 0;
    for (std::int64_t i = 0; i < n; ++i) v += (rows(i, j) - m) * (rows(i, j) - m);
    v /= static_cast<double>(n);
    nm.mean.at(0, j) = m;
    nm.std.at(0, j) = std::max(std::sqrt(v), 1e-6);
  }
  return nm;
}

Normalizer Normalizer::identity(std::int64_t d) {
  return {Tensor::zeros({1, d}), Tensor::full({1, d}, 1.0)};
}

Node Normalizer::apply(const Node& x) const {
  std::int64_t n = x.value().rows();
  Node m = broadcast_rows(constant(mean), n);
  Node s = broadcast_rows(constant(std), n);
  return div(sub(x, m), s);
}

GaussianDynamicsEnsemble::GaussianDynamicsEnsemble(std::int64_t state_dim,
                                                   std::int64_t action_dim,
                                                   std::vector<std::int64_t> hidden, Rng& rng,
                                                   ModelTrainConfig cfg)
    : state_dim_(state_dim),
      action_dim_(action_dim),
      cfg_(cfg),
      in_norm_(Normalizer::identity(state_dim + action_dim)) {
  std::vector<std::int64_t> sizes;
  sizes.push_back(state_dim + action_dim);
  for (auto h : hidden) sizes.push_back(h);
  sizes.push_back(2 * state_dim);
  for (int i = 0; i < kMembers; ++i) {
    Rng member_rng = rng.fork(static_cast<std::uint64_t>(i) + 101);
    nets_.push_back(MlpParams::create(sizes, Activation::Relu, member_rng));
    opts_.emplace_back(cfg_.lr);
  }
}

GaussianDynamicsEnsemble::MeanLogVar GaussianDynamicsEnsemble::mean_log_var(
    int member, const Node& s, const Node& a) const {
  if (s.value().cols() != state_dim_ || a.value().cols() != action_dim_)
    throw std::invalid_argument("mean_log_var: input dimension mismatch");
  Node x = concat_cols(s, a);
  if (cfg_.normalize_inputs) x = in_norm_.apply(x);
  Node out = nets_[static_cast<std::size_t>(member)].forward(x);
  Node mu = add(s, slice_cols(out, 0, state_dim_));  // predict the state change
  Node lv = squash_log_var(slice_cols(out, state_dim_, 2 * state_dim_));
  return {mu, lv};
}

void GaussianDynamicsEnsemble::fit_normalizer(const ModelBatch& data) {
  if (!cfg_.normalize_inputs) return;
  Tensor joined = Tensor::zeros({data.size(), state_dim_ + action_dim_});
  for (std::int64_t i = 0; i < data.size(); ++i) {
    for (std::int64_t j = 0; j < state_dim_; ++j) joined.at(i, j) = data.s(i, j);
    for (std::int64_t j = 0; j < action_dim_; ++j)
      joined.at(i, state_dim_ + j) = data.a(i, j);
  }
  in_norm_ = Normalizer::fit(joined);
}

std::vector<Tensor> GaussianDynamicsEnsemble::all_param_values() const {
  std::vector<Tensor> out;
  for (const auto& net : nets_) {
    auto vals = net.param_values();
    out.insert(out.end(), vals.begin(), vals.end());
  }
  out.push_back(in_norm_.mean);
  out.push_back(in_norm_.std);
  return out;
}

void GaussianDynamicsEnsemble::set_all_param_values(const std::vector<Tensor>& values) {
  std::size_t pos = 0;
  for (auto& net : nets_) {
    std::size_t n = net.params().size();
    if (pos + n > values.size())
      throw std::invalid_argument("set_all_param_values: too few tensors");
    net.set_param_values({values.begin() + static_cast<std::ptrdiff_t>(pos),
                          values.begin() + static_cast<std::ptrdiff_t>(pos + n)});
    pos += n;
  }
  if (pos + 2 != values.size())
    throw std::invalid_argument("set_all_param_values: tensor count mismatch");
  in_norm_.mean = values[pos];
  in_norm_.std = values[pos + 1];
}

RewardModel::RewardModel(std::int64_t state_dim, std::int64_t action_dim,
                         std::vector<std::int64_t> hidden, Rng& rng, double lr)
    : net_(MlpParams()), opt_(lr), in_norm_(Normalizer::identity(state_dim + action_dim)) {
  std::vector<std::int64_t> sizes;
  sizes.push_back(state_dim + action_dim);
  for (auto h : hidden) sizes.push_back(h);
  sizes.push_back(1);
  net_ = MlpParams::create(sizes, Activation::Relu, rng);
}

Node RewardModel::forward(const Node& s, const Node& a) const {
  Node x = concat_cols(s, a);
  if (normalize_) x = in_norm_.apply(x);
  return net_.forward(x);
}

Node RewardModel::mse(const ModelBatch& batch) const {
  return mean(square(sub(forward(constant(batch.s), constant(batch.a)), constant(batch.r))));
}

void RewardModel::fit_normalizer(const ModelBatch& data) {
  std::int64_t ds = data.s.cols(), da = data.a.cols();
  Tensor joined = Tensor::zeros({data.size(), ds + da});
  for (std::int64_t i = 0; i < data.size(); ++i) {
    for (std::int64_t j = 0; j < ds; ++j) joined.at(i, j) = data.s(i, j);
    for (std::int64_t j = 0; j < da; ++j) joined.at(i, ds + j) = data.a(i, j);
  }
  in_norm_ = Normalizer::fit(joined);
}

Node model_nll(const GaussianDynamicsEnsemble& ensemble, int member,
               const ModelBatch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("model_nll: empty batch");
  auto ml = ensemble.mean_log_var(member, constant(batch.s), constant(batch.a));
  Node diff = sub(constant(batch.s_next), ml.mu);
  Node per_elem =
      add(add_scalar(ml.log_var, kLn2Pi), mul(square(diff), exp_(neg(ml.log_var))));
  return mul_scalar(sum(per_elem), 0.5 / static_cast<double>(batch.size()));
}

Prediction predict(const GaussianDynamicsEnsemble& ensemble, const RewardModel& reward,
                   int member, const Node& s, const Node& a, const Tensor& noise) {
  if (member < 0 || member >= ensemble.members())
    throw std::invalid_argument("predict: member index out of range");
  auto ml = ensemble.mean_log_var(member, s, a);
  if (!noise.same_shape(ml.mu.value()))
    throw std::invalid_argument("predict: noise shape mismatch");
  Node sigma = exp_(mul_scalar(ml.log_var, 0.5));
  Node s_hat = add(ml.mu, mul(sigma, constant(noise)));
  return {reward.forward(s, a), s_hat};
}

ModelLossTrace train_models(GaussianDynamicsEnsemble& ensemble, RewardModel& reward,
                            const std::vector<Transition>& data, std::int64_t steps,
                            Rng& rng, bool fit_normalizers, std::int64_t reward_per_step) {
  if (data.empty()) throw std::invalid_argument("train_models: empty dataset");
  if (reward_per_step < 1)
    throw std::invalid_argument("train_models: reward_per_step must be >= 1");
  ModelBatch full = ModelBatch::from_transitions(data);
  if (fit_normalizers) {
    ensemble.fit_normalizer(full);
    reward.fit_normalizer(full);
  }

  std::int64_t bsz = std::min<std::int64_t>(ensemble.config().batch_size, full.size());
  std::int64_t ds = full.s.cols(), da = full.a.cols();
  ModelLossTrace trace;

  auto sample_batch = [&](Rng& r) {
    ModelBatch b{Tensor::zeros({bsz, ds}), Tensor::zeros({bsz, da}), Tensor::zeros({bsz, 1}),
                 Tensor::zeros({bsz, ds})};
    for (std::int64_t i = 0; i < bsz; ++i) {
      std::int64_t k = static_cast<std::int64_t>(r.below(static_cast<std::uint64_t>(full.size())));
      for (std::int64_t j = 0; j < ds; ++j) {
        b.s.at(i, j) = full.s(k, j);
        b.s_next.at(i, j) = full.s_next(k, j);
      }
      for (std::int64_t j = 0; j < da; ++j) b.a.at(i, j) = full.a(k, j);
      b.r.at(i, 0) = full.r(k, 0);
    }
    return b;
  };

  for (std::int64_t step = 0; step < steps; ++step) {
    double nll_sum = 0;
    for (int m = 0; m < ensemble.members(); ++m) {
      ModelBatch b = sample_batch(rng);
      Node loss = model_nll(ensemble, m, b);
      auto grads = gradient(loss, ensemble.member_net(m).params());
      ensemble.member_opt(m).step(ensemble.member_net(m), grads);
      nll_sum += loss.value().item();
    }
    double rmse = 0;
    for (std::int64_t k = 0; k < reward_per_step; ++k) {
      ModelBatch rb = sample_batch(rng);
      Node rloss = reward.mse(rb);
      auto rgrads = gradient(rloss, reward.net().params());
      reward.opt().step(reward.net(), rgrads);
      rmse = rloss.value().item();
    }

    trace.nll.push_back(nll_sum / ensemble.members());
    trace.reward_mse.push_back(rmse);
  }
  return trace;
}

void save_tensors(const std::string& path, const std::vector<Tensor>& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_tensors: cannot open " + path);
  f.write("TTD1", 4);
  std::uint64_t count = tensors.size();
  f.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& t : tensors) {
    std::uint64_t rank = static_cast<std::uint64_t>(t.rank());
    f.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    for (auto e : t.shape()) {
      std::uint64_t ext = static_cast<std::uint64_t>(e);
      f.write(reinterpret_cast<const char*>(&ext), sizeof(ext));
    }
    f.write(reinterpret_cast<const char*>(t.ptr()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.size())));
  }
  if (!f) throw std::runtime_error("save_tensors: write failed for " + path);
}

std::vector<Tensor> load_tensors(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_tensors: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "TTD1")
    throw std::runtime_error("load_tensors: bad magic in " + path);
  std::uint64_t count = 0;
  f.read(reinterpret_cast<char*>(&count), sizeof(count));
  std::vector<Tensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t rank = 0;
    f.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    std::vector<std::int64_t> shape;
    for (std::uint64_t r = 0; r < rank; ++r) {
      std::uint64_t ext = 0;
      f.read(reinterpret_cast<char*>(&ext), sizeof(ext));
      shape.push_back(static_cast<std::int64_t>(ext));
    }
    std::vector<double> data(static_cast<std::size_t>(shape_product(shape)));
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(sizeof(double) * data.size()));
    if (!f) throw std::runtime_error("load_tensors: truncated file " + path);
    out.emplace_back(std::move(shape), std::move(data));
  }
  return out;
}

}  // namespace ttd
