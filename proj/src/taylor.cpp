#include "ttd/taylor.hpp"

#include <cmath>
#include <stdexcept>

namespace ttd {

namespace {

constexpr double kCosineEps = 1e-8;

Tensor rowwise_norm(const Tensor& m) {
  Tensor out = Tensor::zeros({m.rows(), 1});
  for (std::int64_t i = 0; i < m.rows(); ++i) {
    double acc = 0;
    for (std::int64_t j = 0; j < m.cols(); ++j) acc += m(i, j) * m(i, j);
    out.at(i, 0) = std::sqrt(acc);
  }
  return out;
}

// Rowwise similarity between the critic's input gradient (graph node) and the
// detached TD-error input gradient.  In cosine mode the denominator norms are
// detached as well, so parameter gradients flow through the numerator only.
Node gradient_similarity(const Node& dq, const Tensor& dd, Similarity mode) {
  Node num = rowwise_sum(mul(dq, constant(dd)));
  if (mode == Similarity::Dot) return num;
  Node qn = stopgrad(sqrt_(rowwise_sum(square(dq))));
  Node den = maximum_scalar(mul(qn, constant(rowwise_norm(dd))), kCosineEps);
  return div(num, den);
}

// Shared objective whose parameter gradient is the (negated) update direction:
// mean[ delta_detached * Q ] plus the weighted similarity terms.
Node expansion_objective(const MlpParams& online, const TargetSet& targets,
                         const ModelFn& model, const Node& mu_s, const Node& mu_a,
                         const ExpansionConfig& cfg, Similarity mode, Tensor* delta_out) {
  Prediction pred = model(mu_s, mu_a);
  Node delta = td_delta(online, targets, pred, mu_s, mu_a, cfg.gamma);
  Tensor delta_val = delta.value();
  if (delta_out) *delta_out = delta_val;

  Node q = critic_forward(online, mu_s, mu_a);
  Node obj = mean(mul(constant(delta_val), q));

  double la = cfg.effective_lambda_a(), ls = cfg.effective_lambda_s();
  if (la > 0 || ls > 0) {
    std::vector<Tensor> dd;
    {
      // TD-error input gradients are constants of the loss; a detached
      // backward pass avoids building throwaway graph.
      dd = gradient(sum(delta), {mu_s, mu_a});
    }
    auto dq = gradient_nodes(sum(q), {mu_s, mu_a});
    if (la > 0) obj = obj + mul_scalar(mean(gradient_similarity(dq[1], dd[1], mode)), la);
    if (ls > 0) obj = obj + mul_scalar(mean(gradient_similarity(dq[0], dd[0], mode)), ls);
  }
  return obj;
}

}  // namespace

void ExpansionConfig::validate() const {
  if (!(lambda_a >= 0) || !std::isfinite(lambda_a))
    throw std::invalid_argument("ExpansionConfig: lambda_a must be finite and >= 0");
  if (!(lambda_s >= 0) || !std::isfinite(lambda_s))
    throw std::invalid_argument("ExpansionConfig: lambda_s must be finite and >= 0");
  if (!(gamma >= 0 && gamma <= 1))
    throw std::invalid_argument("ExpansionConfig: gamma must lie in [0, 1]");
}

Node critic_forward(const MlpParams& critic, const Node& s, const Node& a) {
  return critic.forward(concat_cols(s, a));
}

Node td_delta(const MlpParams& online, const TargetSet& targets, const Prediction& pred,
              const Node& mu_s, const Node& mu_a, double gamma) {
  if (!targets.critic1 || !targets.actor)
    throw std::invalid_argument("td_delta: target critic1 and actor are required");
  Node a_next = targets.actor->forward(pred.s_next);
  Node boot = critic_forward(*targets.critic1, pred.s_next, a_next);
  if (targets.critic2)
    boot = minimum(boot, critic_forward(*targets.critic2, pred.s_next, a_next));
  Node q = critic_forward(online, mu_s, mu_a);
  return sub(add(pred.r_hat, mul_scalar(boot, gamma)), q);
}

std::pair<Node, Node> td_delta_input_gradients(const Node& delta, const Node& mu_s,
                                               const Node& mu_a) {
  auto g = gradient_nodes(sum(delta), {mu_s, mu_a});
  return {g[0], g[1]};
}

TaylorLoss taylor_critic_loss(const MlpParams& online, const TargetSet& targets,
                              const ModelFn& model, const Node& mu_s, const Node& mu_a,
                              const ExpansionConfig& cfg) {
  cfg.validate();
  Tensor delta_val;
  Node obj = expansion_objective(online, targets, model, mu_s, mu_a, cfg, cfg.similarity,
                                 &delta_val);
  return {neg(obj), delta_val};
}

SharedBootstrap make_shared_bootstrap(const TargetSet& targets, const ModelFn& model,
                                      const Node& mu_s, const Node& mu_a, double gamma,
                                      bool with_input_grads) {
  if (!targets.critic1 || !targets.actor)
    throw std::invalid_argument("make_shared_bootstrap: target critic1 and actor required");
  Prediction pred = model(mu_s, mu_a);
  Node a_next = targets.actor->forward(pred.s_next);
  Node boot = critic_forward(*targets.critic1, pred.s_next, a_next);
  if (targets.critic2)
    boot = minimum(boot, critic_forward(*targets.critic2, pred.s_next, a_next));
  SharedBootstrap out;
  out.target = add(pred.r_hat, mul_scalar(boot, gamma));
  if (with_input_grads) {
    auto g = gradient(sum(out.target), {mu_s, mu_a});
    out.d_target_s = std::move(g[0]);
    out.d_target_a = std::move(g[1]);
    out.has_input_grads = true;
  }
  return out;
}

TaylorLoss taylor_critic_loss_shared(const MlpParams& online, const SharedBootstrap& boot,
                                     const Node& mu_s, const Node& mu_a,
                                     const ExpansionConfig& cfg) {
  cfg.validate();
  Node q = critic_forward(online, mu_s, mu_a);
  Tensor delta_val = boot.target.value();
  for (std::int64_t i = 0; i < delta_val.size(); ++i)
    delta_val.data()[static_cast<std::size_t>(i)] -=
        q.value().data()[static_cast<std::size_t>(i)];
  Node obj = mean(mul(constant(delta_val), q));

  double la = cfg.effective_lambda_a(), ls = cfg.effective_lambda_s();
  if (la > 0 || ls > 0) {
    if (!boot.has_input_grads)
      throw std::invalid_argument(
          "taylor_critic_loss_shared: bootstrap built without input gradients");
    auto dq = gradient_nodes(sum(q), {mu_s, mu_a});
    auto d_delta = [](const Tensor& d_target, const Tensor& dq_val) {
      Tensor out = d_target;
      for (std::int64_t i = 0; i < out.size(); ++i)
        out.data()[static_cast<std::size_t>(i)] -= dq_val.data()[static_cast<std::size_t>(i)];
      return out;
    };
    if (la > 0) {
      Tensor dd_a = d_delta(boot.d_target_a, dq[1].value());
      obj = obj + mul_scalar(mean(gradient_similarity(dq[1], dd_a, cfg.similarity)), la);
    }
    if (ls > 0) {
      Tensor dd_s = d_delta(boot.d_target_s, dq[0].value());
      obj = obj + mul_scalar(mean(gradient_similarity(dq[0], dd_s, cfg.similarity)), ls);
    }
  }
  return {neg(obj), delta_val};
}

std::vector<Tensor> taylor_update_analytic(const MlpParams& online, const TargetSet& targets,
                                           const ModelFn& model, const Node& mu_s,
                                           const Node& mu_a, const ExpansionConfig& cfg) {
  cfg.validate();
  Node obj =
      expansion_objective(online, targets, model, mu_s, mu_a, cfg, Similarity::Dot, nullptr);
  return gradient(obj, online.params());
}

McOracleResult expected_update_mc_oracle(const MlpParams& online, const TargetSet& targets,
                                         const ModelFn& model, const Tensor& mu_s,
                                         const Tensor& mu_a, const ExpansionConfig& cfg,
                                         std::int64_t n_samples, Rng& rng) {
  cfg.validate();
  if (n_samples < 1) throw std::invalid_argument("mc_oracle: n_samples must be >= 1");
  double sd_a = std::sqrt(cfg.effective_lambda_a());
  double sd_s = std::sqrt(cfg.effective_lambda_s());

  auto params = online.params();
  std::vector<Tensor> acc, acc_sq;
  for (const auto& p : params) {
    acc.push_back(Tensor::zeros(p.value().shape()));
    acc_sq.push_back(Tensor::zeros(p.value().shape()));
  }

  for (std::int64_t it = 0; it < n_samples; ++it) {
    Tensor eps_s = rng.normal_tensor(mu_s.shape(), sd_s);
    Tensor eps_a = rng.normal_tensor(mu_a.shape(), sd_a);
    Tensor ps = mu_s, pa = mu_a;
    for (std::int64_t i = 0; i < ps.size(); ++i) ps.data()[static_cast<std::size_t>(i)] +=
        eps_s.data()[static_cast<std::size_t>(i)];
    for (std::int64_t i = 0; i < pa.size(); ++i) pa.data()[static_cast<std::size_t>(i)] +=
        eps_a.data()[static_cast<std::size_t>(i)];

    Node sn = constant(ps), an = constant(pa);
    double delta_val;
    {
      NoGradGuard ng;  // the TD error is a plain value here
      Prediction pred = model(sn, an);
      delta_val = evaluate(td_delta(online, targets, pred, sn, an, cfg.gamma)).item();
    }
    auto gq = gradient(sum(critic_forward(online, sn, an)), params);
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::int64_t i = 0; i < gq[p].size(); ++i) {
        double u = delta_val * gq[p].data()[static_cast<std::size_t>(i)];
        acc[p].data()[static_cast<std::size_t>(i)] += u;
        acc_sq[p].data()[static_cast<std::size_t>(i)] += u * u;
      }
  }

  McOracleResult res;
  double n = static_cast<double>(n_samples);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor mean_p = acc[p], se_p = acc_sq[p];
    for (std::int64_t i = 0; i < mean_p.size(); ++i) {
      auto k = static_cast<std::size_t>(i);
      mean_p.data()[k] /= n;
      double var = se_p.data()[k] / n - mean_p.data()[k] * mean_p.data()[k];
      se_p.data()[k] = n > 1 ? std::sqrt(std::max(var, 0.0) / (n - 1)) : 0.0;
    }
    res.mean.push_back(std::move(mean_p));
    res.se.push_back(std::move(se_p));
  }
  return res;
}

}  // namespace ttd
