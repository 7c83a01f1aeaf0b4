#include "ttd/agents.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace ttd {

void AgentConfig::validate() const {
  if (!(gamma >= 0 && gamma <= 1)) throw std::invalid_argument("AgentConfig: bad gamma");
  if (!(tau > 0 && tau <= 1)) throw std::invalid_argument("AgentConfig: bad tau");
  if (policy_delay < 1) throw std::invalid_argument("AgentConfig: policy_delay must be >= 1");
  if (batch_size < 1 || dyna_updates < 0 || warmup_steps < 1 || total_steps < 1)
    throw std::invalid_argument("AgentConfig: counts must be positive");
  if (state_perturbations < 1 || action_perturbations < 1)
    throw std::invalid_argument("AgentConfig: perturbation counts must be >= 1");
  if (reward_burst_factor < 1)
    throw std::invalid_argument("AgentConfig: reward_burst_factor must be >= 1");
  if (lr_model <= 0 || lr_critic <= 0 || lr_actor <= 0)
    throw std::invalid_argument("AgentConfig: learning rates must be positive");
}

ReplayBuffer::ReplayBuffer(std::int64_t capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
  data_.reserve(static_cast<std::size_t>(std::min<std::int64_t>(capacity, 1 << 20)));
}

void ReplayBuffer::push(Transition t) {
  if (size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[static_cast<std::size_t>(write_pos_)] = std::move(t);
    write_pos_ = (write_pos_ + 1) % capacity_;
  }
}

std::vector<std::int64_t> ReplayBuffer::sample_indices(std::int64_t n, Rng& rng) const {
  if (size() == 0) throw std::invalid_argument("ReplayBuffer: sampling from empty buffer");
  n = std::min(n, size());
  // Floyd's algorithm: n distinct indices, each subset equally likely
  std::unordered_set<std::int64_t> chosen;
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t j = size() - n; j < size(); ++j) {
    std::int64_t t = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(j + 1)));
    if (chosen.count(t)) t = j;
    chosen.insert(t);
    out.push_back(t);
  }
  return out;
}

Tensor behavioural_action(const MlpParams& actor, const Tensor& obs, double sigma,
                          double bound, Rng& rng) {
  Tensor a;
  {
    NoGradGuard ng;
    a = actor.forward(constant(obs)).value();
  }
  for (auto& v : a.data()) {
    double eps = rng.normal();
    v = std::clamp(v + sigma * eps, -bound, bound);
  }
  return a;
}

const char* agent_kind_name(AgentKind k) {
  switch (k) {
    case AgentKind::TaTD3: return "tatd3";
    case AgentKind::DynaTD3: return "dyna_td3";
    case AgentKind::SampleExpected: return "sample_expected_td3";
  }
  return "?";
}

namespace {

MlpParams make_critic(std::int64_t obs_dim, std::int64_t act_dim,
                      const std::vector<std::int64_t>& hidden, Rng& rng) {
  std::vector<std::int64_t> sizes{obs_dim + act_dim};
  for (auto h : hidden) sizes.push_back(h);
  sizes.push_back(1);
  return MlpParams::create(sizes, Activation::Relu, rng);
}

MlpParams make_actor(std::int64_t obs_dim, std::int64_t act_dim,
                     const std::vector<std::int64_t>& hidden, double bound, Rng& rng) {
  std::vector<std::int64_t> sizes{obs_dim};
  for (auto h : hidden) sizes.push_back(h);
  sizes.push_back(act_dim);
  return MlpParams::create(sizes, Activation::Relu, rng, /*tanh_output=*/true, bound);
}

GaussianDynamicsEnsemble make_ensemble(std::int64_t obs_dim, std::int64_t act_dim,
                                       const AgentConfig& cfg, std::uint64_t seed) {
  Rng rng(seed, 11);
  return GaussianDynamicsEnsemble(obs_dim, act_dim, cfg.model_hidden, rng,
                                  ModelTrainConfig{cfg.lr_model, cfg.model_batch_size, true});
}

RewardModel make_reward_model(std::int64_t obs_dim, std::int64_t act_dim,
                              const AgentConfig& cfg, std::uint64_t seed) {
  Rng rng(seed, 12);
  return RewardModel(obs_dim, act_dim, cfg.reward_hidden, rng, cfg.lr_model);
}

}  // namespace

Agent::Agent(AgentKind kind, const AgentConfig& cfg, const ExpansionConfig& expansion,
             std::int64_t obs_dim, std::int64_t act_dim, double action_bound,
             std::uint64_t seed)
    : kind_(kind),
      cfg_(cfg),
      expansion_(expansion),
      obs_dim_(obs_dim),
      act_dim_(act_dim),
      bound_(action_bound),
      actor_(MlpParams()),
      target_actor_(MlpParams()),
      critic1_(MlpParams()),
      critic2_(MlpParams()),
      target_critic1_(MlpParams()),
      target_critic2_(MlpParams()),
      ensemble_(make_ensemble(obs_dim, act_dim, cfg, seed)),
      reward_model_(make_reward_model(obs_dim, act_dim, cfg, seed)),
      actor_opt_(cfg.lr_actor),
      critic1_opt_(cfg.lr_critic),
      critic2_opt_(cfg.lr_critic),
      buffer_(cfg.buffer_capacity),
      explore_rng_(seed, 3),
      update_rng_(seed, 4),
      model_rng_(seed, 5) {
  cfg_.validate();
  expansion_.validate();
  expansion_.gamma = cfg_.gamma;
  Rng net_rng(seed, 6);
  actor_ = make_actor(obs_dim, act_dim, cfg_.actor_hidden, bound_, net_rng);
  critic1_ = make_critic(obs_dim, act_dim, cfg_.critic_hidden, net_rng);
  critic2_ = make_critic(obs_dim, act_dim, cfg_.critic_hidden, net_rng);
  target_actor_ = actor_.target_copy();
  target_critic1_ = critic1_.target_copy();
  target_critic2_ = critic2_.target_copy();
}

Tensor Agent::act(const Tensor& obs, bool explore) {
  double sigma = explore ? cfg_.explore_sigma_frac * bound_ : 0.0;
  if (!explore) {
    NoGradGuard ng;
    Tensor a = actor_.forward(constant(obs)).value();
    for (auto& v : a.data()) v = std::clamp(v, -bound_, bound_);
    return a;
  }
  return behavioural_action(actor_, obs, sigma, bound_, explore_rng_);
}

double Agent::train_model_burst(std::int64_t steps) {
  if (steps == 0) return std::numeric_limits<double>::quiet_NaN();
  auto trace = train_models(ensemble_, reward_model_, buffer_.all(), steps, model_rng_,
                            /*fit_normalizers=*/true, cfg_.reward_burst_factor);
  double acc = 0;
  for (double v : trace.nll) acc += v;
  return acc / static_cast<double>(trace.nll.size());
}

double Agent::critic_update() {
  auto idx = buffer_.sample_indices(cfg_.batch_size, update_rng_);
  double d2 = (kind_ == AgentKind::SampleExpected) ? sample_expected_update(idx)
                                                   : tatd3_or_dyna_update(idx);
  ++critic_updates_;
  if (critic_updates_ % cfg_.policy_delay == 0) delayed_actor_and_targets(idx);
  return d2;
}

// Shared update core.  Every kind consumes the identical RNG layout: member,
// action perturbations, state perturbations, model noise — so kinds that
// degenerate into each other (zero scales, single perturbations) produce
// bitwise-identical parameter trajectories.
double Agent::tatd3_or_dyna_update(const std::vector<std::int64_t>& idx) {
  std::int64_t ns = 1, na = 1;
  double scale_s = 0.0, scale_a = 0.0;
  ExpansionConfig eff = expansion_;
  if (kind_ == AgentKind::DynaTD3) {
    scale_a = std::sqrt(expansion_.lambda_a);
    eff.action_expansion = false;
    eff.state_expansion = false;
  }
  return imagined_batch_update(idx, ns, na, scale_s, scale_a, eff);
}

double Agent::sample_expected_update(const std::vector<std::int64_t>& idx) {
  ExpansionConfig eff = expansion_;
  eff.action_expansion = false;
  eff.state_expansion = false;
  return imagined_batch_update(idx, cfg_.state_perturbations, cfg_.action_perturbations,
                               std::sqrt(expansion_.lambda_s),
                               std::sqrt(expansion_.lambda_a), eff);
}

double Agent::imagined_batch_update(const std::vector<std::int64_t>& idx, std::int64_t ns,
                                    std::int64_t na, double scale_s, double scale_a,
                                    const ExpansionConfig& eff) {
  std::int64_t b = static_cast<std::int64_t>(idx.size());
  Tensor s_base = Tensor::zeros({b, obs_dim_});
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < obs_dim_; ++j)
      s_base.at(i, j) = buffer_.at(idx[static_cast<std::size_t>(i)]).s(0, j);

  Tensor a_base;
  {
    NoGradGuard ng;
    a_base = target_actor_.forward(constant(s_base)).value();
  }

  int member = static_cast<int>(update_rng_.below(GaussianDynamicsEnsemble::kMembers));
  Tensor eps_a = update_rng_.normal_tensor({b * na, act_dim_});
  Tensor eps_s = update_rng_.normal_tensor({b * ns, obs_dim_});
  std::int64_t rows = b * ns * na;
  Tensor noise = update_rng_.normal_tensor({rows, obs_dim_});

  Tensor s_val = Tensor::zeros({rows, obs_dim_});
  Tensor a_val = Tensor::zeros({rows, act_dim_});
  std::int64_t r = 0;
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t p = 0; p < ns; ++p)
      for (std::int64_t q = 0; q < na; ++q, ++r) {
        for (std::int64_t j = 0; j < obs_dim_; ++j)
          s_val.at(r, j) = s_base(i, j) + scale_s * eps_s(i * ns + p, j);
        for (std::int64_t j = 0; j < act_dim_; ++j)
          a_val.at(r, j) = std::clamp(a_base(i, j) + scale_a * eps_a(i * na + q, j),
                                      -bound_, bound_);
      }

  Node mu_s = leaf(s_val), mu_a = leaf(a_val);
  Prediction pred = predict(ensemble_, reward_model_, member, mu_s, mu_a, noise);
  ModelFn cached = [&pred](const Node&, const Node&) { return pred; };

  TargetSet targets{&target_critic1_, &target_critic2_, &target_actor_};
  bool need_grads = eff.effective_lambda_a() > 0 || eff.effective_lambda_s() > 0;
  SharedBootstrap boot =
      make_shared_bootstrap(targets, cached, mu_s, mu_a, eff.gamma, need_grads);

  double d2 = 0;
  MlpParams* critics[2] = {&critic1_, &critic2_};
  Adam* opts[2] = {&critic1_opt_, &critic2_opt_};
  for (int c = 0; c < 2; ++c) {
    TaylorLoss tl = taylor_critic_loss_shared(*critics[c], boot, mu_s, mu_a, eff);
    auto grads = gradient(tl.loss, critics[c]->params());
    opts[c]->step(*critics[c], grads);
    if (c == 0) {
      for (std::int64_t i = 0; i < tl.delta.size(); ++i) {
        double d = tl.delta.data()[static_cast<std::size_t>(i)];
        d2 += d * d;
      }
      d2 /= static_cast<double>(tl.delta.size());
    }
  }
  return d2;
}

void Agent::actor_update(const Tensor& states) {
  Node s = constant(states);
  Node loss = neg(mean(critic_forward(critic1_, s, actor_.forward(s))));
  auto grads = gradient(loss, actor_.params());
  actor_opt_.step(actor_, grads);
}

void Agent::delayed_actor_and_targets(const std::vector<std::int64_t>& idx) {
  std::int64_t b = static_cast<std::int64_t>(idx.size());
  Tensor s_val = Tensor::zeros({b, obs_dim_});
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < obs_dim_; ++j)
      s_val.at(i, j) = buffer_.at(idx[static_cast<std::size_t>(i)]).s(0, j);
  actor_update(s_val);
  soft_update(target_actor_, actor_, cfg_.tau);
  soft_update(target_critic1_, critic1_, cfg_.tau);
  soft_update(target_critic2_, critic2_, cfg_.tau);
}

std::vector<Tensor> Agent::critic_param_values() const {
  std::vector<Tensor> out;
  for (const MlpParams* net :
       {&actor_, &critic1_, &critic2_, &target_actor_, &target_critic1_, &target_critic2_}) {
    auto v = net->param_values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

void Agent::save_checkpoint(const std::string& path) const {
  std::vector<Tensor> all = critic_param_values();
  auto ens = ensemble_.all_param_values();
  all.insert(all.end(), ens.begin(), ens.end());
  auto rv = reward_model_.net().param_values();
  all.insert(all.end(), rv.begin(), rv.end());
  save_tensors(path, all);
}

std::vector<CurvePoint> train_on_pendulum(Agent& agent, std::uint64_t seed) {
  return train_on_pendulum(agent, seed, {});
}

std::vector<CurvePoint> train_on_pendulum(Agent& agent, std::uint64_t seed,
                                          const StepCallback& on_step) {
  const AgentConfig& cfg = agent.config();
  PendulumEnv env;
  Rng env_rng(seed, 2);
  Tensor obs = env.reset(env_rng);

  std::vector<CurvePoint> curve;
  double last_nll = std::numeric_limits<double>::quiet_NaN();
  double last_d2 = std::numeric_limits<double>::quiet_NaN();

  if (on_step) on_step(0);
  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    Tensor a;
    if (agent.buffer().size() < cfg.warmup_steps) {
      a = Tensor::zeros({1, PendulumEnv::act_dim});
      for (auto& v : a.data())
        v = env_rng.uniform(-PendulumEnv::action_bound, PendulumEnv::action_bound);
    } else {
      a = agent.act(obs, /*explore=*/true);
    }
    double r = env.step(a(0, 0));
    Tensor next = env.observation();
    bool done = env.episode_over();
    agent.buffer().push({obs, a, r, next, done});
    obs = done ? env.reset(env_rng) : next;

    if (agent.buffer().size() == cfg.warmup_steps) {
      last_nll = agent.train_model_burst(cfg.model_initial_steps);
    } else if (agent.buffer().size() > cfg.warmup_steps &&
               step % cfg.model_burst_interval == 0) {
      last_nll = agent.train_model_burst(cfg.model_burst_steps);
    }

    if (agent.buffer().size() >= cfg.warmup_steps)
      for (std::int64_t d = 0; d < cfg.dyna_updates; ++d) last_d2 = agent.critic_update();

    if (step % cfg.eval_interval == 0) {
      double ret = evaluate_on_pendulum(agent.actor(), seed * 131 + static_cast<std::uint64_t>(step),
                                        cfg.eval_episodes);
      curve.push_back({step, ret, last_d2, last_nll});
    }
    if (on_step) on_step(step);
  }
  return curve;
}

double evaluate_on_pendulum(const MlpParams& actor, std::uint64_t seed,
                            std::int64_t episodes) {
  Rng rng(seed, 7);
  NoGradGuard ng;
  double total = 0;
  for (std::int64_t ep = 0; ep < episodes; ++ep) {
    PendulumEnv env;
    Tensor obs = env.reset(rng);
    double ep_ret = 0;
    for (int t = 0; t < PendulumConsts::episode_len; ++t) {
      Tensor a = actor.forward(constant(obs)).value();
      double u = std::clamp(a(0, 0), -PendulumEnv::action_bound, PendulumEnv::action_bound);
      ep_ret += env.step(u);
      obs = env.observation();
    }
    total += ep_ret;
  }
  return total / static_cast<double>(episodes);
}

double random_policy_return(std::uint64_t seed, std::int64_t episodes) {
  Rng rng(seed, 8);
  double total = 0;
  for (std::int64_t ep = 0; ep < episodes; ++ep) {
    PendulumEnv env;
    env.reset(rng);
    double ep_ret = 0;
    for (int t = 0; t < PendulumConsts::episode_len; ++t)
      ep_ret += env.step(rng.uniform(-PendulumEnv::action_bound, PendulumEnv::action_bound));
    total += ep_ret;
  }
  return total / static_cast<double>(episodes);
}

}  // namespace ttd
