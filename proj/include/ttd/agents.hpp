#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttd/dynamics_model.hpp"
#include "ttd/envs.hpp"
#include "ttd/taylor.hpp"

namespace ttd {

struct AgentConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double lr_model = 1e-3;
  double lr_critic = 3e-4;
  double lr_actor = 3e-4;
  std::int64_t batch_size = 256;
  double explore_sigma_frac = 0.1;  // of the action bound
  std::int64_t policy_delay = 2;
  std::int64_t dyna_updates = 10;
  std::int64_t warmup_steps = 1000;
  std::int64_t total_steps = 10000;
  std::int64_t buffer_capacity = 1000000;
  // sample-based expected-TD estimator
  std::int64_t state_perturbations = 10;
  std::int64_t action_perturbations = 10;
  // model training schedule: one large fit when warmup ends, then periodic
  // bursts; the reward net gets reward_burst_factor updates per ensemble step
  // (it is much cheaper and the critic is very sensitive to reward errors)
  std::int64_t model_initial_steps = 500;
  std::int64_t model_burst_interval = 250;
  std::int64_t model_burst_steps = 50;
  std::int64_t model_batch_size = 64;
  std::int64_t reward_burst_factor = 6;
  // evaluation protocol
  std::int64_t eval_interval = 500;
  std::int64_t eval_episodes = 5;
  // architectures
  std::vector<std::int64_t> model_hidden = {512, 512, 512, 512};
  std::vector<std::int64_t> reward_hidden = {256, 256, 256};
  std::vector<std::int64_t> critic_hidden = {400, 400};
  std::vector<std::int64_t> actor_hidden = {400, 400};

  void validate() const;
};

// Fixed-capacity FIFO transition store with uniform without-replacement
// batch sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::int64_t capacity);

  void push(Transition t);
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t capacity() const { return capacity_; }
  const Transition& at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  const std::vector<Transition>& all() const { return data_; }

  // n distinct indices, uniform over the current contents.
  std::vector<std::int64_t> sample_indices(std::int64_t n, Rng& rng) const;

 private:
  std::int64_t capacity_;
  std::int64_t write_pos_ = 0;
  std::vector<Transition> data_;
};

// clip(pi(s) + sigma * eps, bounds), eps ~ N(0, I).
Tensor behavioural_action(const MlpParams& actor, const Tensor& obs, double sigma,
                          double bound, Rng& rng);

enum class AgentKind { TaTD3, DynaTD3, SampleExpected };

const char* agent_kind_name(AgentKind k);

// TD3-style actor-critic with a learned model; the three kinds share every
// component except the critic update rule.
class Agent {
 public:
  Agent(AgentKind kind, const AgentConfig& cfg, const ExpansionConfig& expansion,
        std::int64_t obs_dim, std::int64_t act_dim, double action_bound,
        std::uint64_t seed);

  AgentKind kind() const { return kind_; }
  const AgentConfig& config() const { return cfg_; }
  const ExpansionConfig& expansion() const { return expansion_; }

  ReplayBuffer& buffer() { return buffer_; }

  Tensor act(const Tensor& obs, bool explore);

  // Maximum-likelihood model + MSE reward fitting on the buffer contents;
  // returns the mean NLL over the burst (NaN when steps == 0).
  double train_model_burst(std::int64_t steps);

  // One critic update on an imagined transition batch (all three kinds);
  // every policy_delay-th call also updates the actor and all targets.
  // Returns the mean squared TD error of the batch.
  double critic_update();

  // Deterministic-policy-gradient step on real states.
  void actor_update(const Tensor& states);

  std::int64_t critic_updates_done() const { return critic_updates_; }

  MlpParams& critic1() { return critic1_; }
  MlpParams& critic2() { return critic2_; }
  MlpParams& actor() { return actor_; }
  MlpParams& target_critic1() { return target_critic1_; }
  MlpParams& target_critic2() { return target_critic2_; }
  MlpParams& target_actor() { return target_actor_; }
  GaussianDynamicsEnsemble& ensemble() { return ensemble_; }
  RewardModel& reward_model() { return reward_model_; }

  std::vector<Tensor> critic_param_values() const;
  void save_checkpoint(const std::string& path) const;

 private:
  double tatd3_or_dyna_update(const std::vector<std::int64_t>& idx);
  double sample_expected_update(const std::vector<std::int64_t>& idx);
  double imagined_batch_update(const std::vector<std::int64_t>& idx, std::int64_t ns,
                               std::int64_t na, double scale_s, double scale_a,
                               const ExpansionConfig& eff);
  void delayed_actor_and_targets(const std::vector<std::int64_t>& idx);

  AgentKind kind_;
  AgentConfig cfg_;
  ExpansionConfig expansion_;
  std::int64_t obs_dim_, act_dim_;
  double bound_;

  MlpParams actor_, target_actor_;
  MlpParams critic1_, critic2_, target_critic1_, target_critic2_;
  GaussianDynamicsEnsemble ensemble_;
  RewardModel reward_model_;
  Adam actor_opt_, critic1_opt_, critic2_opt_;

  ReplayBuffer buffer_;
  Rng explore_rng_, update_rng_, model_rng_;
  std::int64_t critic_updates_ = 0;
};

struct CurvePoint {
  std::int64_t step;
  double eval_return;
  double critic_loss;  // mean squared TD error of the latest update
  double model_nll;    // mean NLL of the latest model burst
};

// Full pendulum training run: exploration, model fitting, dyna updates,
// periodic deterministic evaluation.  Bitwise reproducible in (agent seed,
// run seed).
std::vector<CurvePoint> train_on_pendulum(Agent& agent, std::uint64_t seed);

// As above but invokes on_step after every environment step (and once with 0
// before the first); used to snapshot mid-training state.
using StepCallback = std::function<void(std::int64_t step)>;
std::vector<CurvePoint> train_on_pendulum(Agent& agent, std::uint64_t seed,
                                          const StepCallback& on_step);

// Mean return of 5 deterministic evaluation episodes at the given seed.
double evaluate_on_pendulum(const MlpParams& actor, std::uint64_t seed,
                            std::int64_t episodes);

// Mean episode return of uniform random actions; the comparison baseline.
double random_policy_return(std::uint64_t seed, std::int64_t episodes);

}  // namespace ttd
