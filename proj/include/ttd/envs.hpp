#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ttd/autodiff.hpp"
#include "ttd/rng.hpp"
#include "ttd/tensor.hpp"

namespace ttd {

// One environment step as stored in the replay buffer.
struct Transition {
  Tensor s;       // observation
  Tensor a;       // action
  double r = 0;
  Tensor s_next;  // next observation
  bool done = false;
};

// ---------------------------------------------------------------------------
// Pendulum (classic swing-up).  Physical state is (theta, theta_dot); the
// observation is (cos theta, sin theta, theta_dot).  Constants follow the
// standard public definition: g=10, m=l=1, dt=0.05, torque bound 2,
// speed bound 8, 200-step episodes.
// ---------------------------------------------------------------------------

struct PendulumConsts {
  static constexpr double g = 10.0;
  static constexpr double m = 1.0;
  static constexpr double l = 1.0;
  static constexpr double dt = 0.05;
  static constexpr double max_torque = 2.0;
  static constexpr double max_speed = 8.0;
  static constexpr int episode_len = 200;
};

// Pure single step: returns (theta', theta_dot', reward).  The action is
// clipped to the torque bound before integration; reward is evaluated at the
// pre-step state with the clipped action.
struct PendulumStepResult {
  double theta, theta_dot, reward;
};
PendulumStepResult pendulum_step(double theta, double theta_dot, double action);

// Graph version over a 1x2 state row (theta, theta_dot) and a scalar-like
// action; returns the 1x2 next state and the scalar reward, both
// differentiable w.r.t. state and action.
struct PendulumStepNodes {
  Node next_state;  // 1 x 2
  Node reward;      // scalar
};
PendulumStepNodes pendulum_step_nodes(const Node& state, const Node& action);

Tensor pendulum_observation(double theta, double theta_dot);

class PendulumEnv {
 public:
  static constexpr std::int64_t obs_dim = 3;
  static constexpr std::int64_t act_dim = 1;
  static constexpr double action_bound = PendulumConsts::max_torque;

  // Standard initial distribution: theta ~ U(-pi, pi), theta_dot ~ U(-1, 1).
  Tensor reset(Rng& rng);
  Tensor observation() const { return pendulum_observation(theta_, theta_dot_); }
  // Advances the state and returns the reward; non-finite action is an error.
  double step(double action);

  int episode_steps() const { return episode_steps_; }
  bool episode_over() const { return episode_steps_ >= PendulumConsts::episode_len; }

  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  void set_state(double theta, double theta_dot);

 private:
  double theta_ = 0, theta_dot_ = 0;
  int episode_steps_ = 0;
};

// ---------------------------------------------------------------------------
// Linear-quadratic testbed: s' = s + dt (F s + G a) + noise_scale * noise,
// reward = -s^T C s - c_a ||a||^2.  Not an RL benchmark; an analytically
// tractable oracle for the variance/stability analyses.
// ---------------------------------------------------------------------------

struct LqSpec {
  Tensor F;  // d_s x d_s drift
  Tensor G;  // d_s x d_a control
  Tensor C;  // d_s x d_s symmetric PSD state cost
  double action_cost = 0.1;
  double dt = 0.05;
  double noise_scale = 0.0;

  std::int64_t state_dim() const { return F.rows(); }
  std::int64_t action_dim() const { return G.cols(); }
  void validate() const;  // throws on asymmetric cost / bad dimensions

  // Stable random instance: F = -(I + small skew), G and C seeded.
  static LqSpec random(std::int64_t d_s, std::int64_t d_a, Rng& rng, double dt = 0.05,
                       double noise_scale = 0.0);
};

struct LqStepResult {
  Tensor s_next;
  double reward;
};
LqStepResult lq_step(const Tensor& s, const Tensor& a, const LqSpec& spec,
                     const Tensor& noise);

// Graph version over 1 x d rows.
struct LqStepNodes {
  Node s_next;  // 1 x d_s
  Node reward;  // scalar
};
LqStepNodes lq_step_nodes(const Node& s, const Node& a, const LqSpec& spec,
                          const Tensor& noise);

// ---------------------------------------------------------------------------
// Rollout: runs `horizon` pendulum steps under the given policy, resetting at
// episode boundaries.  Deterministic in (env initial state, seed).
// ---------------------------------------------------------------------------

using Policy = std::function<Tensor(const Tensor& obs, Rng& rng)>;

std::vector<Transition> rollout(PendulumEnv& env, const Policy& policy, int horizon,
                                std::uint64_t seed);

}  // namespace ttd
