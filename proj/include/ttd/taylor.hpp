#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "ttd/dynamics_model.hpp"
#include "ttd/mlp.hpp"

namespace ttd {

enum class Similarity { Cosine, Dot };

// Governs the expected-update approximation: isotropic perturbation scales,
// per-branch switches, similarity mode of the gradient-matching terms.
struct ExpansionConfig {
  double lambda_a = 0.25;
  double lambda_s = 1e-5;
  bool action_expansion = true;
  bool state_expansion = true;
  Similarity similarity = Similarity::Cosine;
  double gamma = 0.99;

  double effective_lambda_a() const { return action_expansion ? lambda_a : 0.0; }
  double effective_lambda_s() const { return state_expansion ? lambda_s : 0.0; }
  void validate() const;  // throws on negative/non-finite lambdas, gamma outside [0,1]
};

// Transition-and-reward model as a callable so the same core runs against the
// learned ensemble, the exact LQ dynamics, or hand-built test models.
using ModelFn = std::function<Prediction(const Node& s, const Node& a)>;

// Bootstrap networks: twin target critics (second optional) and target actor.
struct TargetSet {
  const MlpParams* critic1 = nullptr;
  const MlpParams* critic2 = nullptr;
  const MlpParams* actor = nullptr;
};

// Q(s, a) for critics taking the concatenated row [s, a].
Node critic_forward(const MlpParams& critic, const Node& s, const Node& a);

// delta = r_hat + gamma * min_i Q_target_i(s_hat, pi_target(s_hat)) - Q(mu_s, mu_a),
// one row per sample, fully differentiable (callers decide what to stop).
Node td_delta(const MlpParams& online, const TargetSet& targets, const Prediction& pred,
              const Node& mu_s, const Node& mu_a, double gamma);

// (d delta / d mu_s, d delta / d mu_a) as graph nodes supporting further
// differentiation; per-row because each row of delta depends only on its row.
std::pair<Node, Node> td_delta_input_gradients(const Node& delta, const Node& mu_s,
                                               const Node& mu_a);

struct TaylorLoss {
  Node loss;     // scalar, mean over the batch; minimize
  Tensor delta;  // detached per-row TD errors (diagnostics)
};

// Gradient-matching critic loss: the semi-gradient term plus similarity terms
// between the critic's input gradients and the (detached) TD-error input
// gradients, weighted by the perturbation scales.
TaylorLoss taylor_critic_loss(const MlpParams& online, const TargetSet& targets,
                              const ModelFn& model, const Node& mu_s, const Node& mu_a,
                              const ExpansionConfig& cfg);

// Bootstrap target r_hat + gamma * min_i Q_target_i(s_hat, pi(s_hat)) computed
// once and shared across twin critics; its detached input gradients let each
// critic assemble d(delta)/d(input) as d(target) - d(Q) without re-running a
// backward pass through the model.
struct SharedBootstrap {
  Node target;          // n x 1
  Tensor d_target_s;    // n x d_s, detached
  Tensor d_target_a;    // n x d_a, detached
  bool has_input_grads = false;
};
SharedBootstrap make_shared_bootstrap(const TargetSet& targets, const ModelFn& model,
                                      const Node& mu_s, const Node& mu_a, double gamma,
                                      bool with_input_grads);

// Same loss as taylor_critic_loss, evaluated against a precomputed bootstrap.
TaylorLoss taylor_critic_loss_shared(const MlpParams& online, const SharedBootstrap& boot,
                                     const Node& mu_s, const Node& mu_a,
                                     const ExpansionConfig& cfg);

// Closed-form first-order expected update direction (dot form, no cosine
// normalization); verification oracle, not a training path.
std::vector<Tensor> taylor_update_analytic(const MlpParams& online, const TargetSet& targets,
                                           const ModelFn& model, const Node& mu_s,
                                           const Node& mu_a, const ExpansionConfig& cfg);

// Brute-force expected TD update: average of single-sample semi-gradient
// updates at (mu_s + delta_s, mu_a + delta_a) over Gaussian perturbations.
struct McOracleResult {
  std::vector<Tensor> mean;  // per-parameter update estimate
  std::vector<Tensor> se;    // per-coordinate standard error
};
McOracleResult expected_update_mc_oracle(const MlpParams& online, const TargetSet& targets,
                                         const ModelFn& model, const Tensor& mu_s,
                                         const Tensor& mu_a, const ExpansionConfig& cfg,
                                         std::int64_t n_samples, Rng& rng);

}  // namespace ttd
