#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ttd/agents.hpp"
#include "ttd/mlp.hpp"
#include "ttd/taylor.hpp"

namespace ttd {

// ---------------------------------------------------------------------------
// Update-variance measurement (batch-update protocol: parameters are frozen,
// per-state update vectors are collected and their variance across states is
// summed over parameter coordinates).

struct VarianceReport {
  std::int64_t step = 0;  // checkpoint label, 0 when standalone
  double taylor_mean = 0;
  double taylor_se = 0;
  double sample_mean = 0;
  double sample_se = 0;
  std::vector<double> taylor_per_seed;
  std::vector<double> sample_per_seed;
};

// For each of n_repeats forked streams: compute one update vector per state
// (Taylor analytic vs single-sample TD at matched perturbation scales, fresh
// noise per state), take the per-coordinate variance across states and sum it.
// Throws std::invalid_argument when n_repeats < 2.
VarianceReport measure_update_variance(const MlpParams& critic, const TargetSet& targets,
                                       const ModelFn& model, const Tensor& states,
                                       const ExpansionConfig& cfg, std::int64_t n_repeats,
                                       Rng& rng);

// Trains `agent` on the pendulum and snapshots the measurement at the given
// step labels (must be sorted; each must not exceed cfg.total_steps).  The
// model used for the measurement is the agent's learned ensemble at that
// point; states are drawn from the replay buffer.
std::vector<VarianceReport> variance_across_training(Agent& agent, std::uint64_t seed,
                                                     const std::vector<std::int64_t>& checkpoints,
                                                     std::int64_t n_states,
                                                     std::int64_t n_repeats);

// ---------------------------------------------------------------------------
// Linear-function-approximation stability diagnostics.

// Drift f(s, a); the next state is s' = s + dt * f(s, a).
using DriftFn = std::function<Node(const Node& s, const Node& a)>;

struct StabilityReport {
  Tensor A;        // N x N, E[x (x - gamma x')^T]
  Tensor A_tilde;  // N x N, E[(da x)^T (da x - gamma da x')] summed over action dims
  double min_eig_sym_A = 0;
  double min_eig_sym_A_tilde = 0;
  double min_eig_sym_combined = 0;  // sym(A + lambda_a * A_tilde)
  double dt = 0;

  bool a_tilde_psd(double tol = -1e-6) const { return min_eig_sym_A_tilde >= tol; }
};

// Features x = phi(s, a) from a fixed differentiable network; x' = phi(s', a')
// with s' = s + dt * f(s, a) and a' = policy(s').  Jacobians w.r.t. the
// initial action are taken through the full chain.
StabilityReport stability_matrices(const MlpParams& features, const DriftFn& drift,
                                   const MlpParams& policy, const Tensor& states,
                                   const Tensor& actions, double gamma, double lambda_a,
                                   double dt);

// Largest eta with spectral radius of I - eta * (A + lambda_a * A_tilde)
// below one (0 when no positive eta works).
double stable_step_threshold(const StabilityReport& report, double lambda_a);

struct IterationResult {
  bool converged = false;
  std::int64_t iterations = 0;
  Tensor fixed_point;  // 1 x N
};

// Iterates theta <- (I - eta*(A + lambda_a*A_tilde)) theta + eta*u until the
// step norm falls below tol.
IterationResult expected_update_iteration(const StabilityReport& report, double lambda_a,
                                          const Tensor& u, double eta, std::int64_t max_iters,
                                          double tol);

// ---------------------------------------------------------------------------
// Value-plus-gradient regression toy problem.

enum class ToyMethod { Taylor, SampleBased };

struct ToyConfig {
  std::int64_t d = 1;             // input dimension
  std::int64_t train_points = 15;  // 15 = low regime, 128 = high regime
  std::int64_t test_points = 50;
  double lambda_x = 0.1;          // isotropic perturbation variance
  std::uint64_t target_seed = 7;  // fixed target network across methods
  std::int64_t train_iters = 4000;
  double lr = 1e-2;

  void validate() const;
};

// Trains an approximator against a fixed random tanh target and returns the
// training objective evaluated on held-out inputs: the expected squared error
// over input perturbations, estimated by Monte Carlo with draws shared across
// methods.  `seed` drives data draws, init, and training noise; both methods
// see identical data under the same seed.
double toy_experiment(const ToyConfig& cfg, ToyMethod method, std::uint64_t seed);

// The training objective used by the Taylor arm (exposed for gradient
// checking): mean over rows of 1/2 (y - yhat)^2 + lambda_x/2 |dx y - dx yhat|^2.
Node toy_taylor_objective(const MlpParams& net, const MlpParams& target, const Tensor& xs,
                          double lambda_x);

// ---------------------------------------------------------------------------
// Result emission: one long-format CSV plus one JSON summary per analysis.

struct CsvRow {
  std::int64_t seed;
  std::string condition;
  std::string metric;
  double value;
};

void write_long_csv(const std::string& path, const std::vector<CsvRow>& rows);
void write_json_summary(const std::string& path,
                        const std::map<std::string, double>& summary);

}  // namespace ttd
