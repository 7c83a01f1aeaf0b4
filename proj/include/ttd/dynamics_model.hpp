#pragma once

#include <string>
#include <vector>

#include "ttd/envs.hpp"
#include "ttd/mlp.hpp"

namespace ttd {

// Batched training data drawn from replay: rows are transitions.
struct ModelBatch {
  Tensor s;       // n x d_s
  Tensor a;       // n x d_a
  Tensor r;       // n x 1
  Tensor s_next;  // n x d_s

  std::int64_t size() const { return s.rows(); }
  static ModelBatch from_transitions(const std::vector<Transition>& ts);
};

// Affine input whitening fitted from data; applied as constants so gradients
// w.r.t. raw inputs pass straight through.
struct Normalizer {
  Tensor mean;  // 1 x d
  Tensor std;   // 1 x d, floored at 1e-6

  static Normalizer fit(const Tensor& rows);
  static Normalizer identity(std::int64_t d);
  Node apply(const Node& x) const;
};

struct ModelTrainConfig {
  double lr = 1e-3;
  std::int64_t batch_size = 256;
  bool normalize_inputs = true;
};

// Ensemble of Gaussian next-state models plus a deterministic reward model.
// Each member maps (s, a) to a mean state change and a per-dimension
// log-variance; log-variances are soft-clamped into [ln 1e-8, ln 1e2].
class GaussianDynamicsEnsemble {
 public:
  static constexpr int kMembers = 8;

  GaussianDynamicsEnsemble(std::int64_t state_dim, std::int64_t action_dim,
                           std::vector<std::int64_t> hidden, Rng& rng,
                           ModelTrainConfig cfg = {});

  std::int64_t state_dim() const { return state_dim_; }
  std::int64_t action_dim() const { return action_dim_; }
  int members() const { return static_cast<int>(nets_.size()); }

  // (mu, log_var) of s' given rows (s, a); mu includes the skip from s.
  struct MeanLogVar {
    Node mu;       // n x d_s
    Node log_var;  // n x d_s
  };
  MeanLogVar mean_log_var(int member, const Node& s, const Node& a) const;

  // Refit the input normalizer from data (no-op when normalization is off).
  void fit_normalizer(const ModelBatch& data);

  MlpParams& member_net(int i) { return nets_[static_cast<std::size_t>(i)]; }
  const MlpParams& member_net(int i) const { return nets_[static_cast<std::size_t>(i)]; }
  Adam& member_opt(int i) { return opts_[static_cast<std::size_t>(i)]; }
  const ModelTrainConfig& config() const { return cfg_; }

  std::vector<Tensor> all_param_values() const;
  void set_all_param_values(const std::vector<Tensor>& values);

 private:
  std::int64_t state_dim_, action_dim_;
  ModelTrainConfig cfg_;
  std::vector<MlpParams> nets_;  // out = 2 * d_s (mean delta, raw log-var)
  std::vector<Adam> opts_;
  Normalizer in_norm_;
};

class RewardModel {
 public:
  RewardModel(std::int64_t state_dim, std::int64_t action_dim,
              std::vector<std::int64_t> hidden, Rng& rng, double lr = 1e-3);

  Node forward(const Node& s, const Node& a) const;  // n x 1
  Node mse(const ModelBatch& batch) const;

  MlpParams& net() { return net_; }
  const MlpParams& net() const { return net_; }
  Adam& opt() { return opt_; }
  void fit_normalizer(const ModelBatch& data);

 private:
  MlpParams net_;
  Adam opt_;
  Normalizer in_norm_;
  bool normalize_ = true;
};

// Mean Gaussian negative log-likelihood of batch.s_next under member's
// (mu, diag exp(log_var)).
Node model_nll(const GaussianDynamicsEnsemble& ensemble, int member, const ModelBatch& batch);

// Reparameterized prediction: s_hat = mu + sigma * noise, r_hat from the
// reward model; differentiable w.r.t. s and a.
struct Prediction {
  Node r_hat;   // n x 1
  Node s_next;  // n x d_s
};
Prediction predict(const GaussianDynamicsEnsemble& ensemble, const RewardModel& reward,
                   int member, const Node& s, const Node& a, const Tensor& noise);

// Interleaved maximum-likelihood training of all members plus MSE training of
// the reward model; one entry of the trace per step: (mean member NLL, reward MSE).
// Refitting the input normalizers invalidates everything the nets have learned
// about input scale, so callers doing short incremental bursts must pass
// fit_normalizers = false after the initial full fit.
struct ModelLossTrace {
  std::vector<double> nll;
  std::vector<double> reward_mse;
};
// reward_per_step reward-model updates run per ensemble step: the reward net
// is far cheaper than the ensemble and needs more optimization to track the
// value scale, so callers typically pass > 1.
ModelLossTrace train_models(GaussianDynamicsEnsemble& ensemble, RewardModel& reward,
                            const std::vector<Transition>& data, std::int64_t steps,
                            Rng& rng, bool fit_normalizers = true,
                            std::int64_t reward_per_step = 1);

// Versioned checkpoint IO shared by every network in the repo: magic "TTD1",
// tensor count, then per tensor rank, extents, row-major doubles.
void save_tensors(const std::string& path, const std::vector<Tensor>& tensors);
std::vector<Tensor> load_tensors(const std::string& path);

}  // namespace ttd
