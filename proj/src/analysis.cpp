#include "ttd/analysis.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ttd/envs.hpp"

#include <limits>

#include <json.hpp>

namespace ttd {

namespace {

std::vector<double> flatten(const std::vector<Tensor>& ts) {
  std::vector<double> out;
  for (const auto& t : ts)
    out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

// Per-coordinate variance across rows (unbiased), summed over coordinates.
double summed_variance(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  const std::size_t d = rows.front().size();
  double total = 0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0;
    for (const auto& r : rows) mean += r[j];
    mean /= static_cast<double>(n);
    double acc = 0;
    for (const auto& r : rows) acc += (r[j] - mean) * (r[j] - mean);
    total += acc / static_cast<double>(n - 1);
  }
  return total;
}

void mean_and_se(const std::vector<double>& xs, double& mean, double& se) {
  const double n = static_cast<double>(xs.size());
  mean = 0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= (n - 1.0);
  se = std::sqrt(var / n);
}

// One single-sample semi-gradient TD update at a perturbed input.
std::vector<Tensor> sample_td_update(const MlpParams& critic, const TargetSet& targets,
                                     const ModelFn& model, const Tensor& sp,
                                     const Tensor& ap, double gamma) {
  Node s = constant(sp), a = constant(ap);
  double dval;
  {
    NoGradGuard ng;
    Prediction pred = model(s, a);
    dval = evaluate(td_delta(critic, targets, pred, s, a, gamma)).item();
  }
  auto params = critic.params();
  auto grads = gradient(sum(critic_forward(critic, s, a)), params);
  for (auto& g : grads)
    for (auto& v : g.data()) v *= dval;
  return grads;
}

}  // namespace

VarianceReport measure_update_variance(const MlpParams& critic, const TargetSet& targets,
                                       const ModelFn& model, const Tensor& states,
                                       const ExpansionConfig& cfg, std::int64_t n_repeats,
                                       Rng& rng) {
  if (n_repeats < 2)
    throw std::invalid_argument("measure_update_variance: n_repeats must be >= 2");
  if (!targets.actor) throw std::invalid_argument("measure_update_variance: target actor required");
  const std::int64_t n = states.rows();
  if (n < 2) throw std::invalid_argument("measure_update_variance: need >= 2 states");
  const std::int64_t ds = states.cols();
  const double scale_s = std::sqrt(cfg.effective_lambda_s());
  const double scale_a = std::sqrt(cfg.effective_lambda_a());

  VarianceReport rep;
  for (std::int64_t r = 0; r < n_repeats; ++r) {
    Rng rep_rng = rng.fork(1000 + static_cast<std::uint64_t>(r));
    std::vector<std::vector<double>> taylor_rows, sample_rows;
    for (std::int64_t i = 0; i < n; ++i) {
      Tensor s = Tensor::zeros({1, ds});
      for (std::int64_t j = 0; j < ds; ++j) s.at(0, j) = states(i, j);
      Tensor a;
      {
        NoGradGuard ng;
        a = targets.actor->forward(constant(s)).value();
      }

      taylor_rows.push_back(
          flatten(taylor_update_analytic(critic, targets, model, constant(s), constant(a), cfg)));

      Tensor sp = s, ap = a;
      for (auto& v : sp.data()) v += scale_s * rep_rng.normal();
      for (auto& v : ap.data()) v += scale_a * rep_rng.normal();
      sample_rows.push_back(flatten(sample_td_update(critic, targets, model, sp, ap, cfg.gamma)));
    }
    rep.taylor_per_seed.push_back(summed_variance(taylor_rows));
    rep.sample_per_seed.push_back(summed_variance(sample_rows));
  }
  mean_and_se(rep.taylor_per_seed, rep.taylor_mean, rep.taylor_se);
  mean_and_se(rep.sample_per_seed, rep.sample_mean, rep.sample_se);
  return rep;
}

std::vector<VarianceReport> variance_across_training(Agent& agent, std::uint64_t seed,
                                                     const std::vector<std::int64_t>& checkpoints,
                                                     std::int64_t n_states,
                                                     std::int64_t n_repeats) {
  if (checkpoints.empty()) throw std::invalid_argument("variance_across_training: no checkpoints");
  if (!std::is_sorted(checkpoints.begin(), checkpoints.end()))
    throw std::invalid_argument("variance_across_training: checkpoints must be sorted");
  if (checkpoints.back() > agent.config().total_steps)
    throw std::invalid_argument("variance_across_training: checkpoint beyond total_steps");

  Rng meas_rng(seed, 41);
  std::vector<VarianceReport> reports;
  std::size_t next = 0;

  auto measure_now = [&](std::int64_t step) {
    const std::int64_t ds = PendulumEnv::obs_dim;
    Tensor states = Tensor::zeros({n_states, ds});
    Rng state_rng = meas_rng.fork(2000 + static_cast<std::uint64_t>(step));
    if (agent.buffer().size() >= n_states) {
      auto idx = agent.buffer().sample_indices(n_states, state_rng);
      for (std::int64_t i = 0; i < n_states; ++i)
        for (std::int64_t j = 0; j < ds; ++j)
          states.at(i, j) = agent.buffer().at(idx[static_cast<std::size_t>(i)]).s(0, j);
    } else {
      PendulumEnv env;
      for (std::int64_t i = 0; i < n_states; ++i) {
        Tensor obs = env.reset(state_rng);
        for (std::int64_t j = 0; j < ds; ++j) states.at(i, j) = obs(0, j);
      }
    }
    ModelFn model = [&agent](const Node& s, const Node& a) {
      Tensor zero_noise = Tensor::zeros({s.value().rows(), s.value().cols()});
      return predict(agent.ensemble(), agent.reward_model(), 0, s, a, zero_noise);
    };
    TargetSet targets{&agent.target_critic1(), &agent.target_critic2(), &agent.target_actor()};
    VarianceReport rep = measure_update_variance(agent.critic1(), targets, model, states,
                                                 agent.expansion(), n_repeats, meas_rng);
    rep.step = step;
    reports.push_back(rep);
  };

  train_on_pendulum(agent, seed, [&](std::int64_t step) {
    while (next < checkpoints.size() && checkpoints[next] == step) {
      measure_now(step);
      ++next;
    }
  });
  if (next != checkpoints.size())
    throw std::runtime_error("variance_across_training: checkpoint not reached");
  return reports;
}

// ---------------------------------------------------------------------------

StabilityReport stability_matrices(const MlpParams& features, const DriftFn& drift,
                                   const MlpParams& policy, const Tensor& states,
                                   const Tensor& actions, double gamma, double lambda_a,
                                   double dt) {
  const std::int64_t n = states.rows();
  if (actions.rows() != n)
    throw std::invalid_argument("stability_matrices: state/action row mismatch");
  const std::int64_t da = actions.cols();
  const std::int64_t N = features.output_dim();

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  Eigen::MatrixXd At = Eigen::MatrixXd::Zero(N, N);

  for (std::int64_t i = 0; i < n; ++i) {
    Tensor sv = Tensor::zeros({1, states.cols()}), av = Tensor::zeros({1, da});
    for (std::int64_t j = 0; j < states.cols(); ++j) sv.at(0, j) = states(i, j);
    for (std::int64_t j = 0; j < da; ++j) av.at(0, j) = actions(i, j);

    Node a = leaf(av);
    Node s = constant(sv);
    Node x = features.forward(concat_cols(s, a));
    Node s_next = s + mul_scalar(drift(s, a), dt);
    Node a_next = policy.forward(s_next);
    Node x_next = features.forward(concat_cols(s_next, a_next));

    Eigen::VectorXd xv(N), xnv(N);
    for (std::int64_t j = 0; j < N; ++j) {
      xv(j) = x.value()(0, j);
      xnv(j) = x_next.value()(0, j);
    }
    A += xv * (xv - gamma * xnv).transpose();

    // Jacobians w.r.t. the initial action, one feature at a time.
    Eigen::MatrixXd J(da, N), Jn(da, N);
    for (std::int64_t j = 0; j < N; ++j) {
      Tensor gx = gradient(slice_cols(x, j, j + 1), {a})[0];
      Tensor gxn = gradient(slice_cols(x_next, j, j + 1), {a})[0];
      for (std::int64_t q = 0; q < da; ++q) {
        J(q, j) = gx(0, q);
        Jn(q, j) = gxn(0, q);
      }
    }
    At += J.transpose() * (J - gamma * Jn);
  }
  A /= static_cast<double>(n);
  At /= static_cast<double>(n);

  auto min_sym_eig = [](const Eigen::MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
    return es.eigenvalues().minCoeff();
  };

  StabilityReport rep;
  rep.A = Tensor::zeros({N, N});
  rep.A_tilde = Tensor::zeros({N, N});
  for (std::int64_t i = 0; i < N; ++i)
    for (std::int64_t j = 0; j < N; ++j) {
      rep.A.at(i, j) = A(i, j);
      rep.A_tilde.at(i, j) = At(i, j);
    }
  rep.min_eig_sym_A = min_sym_eig(A);
  rep.min_eig_sym_A_tilde = min_sym_eig(At);
  rep.min_eig_sym_combined = min_sym_eig(A + lambda_a * At);
  rep.dt = dt;
  return rep;
}

namespace {

Eigen::MatrixXd combined_matrix(const StabilityReport& rep, double lambda_a) {
  const std::int64_t N = rep.A.rows();
  Eigen::MatrixXd M(N, N);
  for (std::int64_t i = 0; i < N; ++i)
    for (std::int64_t j = 0; j < N; ++j) M(i, j) = rep.A(i, j) + lambda_a * rep.A_tilde(i, j);
  return M;
}

}  // namespace

double stable_step_threshold(const StabilityReport& rep, double lambda_a) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(combined_matrix(rep, lambda_a));
  double eta = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const std::complex<double> mu = es.eigenvalues()(i);
    // |1 - eta*mu| < 1 for all eigenvalues iff Re(mu) > 0 and
    // eta < 2 Re(mu) / |mu|^2.
    if (mu.real() <= 0) return 0;
    eta = std::min(eta, 2.0 * mu.real() / std::norm(mu));
  }
  return eta;
}

IterationResult expected_update_iteration(const StabilityReport& rep, double lambda_a,
                                          const Tensor& u, double eta, std::int64_t max_iters,
                                          double tol) {
  const std::int64_t N = rep.A.rows();
  if (u.size() != N) throw std::invalid_argument("expected_update_iteration: u size mismatch");
  Eigen::MatrixXd M = combined_matrix(rep, lambda_a);
  Eigen::VectorXd uv(N), theta = Eigen::VectorXd::Zero(N);
  for (std::int64_t i = 0; i < N; ++i) uv(i) = u(i);

  IterationResult res;
  for (std::int64_t t = 0; t < max_iters; ++t) {
    Eigen::VectorXd step = eta * (uv - M * theta);
    theta += step;
    if (step.norm() < tol) {
      res.converged = true;
      res.iterations = t + 1;
      break;
    }
  }
  if (!res.converged) res.iterations = max_iters;
  res.fixed_point = Tensor::zeros({1, N});
  for (std::int64_t i = 0; i < N; ++i) res.fixed_point.at(0, i) = theta(i);
  return res;
}

// ---------------------------------------------------------------------------

void ToyConfig::validate() const {
  if (d < 1 || d > 100) throw std::invalid_argument("ToyConfig: d must be in [1, 100]");
  if (train_points < 2) throw std::invalid_argument("ToyConfig: need >= 2 train points");
  if (lambda_x < 0 || !std::isfinite(lambda_x))
    throw std::invalid_argument("ToyConfig: lambda_x must be finite and >= 0");
  if (test_points < 1 || train_iters < 1 || lr <= 0)
    throw std::invalid_argument("ToyConfig: bad test_points/train_iters/lr");
}

Node toy_taylor_objective(const MlpParams& net, const MlpParams& target, const Tensor& xs,
                          double lambda_x) {
  Node x = leaf(xs);
  Node yhat = net.forward(x);
  Node gy_hat = gradient_nodes(sum(yhat), {x})[0];  // differentiable w.r.t. net params

  Node xc = leaf(xs);
  Node y = target.forward(xc);
  Tensor gy = gradient(sum(y), {xc})[0];  // target gradients are constants

  Node value_term = mul_scalar(square(sub(constant(y.value()), yhat)), 0.5);
  Node grad_term =
      mul_scalar(rowwise_sum(square(sub(constant(gy), gy_hat))), 0.5 * lambda_x);
  return mean(add(value_term, grad_term));
}

double toy_experiment(const ToyConfig& cfg, ToyMethod method, std::uint64_t seed) {
  cfg.validate();
  Rng target_rng(cfg.target_seed, 21);
  MlpParams target = MlpParams::create({cfg.d, 64, 1}, Activation::Tanh, target_rng);
  MlpParams target_c = target.target_copy();

  Rng data_rng(seed, 22);
  Tensor x_train = data_rng.normal_tensor({cfg.train_points, cfg.d});
  Tensor x_test = data_rng.normal_tensor({cfg.test_points, cfg.d});

  Rng init_rng(seed, 23);
  MlpParams net = MlpParams::create({cfg.d, 64, 1}, Activation::Tanh, init_rng);
  Adam opt(cfg.lr);
  Rng noise_rng(seed, 24);
  const double scale = std::sqrt(cfg.lambda_x);

  for (std::int64_t it = 0; it < cfg.train_iters; ++it) {
    Node loss;
    if (method == ToyMethod::Taylor) {
      loss = toy_taylor_objective(net, target_c, x_train, cfg.lambda_x);
    } else {
      Tensor xp = x_train;
      for (auto& v : xp.data()) v += scale * noise_rng.normal();
      Tensor yp;
      {
        NoGradGuard ng;
        yp = target_c.forward(constant(xp)).value();
      }
      Node pred = net.forward(constant(xp));
      loss = mean(mul_scalar(square(sub(constant(yp), pred)), 0.5));
    }
    opt.step(net, gradient(loss, net.params()));
  }

  // Test metric: the training objective itself on held-out inputs — the
  // expected squared error over input perturbations, estimated by Monte Carlo
  // with draws shared between both arms (same eval stream).
  Rng eval_rng(cfg.target_seed, 25);
  const int mc = 2000;
  NoGradGuard ng;
  double mse = 0;
  for (std::int64_t i = 0; i < cfg.test_points; ++i) {
    Tensor xi = Tensor::zeros({mc, cfg.d});
    for (int r = 0; r < mc; ++r)
      for (std::int64_t j = 0; j < cfg.d; ++j)
        xi.at(r, j) = x_test(i, j) + scale * eval_rng.normal();
    Tensor ys = target_c.forward(constant(xi)).value();
    Tensor yh = net.forward(constant(xi)).value();
    double err = 0;
    for (int r = 0; r < mc; ++r) {
      const double e = ys(r, 0) - yh(r, 0);
      err += e * e;
    }
    mse += err / mc;
  }
  return mse / static_cast<double>(cfg.test_points);
}

// ---------------------------------------------------------------------------

void write_long_csv(const std::string& path, const std::vector<CsvRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_long_csv: cannot open " + path);
  out << "seed,condition,metric,value\n";
  for (const auto& r : rows) {
    std::ostringstream line;
    line.precision(17);
    line << r.seed << ',' << r.condition << ',' << r.metric << ',' << r.value << '\n';
    out << line.str();
  }
}

void write_json_summary(const std::string& path,
                        const std::map<std::string, double>& summary) {
  nlohmann::json j(summary);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_json_summary: cannot open " + path);
  out << j.dump(2) << '\n';
}

}  // namespace ttd
