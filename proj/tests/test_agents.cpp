#include <doctest.h>
#include <ttd/agents.hpp>

#include <chrono>
#include <cmath>
#include <vector>

using namespace ttd;

namespace {

Transition dummy_transition(Rng& rng, double tag = 0) {
  Tensor s = rng.normal_tensor({1, 3});
  Tensor a = rng.uniform_tensor({1, 1}, -2, 2);
  Tensor sn = rng.normal_tensor({1, 3});
  return {s, a, tag, sn, false};
}

AgentConfig tiny_config() {
  AgentConfig cfg;
  cfg.batch_size = 4;
  cfg.warmup_steps = 32;
  cfg.total_steps = 200;
  cfg.dyna_updates = 1;
  cfg.model_initial_steps = 10;
  cfg.model_burst_interval = 100;
  cfg.model_burst_steps = 2;
  cfg.model_batch_size = 16;
  cfg.eval_interval = 100;
  cfg.eval_episodes = 1;
  cfg.model_hidden = {16, 16};
  cfg.reward_hidden = {16};
  cfg.critic_hidden = {16, 16};
  cfg.actor_hidden = {16};
  return cfg;
}

void fill_buffer(Agent& agent, std::uint64_t seed, int n) {
  Rng rng(seed, 91);
  for (int i = 0; i < n; ++i) agent.buffer().push(dummy_transition(rng));
}

bool params_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (a[p].shape() != b[p].shape()) return false;
    for (std::int64_t i = 0; i < a[p].size(); ++i)
      if (a[p].data()[static_cast<std::size_t>(i)] !=
          b[p].data()[static_cast<std::size_t>(i)])
        return false;
  }
  return true;
}

}  // namespace

TEST_CASE("behavioural action: deterministic at zero noise, bounded, reproducible") {
  Rng rng(101, 0);
  MlpParams actor = MlpParams::create({3, 8, 1}, Activation::Relu, rng, true, 2.0);
  Tensor obs = rng.normal_tensor({1, 3});

  Rng r1(5, 0), r2(5, 0);
  Tensor a0 = behavioural_action(actor, obs, 0.0, 2.0, r1);
  NoGradGuard ng;
  CHECK(a0(0, 0) == actor.forward(constant(obs)).value()(0, 0));

  Rng r3(6, 0);
  for (int i = 0; i < 10000; ++i) {
    Tensor a = behavioural_action(actor, obs, 0.4, 2.0, r3);
    CHECK(std::abs(a(0, 0)) <= 2.0);
  }

  Rng r4(7, 0), r5(7, 0);
  for (int i = 0; i < 20; ++i)
    CHECK(behavioural_action(actor, obs, 0.4, 2.0, r4)(0, 0) ==
          behavioural_action(actor, obs, 0.4, 2.0, r5)(0, 0));
}

TEST_CASE("replay buffer: FIFO eviction and distinct in-batch indices") {
  ReplayBuffer buf(5);
  Rng rng(102, 0);
  for (int i = 0; i < 8; ++i) buf.push(dummy_transition(rng, static_cast<double>(i)));
  CHECK(buf.size() == 5);
  // oldest three evicted: tags 0,1,2 gone
  std::vector<double> tags;
  for (std::int64_t i = 0; i < buf.size(); ++i) tags.push_back(buf.at(i).r);
  for (double t : tags) CHECK(t >= 3.0);

  Rng srng(103, 0);
  for (int rep = 0; rep < 100; ++rep) {
    auto idx = buf.sample_indices(4, srng);
    CHECK(idx.size() == 4);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = i + 1; j < idx.size(); ++j) CHECK(idx[i] != idx[j]);
  }
}

TEST_CASE("replay sampling is uniform (chi-squared over 1e5 draws)") {
  const std::int64_t n = 50;
  ReplayBuffer buf(n);
  Rng rng(104, 0);
  for (std::int64_t i = 0; i < n; ++i) buf.push(dummy_transition(rng));

  std::vector<std::int64_t> counts(static_cast<std::size_t>(n), 0);
  Rng srng(105, 0);
  const int batches = 20000, per_batch = 5;
  for (int b = 0; b < batches; ++b)
    for (auto i : buf.sample_indices(per_batch, srng))
      ++counts[static_cast<std::size_t>(i)];

  double e = static_cast<double>(batches) * per_batch / static_cast<double>(n);
  double chi2 = 0;
  for (auto c : counts) chi2 += (c - e) * (c - e) / e;
  // p > 0.01 for df = 49 <=> chi2 below the 0.99 quantile (Wilson-Hilferty)
  double df = static_cast<double>(n - 1);
  double z = 2.3263478740408408;
  double crit = df * std::pow(1.0 - 2.0 / (9 * df) + z * std::sqrt(2.0 / (9 * df)), 3.0);
  CHECK(chi2 < crit);
}

TEST_CASE("tatd3 with zero lambdas reproduces dyna-td3 bitwise") {
  AgentConfig cfg = tiny_config();
  ExpansionConfig exp0;
  exp0.lambda_a = 0;
  exp0.lambda_s = 0;
  Agent tatd3(AgentKind::TaTD3, cfg, exp0, 3, 1, 2.0, 999);
  Agent dyna(AgentKind::DynaTD3, cfg, exp0, 3, 1, 2.0, 999);
  fill_buffer(tatd3, 1, 64);
  fill_buffer(dyna, 1, 64);
  REQUIRE(params_equal(tatd3.critic_param_values(), dyna.critic_param_values()));
  for (int i = 0; i < 1000; ++i) {
    tatd3.critic_update();
    dyna.critic_update();
  }
  CHECK(params_equal(tatd3.critic_param_values(), dyna.critic_param_values()));
  // and training actually moved the parameters
  Agent fresh(AgentKind::TaTD3, cfg, exp0, 3, 1, 2.0, 999);
  CHECK_FALSE(params_equal(tatd3.critic_param_values(), fresh.critic_param_values()));
}

TEST_CASE("sample-expected with single perturbations and zero scales equals dyna") {
  AgentConfig cfg = tiny_config();
  cfg.state_perturbations = 1;
  cfg.action_perturbations = 1;
  ExpansionConfig exp0;
  exp0.lambda_a = 0;
  exp0.lambda_s = 0;
  Agent se(AgentKind::SampleExpected, cfg, exp0, 3, 1, 2.0, 321);
  Agent dyna(AgentKind::DynaTD3, cfg, exp0, 3, 1, 2.0, 321);
  fill_buffer(se, 2, 64);
  fill_buffer(dyna, 2, 64);
  for (int i = 0; i < 50; ++i) {
    se.critic_update();
    dyna.critic_update();
  }
  CHECK(params_equal(se.critic_param_values(), dyna.critic_param_values()));
}

TEST_CASE("sample-expected update costs more than the dyna update") {
  AgentConfig cfg = tiny_config();
  cfg.batch_size = 2;
  ExpansionConfig exp;
  exp.lambda_a = 0.25;
  exp.lambda_s = 1e-3;
  Agent se(AgentKind::SampleExpected, cfg, exp, 3, 1, 2.0, 77);
  Agent dyna(AgentKind::DynaTD3, cfg, exp, 3, 1, 2.0, 77);
  fill_buffer(se, 3, 64);
  fill_buffer(dyna, 3, 64);
  auto time_updates = [](Agent& a, int n) {
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) a.critic_update();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  double t_se = time_updates(se, 20);
  double t_dyna = time_updates(dyna, 20);
  CHECK(t_se > t_dyna);  // it evaluates 100x the TD errors per sampled state
}

TEST_CASE("actor update: constant critic gives zero movement; otherwise ascends Q") {
  AgentConfig cfg = tiny_config();
  ExpansionConfig exp;
  Agent agent(AgentKind::TaTD3, cfg, exp, 3, 1, 2.0, 55);
  Rng rng(106, 0);
  Tensor states = rng.normal_tensor({8, 3});

  // constant critic: zero every weight, set only the output bias
  auto cv = agent.critic1().param_values();
  for (auto& t : cv)
    for (auto& v : t.data()) v = 0.0;
  cv.back().at(0) = 1.5;
  agent.critic1().set_param_values(cv);
  auto before = agent.actor().param_values();
  agent.actor_update(states);
  CHECK(params_equal(before, agent.actor().param_values()));

  // restore a real critic; the update must not decrease mean Q
  Agent agent2(AgentKind::TaTD3, cfg, exp, 3, 1, 2.0, 56);
  auto mean_q = [&](Agent& ag) {
    NoGradGuard ng;
    Node s = constant(states);
    return evaluate(mean(critic_forward(ag.critic1(), s, ag.actor().forward(s)))).item();
  };
  double q0 = mean_q(agent2);
  for (int i = 0; i < 5; ++i) agent2.actor_update(states);
  CHECK(mean_q(agent2) > q0);
}

TEST_CASE("actor gradient matches finite differences on a tiny net") {
  AgentConfig cfg = tiny_config();
  cfg.actor_hidden = {4};
  cfg.critic_hidden = {6};
  ExpansionConfig exp;
  Agent agent(AgentKind::TaTD3, cfg, exp, 3, 1, 2.0, 57);
  Rng rng(107, 0);
  Tensor states = rng.normal_tensor({3, 3});

  Node s = constant(states);
  Node loss = neg(mean(critic_forward(agent.critic1(), s, agent.actor().forward(s))));
  auto grads = gradient(loss, agent.actor().params());
  auto vals = agent.actor().param_values();
  for (std::size_t p = 0; p < vals.size(); ++p) {
    Tensor fd = finite_difference_gradient(
        [&](const Tensor& pv) {
          NoGradGuard ng;
          auto trial = vals;
          trial[p] = pv;
          agent.actor().set_param_values(trial);
          double out = evaluate(neg(mean(critic_forward(
                                    agent.critic1(), s, agent.actor().forward(s)))))
                           .item();
          agent.actor().set_param_values(vals);
          return out;
        },
        vals[p], 1e-6);
    for (std::int64_t i = 0; i < fd.size(); ++i)
      CHECK(grads[p].data()[static_cast<std::size_t>(i)] ==
            doctest::Approx(fd.data()[static_cast<std::size_t>(i)]).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("full training runs are bitwise reproducible") {
  AgentConfig cfg = tiny_config();
  ExpansionConfig exp;
  exp.lambda_a = 0.25;
  exp.lambda_s = 1e-5;
  Agent a1(AgentKind::TaTD3, cfg, exp, 3, 1, 2.0, 2024);
  Agent a2(AgentKind::TaTD3, cfg, exp, 3, 1, 2.0, 2024);
  auto c1 = train_on_pendulum(a1, 12);
  auto c2 = train_on_pendulum(a2, 12);
  REQUIRE(c1.size() == c2.size());
  REQUIRE(!c1.empty());
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1[i].step == c2[i].step);
    CHECK(c1[i].eval_return == c2[i].eval_return);
    CHECK(c1[i].critic_loss == c2[i].critic_loss);
  }
  CHECK(params_equal(a1.critic_param_values(), a2.critic_param_values()));
}

TEST_CASE("soft update blend: tau=1 copies, equal start is a fixed point") {
  Rng rng(108, 0);
  MlpParams online = MlpParams::create({2, 4, 1}, Activation::Relu, rng);
  MlpParams target = MlpParams::create({2, 4, 1}, Activation::Relu, rng).target_copy();
  soft_update(target, online, 1.0);
  CHECK(params_equal(target.param_values(), online.param_values()));
  soft_update(target, online, 0.005);
  soft_update(target, online, 0.005);
  CHECK(params_equal(target.param_values(), online.param_values()));
}

TEST_CASE("averaged 10x10 perturbation estimator aligns with the expected update") {
  // linear critic and exact affine model: the sample-based expected-TD
  // estimator, averaged over many draws, must point along the true expected
  // update (here computed by a large MC oracle)
  std::int64_t ds = 2, da = 1;
  Rng rng(109, 0);
  MlpParams critic = MlpParams::create({ds + da, 1}, Activation::Relu, rng);
  MlpParams tcritic = MlpParams::create({ds + da, 1}, Activation::Relu, rng).target_copy();
  MlpParams tactor = MlpParams::create({ds, da}, Activation::Relu, rng).target_copy();
  TargetSet tg{&tcritic, nullptr, &tactor};

  Tensor F = Tensor::matrix(2, 2, {-0.5, 0.2, -0.2, -0.5});
  Tensor G = Tensor::matrix(2, 1, {0.3, 1.0});
  Tensor wr = Tensor::matrix(3, 1, {0.4, -0.2, 0.5});
  double dt = 0.1, gamma = 0.9;
  ModelFn model = [&](const Node& s, const Node& a) -> Prediction {
    Node drift = matmul(s, transpose(constant(F))) + matmul(a, transpose(constant(G)));
    return {matmul(concat_cols(s, a), constant(wr)), s + mul_scalar(drift, dt)};
  };

  ExpansionConfig cfg;
  cfg.lambda_a = 0.25;
  cfg.lambda_s = 0.04;
  cfg.gamma = gamma;

  Tensor s_val = rng.normal_tensor({1, ds});
  Tensor a_val = rng.normal_tensor({1, da});
  Rng orng(110, 0);
  auto oracle =
      expected_update_mc_oracle(critic, tg, model, s_val, a_val, cfg, 200000, orng);

  // estimator: mean over repetitions of the 10x10 averaged single-sample update
  auto params = critic.params();
  std::vector<Tensor> acc;
  for (const auto& p : params) acc.push_back(Tensor::zeros(p.value().shape()));
  Rng erng(111, 0);
  const int reps = 300;
  for (int rep = 0; rep < reps; ++rep) {
    for (int i = 0; i < 10; ++i) {
      Tensor ps = s_val;
      for (auto& v : ps.data()) v += std::sqrt(cfg.lambda_s) * erng.normal();
      for (int j = 0; j < 10; ++j) {
        Tensor pa = a_val;
        for (auto& v : pa.data()) v += std::sqrt(cfg.lambda_a) * erng.normal();
        Node sn = constant(ps), an = constant(pa);
        double dval;
        {
          NoGradGuard ng;
          Prediction pr = model(sn, an);
          dval = evaluate(td_delta(critic, tg, pr, sn, an, gamma)).item();
        }
        auto gq = gradient(sum(critic_forward(critic, sn, an)), params);
        for (std::size_t p = 0; p < params.size(); ++p)
          for (std::int64_t k = 0; k < gq[p].size(); ++k)
            acc[p].data()[static_cast<std::size_t>(k)] +=
                dval * gq[p].data()[static_cast<std::size_t>(k)] / (100.0 * reps);
      }
    }
  }

  double dot = 0, na = 0, nb = 0;
  for (std::size_t p = 0; p < acc.size(); ++p)
    for (std::int64_t k = 0; k < acc[p].size(); ++k) {
      auto kk = static_cast<std::size_t>(k);
      dot += acc[p].data()[kk] * oracle.mean[p].data()[kk];
      na += acc[p].data()[kk] * acc[p].data()[kk];
      nb += oracle.mean[p].data()[kk] * oracle.mean[p].data()[kk];
    }
  CHECK(dot / std::sqrt(na * nb) > 0.99);
}
