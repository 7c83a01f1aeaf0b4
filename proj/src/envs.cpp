#include "ttd/envs.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ttd {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_pi(double x) {
  double y = std::fmod(x + kPi, 2 * kPi);
  if (y < 0) y += 2 * kPi;
  return y - kPi;
}

}  // namespace

PendulumStepResult pendulum_step(double theta, double theta_dot, double action) {
  if (!std::isfinite(action)) throw std::invalid_argument("pendulum_step: non-finite action");
  using C = PendulumConsts;
  double u = std::clamp(action, -C::max_torque, C::max_torque);
  double cost = wrap_pi(theta) * wrap_pi(theta) + 0.1 * theta_dot * theta_dot + 0.001 * u * u;
  double acc = 3.0 * C::g / (2.0 * C::l) * std::sin(theta) + 3.0 / (C::m * C::l * C::l) * u;
  double new_dot = std::clamp(theta_dot + acc * C::dt, -C::max_speed, C::max_speed);
  double new_theta = theta + new_dot * C::dt;
  return {new_theta, new_dot, -cost};
}

PendulumStepNodes pendulum_step_nodes(const Node& state, const Node& action) {
  using C = PendulumConsts;
  Node theta = slice_cols(state, 0, 1);
  Node theta_dot = slice_cols(state, 1, 2);
  Node u = clip(action, -C::max_torque, C::max_torque);
  Node cost = sum(square(wrap_angle(theta))) + mul_scalar(sum(square(theta_dot)), 0.1) +
              mul_scalar(sum(square(u)), 0.001);
  Node acc = mul_scalar(sin_(theta), 3.0 * C::g / (2.0 * C::l)) +
             mul_scalar(reshape(u, {1, 1}), 3.0 / (C::m * C::l * C::l));
  Node new_dot = clip(theta_dot + mul_scalar(acc, C::dt), -C::max_speed, C::max_speed);
  Node new_theta = theta + mul_scalar(new_dot, C::dt);
  return {concat_cols(new_theta, new_dot), neg(cost)};
}

Tensor pendulum_observation(double theta, double theta_dot) {
  return Tensor::matrix(1, 3, {std::cos(theta), std::sin(theta), theta_dot});
}

Tensor PendulumEnv::reset(Rng& rng) {
  theta_ = rng.uniform(-kPi, kPi);
  theta_dot_ = rng.uniform(-1.0, 1.0);
  episode_steps_ = 0;
  return observation();
}

double PendulumEnv::step(double action) {
  auto r = pendulum_step(theta_, theta_dot_, action);
  theta_ = r.theta;
  theta_dot_ = r.theta_dot;
  ++episode_steps_;
  return r.reward;
}

void PendulumEnv::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
  episode_steps_ = 0;
}

void LqSpec::validate() const {
  std::int64_t ds = state_dim(), da = action_dim();
  if (F.rows() != ds || F.cols() != ds) throw std::invalid_argument("LqSpec: F not square");
  if (G.rows() != ds) throw std::invalid_argument("LqSpec: G row count != state dim");
  if (C.rows() != ds || C.cols() != ds)
    throw std::invalid_argument("LqSpec: cost matrix shape mismatch");
  for (std::int64_t i = 0; i < ds; ++i)
    for (std::int64_t j = 0; j < ds; ++j)
      if (std::abs(C(i, j) - C(j, i)) > 1e-12)
        throw std::invalid_argument("LqSpec: cost matrix not symmetric");
  if (dt <= 0) throw std::invalid_argument("LqSpec: dt must be positive");
  (void)da;
}

LqSpec LqSpec::random(std::int64_t d_s, std::int64_t d_a, Rng& rng, double dt,
                      double noise_scale) {
  LqSpec spec;
  Tensor f = Tensor::zeros({d_s, d_s});
  Tensor skew = rng.normal_tensor({d_s, d_s}, 0.3);
  for (std::int64_t i = 0; i < d_s; ++i) {
    for (std::int64_t j = 0; j < d_s; ++j) f.at(i, j) = 0.5 * (skew(i, j) - skew(j, i));
    f.at(i, i) -= 1.0;  // strictly stable drift
  }
  spec.F = f;
  spec.G = rng.normal_tensor({d_s, d_a}, 0.5);
  Tensor b = rng.normal_tensor({d_s, d_s}, 0.3);
  Tensor c = Tensor::zeros({d_s, d_s});
  for (std::int64_t i = 0; i < d_s; ++i) {  // C = B B^T + 0.1 I, symmetric PD
    for (std::int64_t j = 0; j < d_s; ++j) {
      double acc = (i == j) ? 0.1 : 0.0;
      for (std::int64_t p = 0; p < d_s; ++p) acc += b(i, p) * b(j, p);
      c.at(i, j) = acc;
    }
  }
  spec.C = c;
  spec.dt = dt;
  spec.noise_scale = noise_scale;
  return spec;
}

LqStepResult lq_step(const Tensor& s, const Tensor& a, const LqSpec& spec,
                     const Tensor& noise) {
  auto nodes = lq_step_nodes(constant(s), constant(a), spec, noise);
  return {nodes.s_next.value(), nodes.reward.value().item()};
}

LqStepNodes lq_step_nodes(const Node& s, const Node& a, const LqSpec& spec,
                          const Tensor& noise) {
  if (s.value().cols() != spec.state_dim() || a.value().cols() != spec.action_dim())
    throw std::invalid_argument("lq_step: dimension mismatch with spec");
  if (noise.size() != spec.state_dim())
    throw std::invalid_argument("lq_step: noise dimension mismatch");
  Node ft = constant(spec.F), gt = constant(spec.G), ct = constant(spec.C);
  Node drift = matmul(s, transpose(ft)) + matmul(a, transpose(gt));
  Tensor scaled_noise = Tensor::matrix(1, spec.state_dim(), noise.data());
  for (auto& v : scaled_noise.data()) v *= spec.noise_scale;
  Node s_next = s + mul_scalar(drift, spec.dt) + constant(scaled_noise);
  Node reward = neg(sum(mul(matmul(s, ct), s)) +
                    mul_scalar(sum(square(a)), spec.action_cost));
  return {s_next, reward};
}

std::vector<Transition> rollout(PendulumEnv& env, const Policy& policy, int horizon,
                                std::uint64_t seed) {
  if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
  Rng rng(seed, 17);
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(horizon));
  Tensor obs = env.reset(rng);
  for (int t = 0; t < horizon; ++t) {
    Tensor a = policy(obs, rng);
    if (a.size() != PendulumEnv::act_dim)
      throw std::invalid_argument("rollout: policy output has wrong dimension");
    double r = env.step(a.data()[0]);
    Tensor next = env.observation();
    bool done = env.episode_over();
    out.push_back({obs, a, r, next, done});
    obs = done ? env.reset(rng) : next;
  }
  return out;
}

}  // namespace ttd
