#include "rorl/envs/toy_env.hpp"

#include <cmath>
#include <numbers>

#include "rorl/errors.hpp"

namespace rorl::envs {

ToyEnv ToyEnv::point_mass() { return ToyEnv{}; }

ToyEnv ToyEnv::spring_pendulum() {
  ToyEnv env;
  env.kind = EnvKind::spring_pendulum;
  env.state_dim = 3;
  env.action_dim = 1;
  env.dt = 0.05;
  env.process_noise = 0.01;
  return env;
}

ToyEnv ToyEnv::make(std::string_view name) {
  if (name == "point_mass") return point_mass();
  if (name == "spring_pendulum") return spring_pendulum();
  throw ContractError("unknown environment '" + std::string(name) +
                      "' (expected point_mass or spring_pendulum)");
}

std::string ToyEnv::name() const {
  return kind == EnvKind::point_mass ? "point_mass" : "spring_pendulum";
}

namespace {

double wrap_angle(double th) {
  const double two_pi = 2.0 * std::numbers::pi;
  th = std::fmod(th + std::numbers::pi, two_pi);
  if (th < 0) th += two_pi;
  return th - std::numbers::pi;
}

StepResult step_point_mass(const ToyEnv& env, const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                           Rng& rng) {
  StepResult out;
  Eigen::Vector2d p = s.head<2>();
  Eigen::Vector2d v = s.tail<2>();
  v = v * (1.0 - env.damping * env.dt) + env.dt * env.accel_gain * a;
  if (env.process_noise > 0) {
    std::normal_distribution<double> noise(0.0, env.process_noise);
    v(0) += noise(rng);
    v(1) += noise(rng);
  }
  p += env.dt * v;
  for (int i = 0; i < 2; ++i) {
    if (std::abs(p(i)) > env.arena) {
      p(i) = std::copysign(env.arena, p(i));
      v(i) = 0.0;
    }
  }
  out.s_next.resize(4);
  out.s_next << p, v;
  out.reward = -p.norm() - 0.01 * a.squaredNorm();
  return out;
}

StepResult step_pendulum(const ToyEnv& env, const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                         Rng& rng) {
  StepResult out;
  const double th = std::atan2(s(1), s(0));
  const double torque = env.max_torque * a(0);
  const double accel = 1.5 * env.gravity / env.length * std::sin(th) - env.spring * th +
                       3.0 / (env.mass * env.length * env.length) * torque;
  double th_dot = s(2) + env.dt * accel;
  if (env.process_noise > 0) {
    std::normal_distribution<double> noise(0.0, env.process_noise);
    th_dot += noise(rng);
  }
  th_dot = std::clamp(th_dot, -env.max_speed, env.max_speed);
  const double th_next = wrap_angle(th + env.dt * th_dot);
  out.s_next.resize(3);
  out.s_next << std::cos(th_next), std::sin(th_next), th_dot;
  out.reward = -(th * th + 0.1 * s(2) * s(2) + 0.001 * torque * torque);
  return out;
}

}  // namespace

Eigen::VectorXd env_reset(const ToyEnv& env, Rng& rng) {
  if (env.kind == EnvKind::point_mass) {
    std::uniform_real_distribution<double> pos(-env.start_radius, env.start_radius);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(4);
    s(0) = pos(rng);
    s(1) = pos(rng);
    return s;
  }
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> speed(-1.0, 1.0);
  const double th = angle(rng);
  Eigen::VectorXd s(3);
  s << std::cos(th), std::sin(th), speed(rng);
  return s;
}

StepResult env_step(const ToyEnv& env, const Eigen::VectorXd& s, const Eigen::VectorXd& a, int t,
                    Rng& rng) {
  if (s.size() != env.state_dim || a.size() != env.action_dim)
    throw ShapeError("env_step: state/action dimension mismatch for " + env.name());
  const Eigen::VectorXd clipped = a.cwiseMax(-1.0).cwiseMin(1.0);
  const bool was_clipped = (clipped.array() != a.array()).any();
  StepResult out = env.kind == EnvKind::point_mass ? step_point_mass(env, s, clipped, rng)
                                                   : step_pendulum(env, s, clipped, rng);
  out.action_clipped = was_clipped;
  out.terminal = false;
  out.done = out.terminal || t + 1 >= env.horizon;
  return out;
}

ActionFn uniform_random_actions(const ToyEnv& env) {
  const int m = env.action_dim;
  return [m](const Eigen::VectorXd&, Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd a(m);
    for (int i = 0; i < m; ++i) a(i) = u(rng);
    return a;
  };
}

ActionFn expert_controller(const ToyEnv& env) {
  if (env.kind == EnvKind::point_mass) {
    return [](const Eigen::VectorXd& s, Rng&) -> Eigen::VectorXd {
      Eigen::VectorXd a = -1.0 * s.head<2>() - 1.5 * s.tail<2>();
      return a.cwiseMax(-1.0).cwiseMin(1.0);
    };
  }
  return [](const Eigen::VectorXd& s, Rng&) -> Eigen::VectorXd {
    const double th = std::atan2(s(1), s(0));
    Eigen::VectorXd a(1);
    a(0) = std::clamp(-(3.0 * th + 1.0 * s(2)), -1.0, 1.0);
    return a;
  };
}

EpisodeStats run_episode(const ToyEnv& env, const ActionFn& act, Rng& rng) {
  EpisodeStats stats;
  Eigen::VectorXd s = env_reset(env, rng);
  for (int t = 0; t < env.horizon; ++t) {
    const Eigen::VectorXd a = act(s, rng);
    StepResult r = env_step(env, s, a, t, rng);
    stats.total_return += r.reward;
    stats.steps += 1;
    stats.clipped_actions += r.action_clipped ? 1 : 0;
    s = std::move(r.s_next);
    if (r.done) break;
  }
  return stats;
}

ReferenceScores measure_reference_scores(const ToyEnv& env, int episodes, std::uint64_t seed) {
  ReferenceScores scores;
  const ActionFn random = uniform_random_actions(env);
  const ActionFn expert = expert_controller(env);
  for (int e = 0; e < episodes; ++e) {
    Rng rng_random = make_stream(seed, 1000 + e);
    Rng rng_expert = make_stream(seed, 1000 + e);
    scores.random_score += run_episode(env, random, rng_random).total_return;
    scores.expert_score += run_episode(env, expert, rng_expert).total_return;
  }
  scores.random_score /= episodes;
  scores.expert_score /= episodes;
  return scores;
}

}  // namespace rorl::envs
