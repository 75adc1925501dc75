#pragma once

#include <functional>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "rorl/nn/random.hpp"

namespace rorl::envs {

enum class EnvKind { point_mass, spring_pendulum };

/// Desk-scale continuous-control task.
///
/// point_mass: state (px, py, vx, vy); action is a 2-D acceleration. The
/// goal sits at the origin and reward is -||p' - goal|| - 0.01 ||a||^2.
///
/// spring_pendulum: state (cos th, sin th, th_dot); action is a torque.
/// th = 0 is upright, a spring pulls toward it, and reward is
/// -(th^2 + 0.1 th_dot^2 + 0.001 torque^2).
///
/// Neither task has a failure predicate, so episodes end at the horizon.
struct ToyEnv {
  EnvKind kind = EnvKind::point_mass;
  int state_dim = 4;
  int action_dim = 2;
  int horizon = 200;
  double dt = 0.1;
  double process_noise = 0.005;  // std of velocity noise per step

  // point_mass
  double accel_gain = 2.0;
  double damping = 0.5;  // fraction of velocity lost per unit time
  double arena = 4.0;    // positions clipped to [-arena, arena]
  double start_radius = 2.0;

  // spring_pendulum
  double gravity = 10.0;
  double length = 1.0;
  double mass = 1.0;
  double spring = 4.0;
  double max_torque = 2.0;
  double max_speed = 8.0;

  static ToyEnv point_mass();
  static ToyEnv spring_pendulum();
  /// "point_mass" or "spring_pendulum"; throws ContractError otherwise.
  static ToyEnv make(std::string_view name);
  std::string name() const;
};

struct StepResult {
  Eigen::VectorXd s_next;
  double reward = 0.0;
  bool done = false;      // episode over (failure or horizon)
  bool terminal = false;  // failure only; what datasets store
  bool action_clipped = false;
};

Eigen::VectorXd env_reset(const ToyEnv& env, Rng& rng);

/// Advances one step from `s` at episode time `t` (0-based). Out-of-range
/// actions are clipped to [-1, 1] and flagged in the result.
StepResult env_step(const ToyEnv& env, const Eigen::VectorXd& s, const Eigen::VectorXd& a, int t,
                    Rng& rng);

/// Maps a state to an action. May draw from `rng`.
using ActionFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& state, Rng& rng)>;

ActionFn uniform_random_actions(const ToyEnv& env);

/// Hand-written stabilizing controller used as the expert reference.
ActionFn expert_controller(const ToyEnv& env);

struct EpisodeStats {
  double total_return = 0.0;
  int steps = 0;
  int clipped_actions = 0;
};

EpisodeStats run_episode(const ToyEnv& env, const ActionFn& act, Rng& rng);

struct ReferenceScores {
  double random_score = 0.0;
  double expert_score = 0.0;
};

/// Mean episode return of the uniform-random and expert policies.
ReferenceScores measure_reference_scores(const ToyEnv& env, int episodes, std::uint64_t seed);

}  // namespace rorl::envs
