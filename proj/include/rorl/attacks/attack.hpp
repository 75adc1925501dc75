#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rorl/algo/agent.hpp"

namespace rorl::attacks {

/// random: one uniform draw from the ball.
/// action_diff: maximize D_J(pi(.|s) || pi(.|s_hat)).
/// min_q: minimize the ensemble-mean Q(s, pi(s_hat)).
enum class AttackKind { random, action_diff, min_q };
enum class OptimizerKind { zero_order, mixed_order };

AttackKind parse_attack_kind(const std::string& name);
OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(AttackKind kind);
std::string to_string(OptimizerKind kind);

struct AttackSpec {
  AttackKind kind = AttackKind::random;
  double epsilon = 0.0;  // l-inf radius in normalized observation space
  OptimizerKind optimizer = OptimizerKind::zero_order;
  int num_candidates = 50;
  int num_inits = 20;
  int num_steps = 10;
  std::optional<double> step_size;  // defaults to epsilon / 10
  /// min_q only: score candidates with a sampled action instead of tanh(mean).
  bool stochastic_actions = false;

  double resolved_step_size() const { return step_size ? *step_size : epsilon / 10.0; }
  void validate() const;
};

/// What the optimizer looked at. For zero_order, candidates and scores are
/// the full enumerable set. For mixed_order, iterates[k] holds every init
/// after k sign-gradient steps (num_steps + 1 matrices of num_inits columns),
/// candidates holds the endpoints, and scores their scores.
struct AttackTrace {
  Eigen::MatrixXd candidates;
  Eigen::VectorXd scores;  // larger is worse for the agent
  std::vector<Eigen::MatrixXd> iterates;
  int chosen = 0;
};

/// The attacker's objective at s_hat for true state s; larger is worse for
/// the agent. Zero for the random attack.
double attack_score(const algo::PolicyD& policy, const algo::EnsembleCritic* critic,
                    const Eigen::VectorXd& s, const Eigen::VectorXd& s_hat, const AttackSpec& spec);

/// Perturbed observation with |s_hat - s|_inf <= epsilon. Ties go to the
/// lowest index. Throws CapabilityError for min_q without a critic.
Eigen::VectorXd attack_state(const algo::PolicyD& policy, const algo::EnsembleCritic* critic,
                             const Eigen::VectorXd& s, const AttackSpec& spec, Rng& rng,
                             AttackTrace* trace = nullptr);

inline Eigen::VectorXd attack_state(const algo::Agent& agent, const Eigen::VectorXd& s,
                                    const AttackSpec& spec, Rng& rng, AttackTrace* trace = nullptr) {
  return attack_state(agent.policy, &agent.critic, s, spec, rng, trace);
}

}  // namespace rorl::attacks
