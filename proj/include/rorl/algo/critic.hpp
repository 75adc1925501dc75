#pragma once

#include <vector>

#include <Eigen/Core>

#include "rorl/nn/mlp.hpp"
#include "rorl/nn/random.hpp"

namespace rorl::algo {

using nn::MlpD;

/// Stacks states over actions: the critic input layout [s; a].
Eigen::MatrixXd critic_input(const Eigen::Ref<const Eigen::MatrixXd>& states,
                             const Eigen::Ref<const Eigen::MatrixXd>& actions);

/// K Q-networks (s, a) -> R and their Polyak-averaged targets.
struct EnsembleCritic {
  std::vector<MlpD> members;
  std::vector<MlpD> targets;
  int state_dim = 0;
  int action_dim = 0;

  static EnsembleCritic random(int state_dim, int action_dim, int ensemble_size,
                               const std::vector<int>& hidden, Rng& rng);

  int size() const { return static_cast<int>(members.size()); }

  /// K x batch matrix of member Q-values.
  Eigen::MatrixXd q_values(const Eigen::Ref<const Eigen::MatrixXd>& states,
                           const Eigen::Ref<const Eigen::MatrixXd>& actions) const;
  Eigen::MatrixXd target_q_values(const Eigen::Ref<const Eigen::MatrixXd>& states,
                                  const Eigen::Ref<const Eigen::MatrixXd>& actions) const;
  /// Mean over members, one entry per column.
  Eigen::VectorXd mean_q(const Eigen::Ref<const Eigen::MatrixXd>& states,
                         const Eigen::Ref<const Eigen::MatrixXd>& actions) const;
};

/// target <- (1 - polyak) * target + polyak * member, for every member.
void polyak_update(EnsembleCritic& critic, double polyak);

/// Population standard deviation (divisor K) down each column of a K x B
/// matrix of member Q-values.
Eigen::VectorXd ensemble_uncertainty(const Eigen::Ref<const Eigen::MatrixXd>& member_q);

Eigen::VectorXd ensemble_uncertainty(const EnsembleCritic& critic,
                                     const Eigen::Ref<const Eigen::MatrixXd>& states,
                                     const Eigen::Ref<const Eigen::MatrixXd>& actions);

/// l-infinity ball around a state.
struct PerturbationBall {
  Eigen::VectorXd center;
  double radius = 0.0;
};

/// n i.i.d. uniform draws from the ball, one per column. Draws are taken
/// candidate by candidate, dimension by dimension. Radius 0 returns n copies
/// of the center without touching `rng`.
Eigen::MatrixXd sample_perturbations(const PerturbationBall& ball, int n, Rng& rng);

/// Candidates for a whole batch: column b*n + j is the j-th draw around
/// centers.col(b). Equivalent to calling sample_perturbations per column in
/// order.
Eigen::MatrixXd sample_perturbations(const Eigen::Ref<const Eigen::MatrixXd>& centers,
                                     double radius, int n, Rng& rng);

}  // namespace rorl::algo
