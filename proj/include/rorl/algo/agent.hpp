#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rorl/algo/critic.hpp"
#include "rorl/algo/hyperparams.hpp"
#include "rorl/algo/losses.hpp"
#include "rorl/envs/dataset.hpp"
#include "rorl/nn/adam.hpp"

namespace rorl::algo {

/// Scalars emitted by one train_step.
struct TrainMetrics {
  std::int64_t step = 0;  // counter value before the update
  double td_loss = 0.0;   // mean over members
  double smooth_loss = 0.0;
  double ood_loss = 0.0;
  double policy_loss = 0.0;
  double mean_u = 0.0;    // ensemble std at the batch (s, a)
  double lambda = 0.0;
  double entropy_c = 0.0;
};

/// Policy, critic ensemble, and all optimizer state. Observations given to
/// the networks are normalized with (obs_mean, obs_std).
struct Agent {
  RorlHyperparams hp;
  PolicyD policy;
  EnsembleCritic critic;
  nn::AdamState<double> policy_opt;
  std::vector<nn::AdamState<double>> critic_opts;
  nn::AdamState<double> entropy_opt;
  double log_c = 0.0;
  std::int64_t step = 0;
  std::string env_name;
  Eigen::VectorXd obs_mean;
  Eigen::VectorXd obs_std;

  /// Fresh networks; validates hp first.
  static Agent create(int state_dim, int action_dim, const RorlHyperparams& hp, Rng& rng);

  int state_dim() const { return policy.state_dim(); }
  int action_dim() const { return policy.action_dim(); }
  double entropy_c() const;
  double target_entropy() const;

  Eigen::VectorXd normalize(const Eigen::VectorXd& raw) const;
  /// tanh of the policy mean at an already-normalized observation.
  Eigen::VectorXd act(const Eigen::VectorXd& observation) const;
};

/// One update: targets, K critic steps (each with its own smoothing draws),
/// one policy step on the updated critics, entropy tuning, Polyak update.
/// Throws NumericAbort if any loss or gradient is non-finite.
TrainMetrics train_step(Agent& agent, const envs::Dataset& dataset, Rng& rng);

/// The same update on a batch the caller already drew (online replay).
TrainMetrics train_step(Agent& agent, const Batch& batch, Rng& rng);

/// Directory checkpoint; layout in docs/FORMATS.md.
void save_agent(const std::filesystem::path& dir, const Agent& agent);
Agent load_agent(const std::filesystem::path& dir);

}  // namespace rorl::algo
