#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "rorl/nn/random.hpp"
#include "rorl/theory/lsvi.hpp"

namespace rorl::theory {

/// Finite-horizon linear MDP over a grid of states that live at continuous
/// coordinates, so that perturbed states are meaningful.
///
/// phi(x, a) = softmax(W_a x + b_a) lies on the probability simplex in R^d,
/// which keeps |phi| <= 1 and makes P(.|x, a) = psi^T phi(x, a) a valid
/// distribution for every x, on or off the grid. r(x, a) = phi^T theta with
/// theta in [0, 1]^d, so rewards stay in [0, 1].
struct LinearMdpSpec {
  int d = 4;
  int horizon = 5;
  int num_states = 16;
  int num_actions = 4;
  MatrixXd coords;                      // coord_dim x num_states
  std::vector<MatrixXd> feature_weight; // per action, d x coord_dim
  MatrixXd feature_bias;                // d x num_actions
  MatrixXd psi;                         // d x num_states, rows sum to 1
  VectorXd theta;                       // d
  int initial_state = 0;

  VectorXd features(const VectorXd& x, int action) const;
  VectorXd grid_features(int state, int action) const { return features(coords.col(state), action); }
  double reward(const VectorXd& x, int action) const { return features(x, action).dot(theta); }
  /// Next-state distribution over the grid.
  VectorXd transition(const VectorXd& x, int action) const;
  /// (T V)(x, a) = r(x, a) + sum_s' P(s'|x, a) V(s') = phi^T (theta + psi V).
  double bellman(const VectorXd& x, int action, const VectorXd& next_value) const;
};

/// Random instance on a sqrt(S) x sqrt(S)-ish grid in [0, 1]^2.
LinearMdpSpec random_linear_mdp(int d, int horizon, int num_states, int num_actions, Rng& rng);

/// Per-step offline samples. Anchor i at step t has state states[i], action
/// actions[i], sampled successor next_states[i], and n_perturb perturbed
/// coordinates (columns i*n .. i*n+n-1 of `perturbed`). The OOD set uses
/// the first perturbation of each anchor paired with ood_actions[i].
struct StepSamples {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<int> next_states;
  MatrixXd perturbed;
  std::vector<int> ood_actions;
};

struct OfflineLinearDataset {
  std::vector<StepSamples> steps;  // index t = 0 .. horizon-1
  int n_perturb = 0;
  double epsilon = 0.0;
};

/// Uniform behavior over grid states and actions, independent per step.
OfflineLinearDataset sample_offline_dataset(const LinearMdpSpec& mdp, int m, int n_perturb,
                                            double epsilon, Rng& rng);

/// How regression targets are formed.
struct TargetMode {
  /// OOD pseudo-target: true uses the exact backup TV at (s_hat, a_hat);
  /// false uses phi^T w_in - Gamma_in from a ridge-1 fit on in-distribution
  /// data with the same beta.
  bool oracle_ood = true;
  /// true replaces y_i = r_i + V(s'_i) by the noiseless TV(s_i, a_i).
  bool exact_targets = false;
};

LsviData step_regression_data(const LinearMdpSpec& mdp, const OfflineLinearDataset& data, int t,
                              const VectorXd& next_value, double beta, TargetMode mode);

/// values[t] has one entry per grid state; values[horizon] = 0.
using ValueTable = std::vector<VectorXd>;
/// policy[t][s] is the action at step t in state s.
using GridPolicy = std::vector<std::vector<int>>;

struct PeviResult {
  std::vector<VectorXd> weights;         // w_tilde per step
  std::vector<MatrixXd> lambda_tilde;    // per step
  std::vector<MatrixXd> lambda_pbrl;     // lambda_in + lambda_ood per step
  ValueTable values;                     // V_hat
  GridPolicy policy;                     // greedy in Q_hat
  double beta = 0.0;
  double xi_violation = 0.0;             // xi_violation(values) at this beta
};

/// Backward induction with Q_hat_t = clip(phi^T w_t - Gamma_t, 0, horizon - t).
PeviResult pessimistic_value_iteration(const LinearMdpSpec& mdp, const OfflineLinearDataset& data,
                                       double beta, TargetMode mode = {});

/// max over steps and grid pairs of |phi^T w_t - (T V_{t+1})| - Gamma_t, for
/// the supplied V_{t+1} (next_values[t + 1] is used at step t).
double xi_violation(const LinearMdpSpec& mdp, const OfflineLinearDataset& data,
                    const ValueTable& next_values, double beta, TargetMode mode = {});

/// Same check with V_{t+1} taken from PEVI run at this beta.
double check_xi_quantifier(const LinearMdpSpec& mdp, const OfflineLinearDataset& data, double beta,
                           TargetMode mode = {});

ValueTable evaluate_policy(const LinearMdpSpec& mdp, const GridPolicy& policy);

struct OptimalSolution {
  GridPolicy policy;
  ValueTable values;
};
OptimalSolution optimal_policy(const LinearMdpSpec& mdp);

/// V^{pi_star}(s_1) - V^{pi_hat}(s_1), exact.
double suboptimality(const LinearMdpSpec& mdp, const GridPolicy& pi_star, const GridPolicy& pi_hat);

/// Per-step state occupancy of `policy` from the initial state.
std::vector<VectorXd> state_occupancy(const LinearMdpSpec& mdp, const GridPolicy& policy);

/// sum_t E_{policy}[beta * sqrt(phi^T cov_t^{-1} phi)] under the policy's own
/// state distribution.
double expected_penalty(const LinearMdpSpec& mdp, const GridPolicy& policy,
                        const std::vector<MatrixXd>& covariances, double beta);

struct CalibrationOptions {
  int draws = 16;
  double margin = 1.5;
  double beta_max = 4.0;  // doubled until it passes
  int bisection_steps = 20;
  int m = 200;
  int n_perturb = 5;
  double epsilon = 0.1;
  TargetMode mode = {};
};

/// margin * max over `draws` held-out datasets (streams offset from `seed`)
/// of the smallest beta with check_xi_quantifier <= 0, found by bisection.
double calibrate_beta(const LinearMdpSpec& mdp, const CalibrationOptions& options,
                      std::uint64_t seed);

/// One row of the theory-check report.
struct TheoryRow {
  std::uint64_t seed = 0;
  double beta = 0.0;
  double min_eig = 0.0;      // smallest eigenvalue of lambda_tilde over steps
  double gamma_rorl = 0.0;   // sum_t E_{pi*} Gamma with lambda_tilde
  double gamma_pbrl = 0.0;   // same with lambda_in + lambda_ood
  double xi_violation = 0.0;
  double subopt = 0.0;
  double bound = 0.0;        // equals gamma_rorl
  bool oracle_ood = true;
};

/// Random instance from `seed`, calibrated beta, PEVI on a fresh dataset.
TheoryRow run_theory_instance(std::uint64_t seed, int d, int horizon, int num_states,
                              int num_actions, const CalibrationOptions& options);

}  // namespace rorl::theory
