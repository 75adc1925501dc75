#pragma once

#include <vector>

#include <Eigen/Core>

#include "rorl/algo/critic.hpp"
#include "rorl/algo/hyperparams.hpp"
#include "rorl/envs/dataset.hpp"
#include "rorl/nn/gaussian_policy.hpp"

namespace rorl::algo {

using nn::PolicyD;

/// Minibatch in column layout.
struct Batch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;
  Eigen::VectorXd dones;  // 1.0 for terminal transitions

  Eigen::Index size() const { return states.cols(); }
};

/// Uniform sampling with replacement.
Batch sample_batch(const envs::Dataset& dataset, int batch_size, Rng& rng);

/// r + gamma * (1 - done) * (min_target_q - c * log_prob).
inline double soft_q_target(double reward, bool done, double min_target_q, double log_prob,
                            double gamma, double entropy_c) {
  return reward + gamma * (done ? 0.0 : 1.0) * (min_target_q - entropy_c * log_prob);
}

/// Bootstrapped targets for a batch. a' ~ pi(.|s') is drawn once per
/// transition and shared by all members; only target networks are read.
Eigen::VectorXd soft_q_target(const EnsembleCritic& critic, const PolicyD& policy,
                              const Batch& batch, double gamma, double entropy_c, Rng& rng);

/// (1 - tau) * max(delta, 0)^2 + tau * min(delta, 0)^2.
inline double asymmetric_penalty(double delta, double tau) {
  const double pos = delta > 0 ? delta : 0.0;
  const double neg = delta < 0 ? delta : 0.0;
  return (1.0 - tau) * pos * pos + tau * neg * neg;
}

/// Which perturbed state won the inner maximization, per batch column.
struct SmoothingTrace {
  Eigen::MatrixXd candidates;   // state_dim x (B * n); see sample_perturbations
  Eigen::MatrixXd penalties;    // n x B: penalty of every candidate
  std::vector<int> chosen;      // index in [0, n) per batch column
  Eigen::VectorXd delta;        // Q(s_hat*, a) - Q(s, a) per column
};

/// Conservative smoothing loss for one critic: for every (s, a) draw n
/// candidates in the eps_q ball, keep the one with the largest asymmetric
/// penalty (lowest index on ties), and average those maxima over the batch.
///
/// If `grad` is given, the gradient of the returned mean w.r.t. the
/// member's parameters is accumulated into it; gradients flow through both
/// Q(s_hat, a) and Q(s, a).
double smoothing_loss(const MlpD& member, const Eigen::Ref<const Eigen::MatrixXd>& states,
                      const Eigen::Ref<const Eigen::MatrixXd>& actions, const RorlHyperparams& hp,
                      Rng& rng, Eigen::VectorXd* grad = nullptr, SmoothingTrace* trace = nullptr);

/// Perturbed states, policy actions there, and the ensemble's opinion of
/// them. Built once per train step and shared by all members.
struct OodSamples {
  Eigen::MatrixXd inputs;    // critic inputs [s_hat; a_hat], (n_state + n_action) x (B * n)
  Eigen::MatrixXd member_q;  // K x (B * n)
  Eigen::VectorXd uncertainty;
  Eigen::VectorXd min_q;
};

OodSamples sample_ood(const EnsembleCritic& critic, const PolicyD& policy,
                      const Eigen::Ref<const Eigen::MatrixXd>& states, const RorlHyperparams& hp,
                      Rng& rng);

/// Pseudo-targets for member i; treated as constants by ood_loss.
Eigen::VectorXd ood_pseudo_target(const OodSamples& ood, int member, OodTarget kind,
                                  double lambda);

/// Mean over all OOD samples of (pseudo_target - Q_i)^2. Gradient (if
/// requested) treats the pseudo-target as a constant.
double ood_loss(const MlpD& member, int member_index, const OodSamples& ood,
                const RorlHyperparams& hp, double lambda, Eigen::VectorXd* grad = nullptr);

struct CriticLossTerms {
  double td = 0.0;
  double smooth = 0.0;
  double ood = 0.0;
  double total = 0.0;
  Eigen::VectorXd q;  // member's Q(s, a) over the batch
};

/// td + alpha * smooth + beta * ood for member i. `targets` come from
/// soft_q_target (constants). `ood` may be null when beta == 0. Smoothing
/// draws come from `rng` and are skipped entirely when alpha == 0.
CriticLossTerms critic_loss(const EnsembleCritic& critic, int member, const Batch& batch,
                            const Eigen::VectorXd& targets, const OodSamples* ood,
                            const RorlHyperparams& hp, double lambda, Rng& rng,
                            Eigen::VectorXd* grad = nullptr);

struct PolicyTrace {
  Eigen::MatrixXd candidates;  // state_dim x (B * n)
  Eigen::MatrixXd divergences; // n x B
  std::vector<int> chosen;
};

struct PolicyLossTerms {
  double q_term = 0.0;       // -mean min_j Q_j(s, a)
  double divergence = 0.0;   // mean max D_J
  double entropy = 0.0;      // mean log pi(a|s)
  double total = 0.0;
  Eigen::VectorXd log_prob;  // per sample, for entropy tuning
};

/// -min_j Q_j(s, a) + alpha2 * max_{s_hat} D_J(pi(.|s) || pi(.|s_hat)) + c * log pi(a|s),
/// averaged over the batch, with a ~ pi(.|s) reparameterized. The adversarial
/// s_hat is the D_J-maximizer among n_perturb draws in the eps_p ball;
/// candidate draws are skipped when alpha2 == 0.
PolicyLossTerms policy_loss(const PolicyD& policy, const EnsembleCritic& critic,
                            const Eigen::Ref<const Eigen::MatrixXd>& states,
                            const RorlHyperparams& hp, double entropy_c, Rng& rng,
                            Eigen::VectorXd* grad = nullptr, PolicyTrace* trace = nullptr);

}  // namespace rorl::algo
