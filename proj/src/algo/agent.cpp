#include "rorl/algo/agent.hpp"

#include <cmath>
#include <sstream>

#include "rorl/errors.hpp"

namespace rorl::algo {

Agent Agent::create(int state_dim, int action_dim, const RorlHyperparams& hp, Rng& rng) {
  hp.validate();
  Agent agent;
  agent.hp = hp;
  agent.policy = PolicyD::random(state_dim, action_dim, hp.hidden, rng);
  agent.critic = EnsembleCritic::random(state_dim, action_dim, hp.ensemble_size, hp.hidden, rng);
  agent.policy_opt = nn::AdamState<double>(agent.policy.trunk().params().size(), hp.policy_lr);
  for (const auto& member : agent.critic.members)
    agent.critic_opts.emplace_back(member.params().size(), hp.critic_lr);
  agent.entropy_opt = nn::AdamState<double>(1, hp.entropy_lr);
  agent.log_c = std::log(hp.entropy_c);
  agent.obs_mean = Eigen::VectorXd::Zero(state_dim);
  agent.obs_std = Eigen::VectorXd::Ones(state_dim);
  return agent;
}

double Agent::entropy_c() const { return hp.auto_entropy ? std::exp(log_c) : hp.entropy_c; }

double Agent::target_entropy() const {
  return hp.target_entropy ? *hp.target_entropy : -static_cast<double>(action_dim());
}

Eigen::VectorXd Agent::normalize(const Eigen::VectorXd& raw) const {
  return ((raw - obs_mean).array() / obs_std.array()).matrix();
}

Eigen::VectorXd Agent::act(const Eigen::VectorXd& observation) const {
  return policy.deterministic_action(observation);
}

namespace {

std::string snapshot(const Agent& agent, const TrainMetrics& m, const std::string& stage) {
  std::ostringstream out;
  out.precision(17);
  out << "stage=" << stage << " step=" << agent.step << " td_loss=" << m.td_loss
      << " smooth_loss=" << m.smooth_loss << " ood_loss=" << m.ood_loss
      << " policy_loss=" << m.policy_loss << " mean_u=" << m.mean_u << " lambda=" << m.lambda
      << " entropy_c=" << m.entropy_c << " log_c=" << agent.log_c;
  return out.str();
}

void require_finite(bool ok, const Agent& agent, const TrainMetrics& m, const std::string& stage) {
  if (!ok) throw NumericAbort("non-finite value in " + stage + " at step " + std::to_string(agent.step),
                              snapshot(agent, m, stage));
}

}  // namespace

TrainMetrics train_step(Agent& agent, const envs::Dataset& dataset, Rng& rng) {
  return train_step(agent, sample_batch(dataset, agent.hp.batch_size, rng), rng);
}

TrainMetrics train_step(Agent& agent, const Batch& batch, Rng& rng) {
  const RorlHyperparams& hp = agent.hp;
  const int K = agent.critic.size();
  TrainMetrics m;
  m.step = agent.step;
  m.lambda = decay_lambda(hp, agent.step);
  m.entropy_c = agent.entropy_c();

  const Eigen::VectorXd targets =
      soft_q_target(agent.critic, agent.policy, batch, hp.gamma, m.entropy_c, rng);
  OodSamples ood;
  if (hp.beta > 0.0) ood = sample_ood(agent.critic, agent.policy, batch.states, hp, rng);

  std::vector<Eigen::VectorXd> grads(static_cast<std::size_t>(K));
  Eigen::MatrixXd member_q(K, batch.size());
  for (int k = 0; k < K; ++k) {
    auto& g = grads[static_cast<std::size_t>(k)];
    g = Eigen::VectorXd::Zero(agent.critic.members[static_cast<std::size_t>(k)].params().size());
    const CriticLossTerms terms = critic_loss(agent.critic, k, batch, targets,
                                              hp.beta > 0.0 ? &ood : nullptr, hp, m.lambda, rng, &g);
    m.td_loss += terms.td;
    m.smooth_loss += terms.smooth;
    m.ood_loss += terms.ood;
    member_q.row(k) = terms.q.transpose();
  }
  m.td_loss /= K;
  m.smooth_loss /= K;
  m.ood_loss /= K;
  m.mean_u = ensemble_uncertainty(member_q).mean();
  bool finite = std::isfinite(m.td_loss) && std::isfinite(m.smooth_loss) &&
                std::isfinite(m.ood_loss) && std::isfinite(m.mean_u);
  for (const auto& g : grads) finite = finite && g.allFinite();
  require_finite(finite, agent, m, "critic update");
  for (int k = 0; k < K; ++k)
    nn::adam_step(agent.critic_opts[static_cast<std::size_t>(k)],
                  agent.critic.members[static_cast<std::size_t>(k)].params(),
                  grads[static_cast<std::size_t>(k)]);

  Eigen::VectorXd policy_grad = Eigen::VectorXd::Zero(agent.policy.trunk().params().size());
  const PolicyLossTerms pterms =
      policy_loss(agent.policy, agent.critic, batch.states, hp, m.entropy_c, rng, &policy_grad);
  m.policy_loss = pterms.total;
  require_finite(std::isfinite(m.policy_loss) && policy_grad.allFinite(), agent, m,
                 "policy update");
  nn::adam_step(agent.policy_opt, agent.policy.trunk().params(), policy_grad);

  if (hp.auto_entropy) {
    // d/d(log c) of -log c * mean(log pi + target_entropy), log pi held constant.
    Eigen::VectorXd log_c(1), g(1);
    log_c(0) = agent.log_c;
    g(0) = -(pterms.log_prob.array() + agent.target_entropy()).mean();
    require_finite(std::isfinite(g(0)), agent, m, "entropy update");
    nn::adam_step(agent.entropy_opt, log_c, g);
    agent.log_c = log_c(0);
  }

  polyak_update(agent.critic, hp.polyak);
  ++agent.step;
  return m;
}

}  // namespace rorl::algo
