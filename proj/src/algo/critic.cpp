#include "rorl/algo/critic.hpp"

#include "rorl/errors.hpp"

namespace rorl::algo {

Eigen::MatrixXd critic_input(const Eigen::Ref<const Eigen::MatrixXd>& states,
                             const Eigen::Ref<const Eigen::MatrixXd>& actions) {
  if (states.cols() != actions.cols()) throw ShapeError("critic_input: batch sizes differ");
  Eigen::MatrixXd x(states.rows() + actions.rows(), states.cols());
  x.topRows(states.rows()) = states;
  x.bottomRows(actions.rows()) = actions;
  return x;
}

EnsembleCritic EnsembleCritic::random(int state_dim, int action_dim, int ensemble_size,
                                      const std::vector<int>& hidden, Rng& rng) {
  EnsembleCritic critic;
  critic.state_dim = state_dim;
  critic.action_dim = action_dim;
  std::vector<int> sizes{state_dim + action_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  for (int k = 0; k < ensemble_size; ++k) critic.members.push_back(MlpD::random(sizes, rng));
  critic.targets = critic.members;
  return critic;
}

namespace {
Eigen::MatrixXd stack_outputs(const std::vector<MlpD>& nets, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd q(static_cast<Eigen::Index>(nets.size()), x.cols());
  for (std::size_t k = 0; k < nets.size(); ++k) q.row(static_cast<Eigen::Index>(k)) = nets[k].forward(x);
  return q;
}
}  // namespace

Eigen::MatrixXd EnsembleCritic::q_values(const Eigen::Ref<const Eigen::MatrixXd>& states,
                                         const Eigen::Ref<const Eigen::MatrixXd>& actions) const {
  return stack_outputs(members, critic_input(states, actions));
}

Eigen::MatrixXd EnsembleCritic::target_q_values(
    const Eigen::Ref<const Eigen::MatrixXd>& states,
    const Eigen::Ref<const Eigen::MatrixXd>& actions) const {
  return stack_outputs(targets, critic_input(states, actions));
}

Eigen::VectorXd EnsembleCritic::mean_q(const Eigen::Ref<const Eigen::MatrixXd>& states,
                                       const Eigen::Ref<const Eigen::MatrixXd>& actions) const {
  return q_values(states, actions).colwise().mean().transpose();
}

void polyak_update(EnsembleCritic& critic, double polyak) {
  if (!(polyak >= 0.0 && polyak <= 1.0)) throw ContractError("polyak must lie in [0, 1]");
  for (int k = 0; k < critic.size(); ++k) {
    auto& target = critic.targets[k].params();
    const auto& online = critic.members[k].params();
    if (polyak == 1.0) {
      target = online;
    } else {
      target = (1.0 - polyak) * target + polyak * online;
    }
  }
}

Eigen::VectorXd ensemble_uncertainty(const Eigen::Ref<const Eigen::MatrixXd>& member_q) {
  if (member_q.rows() < 1) throw ContractError("ensemble_uncertainty: empty ensemble");
  const Eigen::RowVectorXd mean = member_q.colwise().mean();
  return ((member_q.rowwise() - mean).array().square().colwise().sum() /
          static_cast<double>(member_q.rows()))
      .sqrt()
      .transpose();
}

Eigen::VectorXd ensemble_uncertainty(const EnsembleCritic& critic,
                                     const Eigen::Ref<const Eigen::MatrixXd>& states,
                                     const Eigen::Ref<const Eigen::MatrixXd>& actions) {
  return ensemble_uncertainty(critic.q_values(states, actions));
}

Eigen::MatrixXd sample_perturbations(const PerturbationBall& ball, int n, Rng& rng) {
  if (n < 1) throw ContractError("sample_perturbations: n must be >= 1");
  if (ball.radius < 0) throw ContractError("sample_perturbations: negative radius");
  Eigen::MatrixXd out = ball.center.replicate(1, n);
  if (ball.radius == 0.0) return out;
  std::uniform_real_distribution<double> u(-ball.radius, ball.radius);
  for (int j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) += u(rng);
  return out;
}

Eigen::MatrixXd sample_perturbations(const Eigen::Ref<const Eigen::MatrixXd>& centers,
                                     double radius, int n, Rng& rng) {
  Eigen::MatrixXd out(centers.rows(), centers.cols() * n);
  for (Eigen::Index b = 0; b < centers.cols(); ++b)
    out.middleCols(b * n, n) = sample_perturbations(PerturbationBall{centers.col(b), radius}, n, rng);
  return out;
}

}  // namespace rorl::algo
