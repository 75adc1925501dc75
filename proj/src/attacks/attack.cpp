#include "rorl/attacks/attack.hpp"

#include "rorl/errors.hpp"

namespace rorl::attacks {

using Eigen::MatrixXd;
using Eigen::VectorXd;

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "random") return AttackKind::random;
  if (name == "action_diff") return AttackKind::action_diff;
  if (name == "min_q") return AttackKind::min_q;
  throw ConfigError("attack kind must be random, action_diff or min_q, got '" + name + "'");
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "zero_order") return OptimizerKind::zero_order;
  if (name == "mixed_order") return OptimizerKind::mixed_order;
  throw ConfigError("attack optimizer must be zero_order or mixed_order, got '" + name + "'");
}

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::random: return "random";
    case AttackKind::action_diff: return "action_diff";
    case AttackKind::min_q: return "min_q";
  }
  return "?";
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::zero_order ? "zero_order" : "mixed_order";
}

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0)) throw ContractError("attack epsilon must be >= 0");
  if (num_candidates < 1) throw ContractError("num_candidates must be >= 1");
  if (num_inits < 1 || num_steps < 0) throw ContractError("mixed_order needs num_inits >= 1, num_steps >= 0");
  if (step_size && !(*step_size >= 0.0)) throw ContractError("step_size must be >= 0");
}

namespace {

struct Scorer {
  const algo::PolicyD& policy;
  const algo::EnsembleCritic* critic;
  const VectorXd& s;
  const AttackSpec& spec;
  nn::GaussianHeads<double> anchor;

  Scorer(const algo::PolicyD& p, const algo::EnsembleCritic* c, const VectorXd& state,
         const AttackSpec& sp)
      : policy(p), critic(c), s(state), spec(sp), anchor(p.heads(state)) {}

  /// Actions the agent would take at each column of `heads`.
  MatrixXd actions(const nn::GaussianHeads<double>& h, const MatrixXd* noise) const {
    if (noise) return (h.mean.array() + h.log_std.array().exp() * noise->array()).tanh().matrix();
    return h.mean.array().tanh().matrix();
  }

  VectorXd scores(const MatrixXd& s_hat, const MatrixXd* noise) const {
    const Eigen::Index n = s_hat.cols();
    const auto h = policy.heads(s_hat);
    if (spec.kind == AttackKind::action_diff)
      return nn::jeffrey_divergence<double>(anchor.mean.replicate(1, n), anchor.log_std.replicate(1, n),
                                            h.mean, h.log_std);
    return -critic->mean_q(s.replicate(1, n), actions(h, noise));
  }

  /// d score / d s_hat for every column.
  MatrixXd gradient(const MatrixXd& s_hat, const MatrixXd* noise) const {
    const Eigen::Index n = s_hat.cols();
    nn::MlpD::Cache cache;
    const auto h = policy.heads(s_hat, cache);
    if (spec.kind == AttackKind::action_diff) {
      const auto g = nn::jeffrey_divergence_gradient<double>(
          anchor.mean.replicate(1, n), anchor.log_std.replicate(1, n), h.mean, h.log_std);
      return policy.state_gradient(cache, h, g.d_mean_q, g.d_log_std_q);
    }
    const MatrixXd a = actions(h, noise);
    const MatrixXd x = algo::critic_input(s.replicate(1, n), a);
    const int K = critic->size();
    const int m = policy.action_dim();
    MatrixXd d_action = MatrixXd::Zero(m, n);
    const Eigen::RowVectorXd upstream = Eigen::RowVectorXd::Constant(n, -1.0 / K);
    for (const auto& member : critic->members) {
      nn::MlpD::Cache qc;
      member.forward(x, qc);
      d_action += member.input_gradient(qc, upstream).bottomRows(m);
    }
    const Eigen::ArrayXXd through_u = d_action.array() * (1.0 - a.array().square());
    MatrixXd d_log_std = MatrixXd::Zero(m, n);
    if (noise) d_log_std = (through_u * h.log_std.array().exp() * noise->array()).matrix();
    return policy.state_gradient(cache, h, through_u.matrix(), d_log_std);
  }
};

MatrixXd clip_to_ball(const MatrixXd& x, const VectorXd& center, double eps) {
  const Eigen::ArrayXd lo = center.array() - eps;
  const Eigen::ArrayXd hi = center.array() + eps;
  MatrixXd out = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = out.col(j).array().max(lo).min(hi).matrix();
  return out;
}

int first_argmax(const VectorXd& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best;
}

}  // namespace

double attack_score(const algo::PolicyD& policy, const algo::EnsembleCritic* critic,
                    const VectorXd& s, const VectorXd& s_hat, const AttackSpec& spec) {
  if (spec.kind == AttackKind::random) return 0.0;
  if (spec.kind == AttackKind::min_q && !critic)
    throw CapabilityError("min_q attack needs an agent with critics");
  return Scorer(policy, critic, s, spec).scores(s_hat, nullptr)(0);
}

VectorXd attack_state(const algo::PolicyD& policy, const algo::EnsembleCritic* critic,
                      const VectorXd& s, const AttackSpec& spec, Rng& rng, AttackTrace* trace) {
  spec.validate();
  if (s.size() != policy.state_dim()) throw ShapeError("attack_state: state size mismatch");
  if (spec.kind == AttackKind::min_q && (!critic || critic->size() == 0))
    throw CapabilityError("min_q attack needs an agent with critics");
  if (spec.epsilon == 0.0) {
    if (trace) {
      trace->candidates = s;
      trace->scores = VectorXd::Zero(1);
      trace->iterates.clear();
      trace->chosen = 0;
    }
    return s;
  }
  const algo::PerturbationBall ball{s, spec.epsilon};
  if (spec.kind == AttackKind::random) {
    const MatrixXd draw = algo::sample_perturbations(ball, 1, rng);
    if (trace) {
      trace->candidates = draw;
      trace->scores = VectorXd::Zero(1);
      trace->chosen = 0;
    }
    return draw.col(0);
  }

  const Scorer scorer(policy, critic, s, spec);
  const bool sampled = spec.kind == AttackKind::min_q && spec.stochastic_actions;

  if (spec.optimizer == OptimizerKind::zero_order) {
    const MatrixXd candidates = algo::sample_perturbations(ball, spec.num_candidates, rng);
    MatrixXd noise;
    if (sampled) noise = normal_matrix<double>(policy.action_dim(), candidates.cols(), rng);
    const VectorXd scores = scorer.scores(candidates, sampled ? &noise : nullptr);
    const int chosen = first_argmax(scores);
    if (trace) {
      trace->candidates = candidates;
      trace->scores = scores;
      trace->iterates.clear();
      trace->chosen = chosen;
    }
    return candidates.col(chosen);
  }

  MatrixXd x = algo::sample_perturbations(ball, spec.num_inits, rng);
  MatrixXd noise;
  if (sampled) noise = normal_matrix<double>(policy.action_dim(), x.cols(), rng);
  const MatrixXd* noise_ptr = sampled ? &noise : nullptr;
  const double step = spec.resolved_step_size();
  std::vector<MatrixXd> iterates{x};
  for (int k = 0; k < spec.num_steps; ++k) {
    const MatrixXd g = scorer.gradient(x, noise_ptr);
    x = clip_to_ball(x + step * g.array().sign().matrix(), s, spec.epsilon);
    if (trace) iterates.push_back(x);
  }
  const VectorXd scores = scorer.scores(x, noise_ptr);
  const int chosen = first_argmax(scores);
  if (trace) {
    trace->candidates = x;
    trace->scores = scores;
    trace->iterates = std::move(iterates);
    trace->chosen = chosen;
  }
  return x.col(chosen);
}

}  // namespace rorl::attacks
