#include "rorl/algo/losses.hpp"

#include <cmath>

#include "rorl/errors.hpp"

namespace rorl::algo {

namespace {

/// Repeats every column n times: column b*n + j of the result is x.col(b).
Eigen::MatrixXd repeat_columns(const Eigen::Ref<const Eigen::MatrixXd>& x, int n) {
  Eigen::MatrixXd out(x.rows(), x.cols() * n);
  for (Eigen::Index b = 0; b < x.cols(); ++b) out.middleCols(b * n, n) = x.col(b).replicate(1, n);
  return out;
}

/// First index of the maximum in each column.
std::vector<int> column_argmax(const Eigen::MatrixXd& values) {
  std::vector<int> idx(static_cast<std::size_t>(values.cols()));
  for (Eigen::Index b = 0; b < values.cols(); ++b) {
    int best = 0;
    for (Eigen::Index j = 1; j < values.rows(); ++j)
      if (values(j, b) > values(best, b)) best = static_cast<int>(j);
    idx[static_cast<std::size_t>(b)] = best;
  }
  return idx;
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& candidates, const std::vector<int>& chosen,
                               int n) {
  Eigen::MatrixXd out(candidates.rows(), static_cast<Eigen::Index>(chosen.size()));
  for (std::size_t b = 0; b < chosen.size(); ++b)
    out.col(static_cast<Eigen::Index>(b)) =
        candidates.col(static_cast<Eigen::Index>(b) * n + chosen[b]);
  return out;
}

/// Everything the smoothing term contributes, given Q(s, a) already
/// evaluated. Upstream gradients are for the batch-mean loss.
struct SmoothingPieces {
  double loss = 0.0;
  Eigen::MatrixXd selected_inputs;  // critic inputs at the chosen s_hat
  Eigen::RowVectorXd d_selected;    // upstream at selected_inputs
  Eigen::RowVectorXd d_anchor;      // upstream at (s, a)
};

SmoothingPieces smoothing_pieces(const MlpD& member, const Eigen::Ref<const Eigen::MatrixXd>& states,
                                 const Eigen::Ref<const Eigen::MatrixXd>& actions,
                                 const Eigen::RowVectorXd& q_anchor, const RorlHyperparams& hp,
                                 Rng& rng, SmoothingTrace* trace) {
  const int n = hp.n_perturb;
  const Eigen::Index batch = states.cols();
  const Eigen::MatrixXd candidates = sample_perturbations(states, hp.eps_q, n, rng);
  const Eigen::MatrixXd q_cand =
      member.forward(critic_input(candidates, repeat_columns(actions, n)));

  Eigen::MatrixXd penalties(n, batch);
  Eigen::MatrixXd deltas(n, batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int j = 0; j < n; ++j) {
      const double delta = q_cand(0, b * n + j) - q_anchor(b);
      deltas(j, b) = delta;
      penalties(j, b) = asymmetric_penalty(delta, hp.tau_asym);
    }
  const std::vector<int> chosen = column_argmax(penalties);

  SmoothingPieces out;
  out.selected_inputs = critic_input(gather_columns(candidates, chosen, n), actions);
  out.d_selected.resize(batch);
  out.d_anchor.resize(batch);
  Eigen::VectorXd chosen_delta(batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int j = chosen[static_cast<std::size_t>(b)];
    const double delta = deltas(j, b);
    chosen_delta(b) = delta;
    out.loss += penalties(j, b);
    const double slope = delta > 0 ? 2.0 * (1.0 - hp.tau_asym) * delta : 2.0 * hp.tau_asym * delta;
    out.d_selected(b) = slope / static_cast<double>(batch);
    out.d_anchor(b) = -slope / static_cast<double>(batch);
  }
  out.loss /= static_cast<double>(batch);
  if (trace) {
    trace->candidates = candidates;
    trace->penalties = penalties;
    trace->chosen = chosen;
    trace->delta = chosen_delta;
  }
  return out;
}

}  // namespace

Batch sample_batch(const envs::Dataset& dataset, int batch_size, Rng& rng) {
  if (dataset.size() == 0) throw ContractError("sample_batch: empty dataset");
  std::uniform_int_distribution<Eigen::Index> pick(0, dataset.size() - 1);
  Batch batch;
  batch.states.resize(dataset.state_dim(), batch_size);
  batch.actions.resize(dataset.action_dim(), batch_size);
  batch.rewards.resize(batch_size);
  batch.next_states.resize(dataset.state_dim(), batch_size);
  batch.dones.resize(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const Eigen::Index i = pick(rng);
    batch.states.col(b) = dataset.states.col(i);
    batch.actions.col(b) = dataset.actions.col(i);
    batch.rewards(b) = dataset.rewards(i);
    batch.next_states.col(b) = dataset.next_states.col(i);
    batch.dones(b) = dataset.dones(i) ? 1.0 : 0.0;
  }
  return batch;
}

Eigen::VectorXd soft_q_target(const EnsembleCritic& critic, const PolicyD& policy,
                              const Batch& batch, double gamma, double entropy_c, Rng& rng) {
  const auto next = policy.sample(batch.next_states, rng);
  const Eigen::VectorXd min_q =
      critic.target_q_values(batch.next_states, next.action).colwise().minCoeff().transpose();
  Eigen::VectorXd y(batch.size());
  for (Eigen::Index b = 0; b < batch.size(); ++b)
    y(b) = soft_q_target(batch.rewards(b), batch.dones(b) != 0.0, min_q(b), next.log_prob(b), gamma,
                         entropy_c);
  return y;
}

double smoothing_loss(const MlpD& member, const Eigen::Ref<const Eigen::MatrixXd>& states,
                      const Eigen::Ref<const Eigen::MatrixXd>& actions, const RorlHyperparams& hp,
                      Rng& rng, Eigen::VectorXd* grad, SmoothingTrace* trace) {
  MlpD::Cache anchor_cache;
  const Eigen::RowVectorXd q = member.forward(critic_input(states, actions), anchor_cache);
  const SmoothingPieces pieces = smoothing_pieces(member, states, actions, q, hp, rng, trace);
  if (grad) {
    member.backward(anchor_cache, pieces.d_anchor, *grad);
    MlpD::Cache sel_cache;
    member.forward(pieces.selected_inputs, sel_cache);
    member.backward(sel_cache, pieces.d_selected, *grad);
  }
  return pieces.loss;
}

OodSamples sample_ood(const EnsembleCritic& critic, const PolicyD& policy,
                      const Eigen::Ref<const Eigen::MatrixXd>& states, const RorlHyperparams& hp,
                      Rng& rng) {
  OodSamples ood;
  const Eigen::MatrixXd perturbed = sample_perturbations(states, hp.eps_ood, hp.n_perturb, rng);
  const auto draw = policy.sample(perturbed, rng);
  ood.inputs = critic_input(perturbed, draw.action);
  ood.member_q.resize(critic.size(), ood.inputs.cols());
  for (int k = 0; k < critic.size(); ++k) ood.member_q.row(k) = critic.members[k].forward(ood.inputs);
  ood.uncertainty = ensemble_uncertainty(ood.member_q);
  ood.min_q = ood.member_q.colwise().minCoeff().transpose();
  return ood;
}

Eigen::VectorXd ood_pseudo_target(const OodSamples& ood, int member, OodTarget kind,
                                  double lambda) {
  if (kind == OodTarget::min) {
    if (ood.member_q.rows() < 2)
      throw ConfigError("ood_target 'min' requires an ensemble of at least two members");
    return ood.min_q;
  }
  return ood.member_q.row(member).transpose() - lambda * ood.uncertainty;
}

double ood_loss(const MlpD& member, int member_index, const OodSamples& ood,
                const RorlHyperparams& hp, double lambda, Eigen::VectorXd* grad) {
  const Eigen::VectorXd target = ood_pseudo_target(ood, member_index, hp.ood_target, lambda);
  MlpD::Cache cache;
  const Eigen::VectorXd q = member.forward(ood.inputs, cache).row(0).transpose();
  const Eigen::VectorXd residual = target - q;
  const double count = static_cast<double>(q.size());
  if (grad) {
    const Eigen::RowVectorXd upstream = (-2.0 / count) * residual.transpose();
    member.backward(cache, upstream, *grad);
  }
  return residual.squaredNorm() / count;
}

CriticLossTerms critic_loss(const EnsembleCritic& critic, int member, const Batch& batch,
                            const Eigen::VectorXd& targets, const OodSamples* ood,
                            const RorlHyperparams& hp, double lambda, Rng& rng,
                            Eigen::VectorXd* grad) {
  if (member < 0 || member >= critic.size()) throw ContractError("critic_loss: bad member index");
  if (targets.size() != batch.size()) throw ShapeError("critic_loss: target count mismatch");
  const MlpD& net = critic.members[static_cast<std::size_t>(member)];
  const double count = static_cast<double>(batch.size());

  CriticLossTerms terms;
  MlpD::Cache anchor_cache;
  const Eigen::RowVectorXd q = net.forward(critic_input(batch.states, batch.actions), anchor_cache);
  terms.q = q.transpose();
  const Eigen::RowVectorXd td_residual = q - targets.transpose();
  terms.td = td_residual.squaredNorm() / count;
  Eigen::RowVectorXd anchor_upstream = (2.0 / count) * td_residual;

  SmoothingPieces smooth;
  if (hp.alpha > 0.0) {
    smooth = smoothing_pieces(net, batch.states, batch.actions, q, hp, rng, nullptr);
    terms.smooth = smooth.loss;
    anchor_upstream += hp.alpha * smooth.d_anchor;
  }
  if (hp.beta > 0.0) {
    if (!ood) throw ContractError("critic_loss: beta > 0 needs OOD samples");
    if (grad) {
      Eigen::VectorXd ood_grad = Eigen::VectorXd::Zero(grad->size());
      terms.ood = ood_loss(net, member, *ood, hp, lambda, &ood_grad);
      *grad += hp.beta * ood_grad;
    } else {
      terms.ood = ood_loss(net, member, *ood, hp, lambda, nullptr);
    }
  }
  terms.total = terms.td + hp.alpha * terms.smooth + hp.beta * terms.ood;

  if (grad) {
    net.backward(anchor_cache, anchor_upstream, *grad);
    if (hp.alpha > 0.0) {
      MlpD::Cache sel_cache;
      net.forward(smooth.selected_inputs, sel_cache);
      net.backward(sel_cache, hp.alpha * smooth.d_selected, *grad);
    }
  }
  return terms;
}

PolicyLossTerms policy_loss(const PolicyD& policy, const EnsembleCritic& critic,
                            const Eigen::Ref<const Eigen::MatrixXd>& states,
                            const RorlHyperparams& hp, double entropy_c, Rng& rng,
                            Eigen::VectorXd* grad, PolicyTrace* trace) {
  const Eigen::Index batch = states.cols();
  const double count = static_cast<double>(batch);
  const int m = policy.action_dim();

  nn::MlpD::Cache cache;
  const auto heads = policy.heads(states, cache);
  const auto draw = policy.sample(heads, rng);

  // -min_j Q_j(s, a)
  const Eigen::MatrixXd x = critic_input(states, draw.action);
  std::vector<MlpD::Cache> q_caches(static_cast<std::size_t>(critic.size()));
  Eigen::MatrixXd q(critic.size(), batch);
  for (int k = 0; k < critic.size(); ++k)
    q.row(k) = critic.members[static_cast<std::size_t>(k)].forward(x, q_caches[static_cast<std::size_t>(k)]);
  std::vector<int> argmin(static_cast<std::size_t>(batch));
  Eigen::VectorXd min_q(batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    Eigen::Index k;
    min_q(b) = q.col(b).minCoeff(&k);
    argmin[static_cast<std::size_t>(b)] = static_cast<int>(k);
  }

  PolicyLossTerms terms;
  terms.log_prob = draw.log_prob;
  terms.q_term = -min_q.mean();
  terms.entropy = draw.log_prob.mean();

  Eigen::MatrixXd d_mean = Eigen::MatrixXd::Zero(m, batch);
  Eigen::MatrixXd d_log_std = Eigen::MatrixXd::Zero(m, batch);
  const Eigen::ArrayXXd std_dev = heads.log_std.array().exp();

  if (grad) {
    Eigen::MatrixXd d_action = Eigen::MatrixXd::Zero(m, batch);
    for (int k = 0; k < critic.size(); ++k) {
      Eigen::RowVectorXd upstream = Eigen::RowVectorXd::Zero(batch);
      bool any = false;
      for (Eigen::Index b = 0; b < batch; ++b)
        if (argmin[static_cast<std::size_t>(b)] == k) {
          upstream(b) = -1.0 / count;
          any = true;
        }
      if (!any) continue;
      d_action += critic.members[static_cast<std::size_t>(k)]
                      .input_gradient(q_caches[static_cast<std::size_t>(k)], upstream)
                      .bottomRows(m);
    }
    const Eigen::ArrayXXd dtanh = 1.0 - draw.action.array().square();
    const Eigen::ArrayXXd through_u = d_action.array() * dtanh;
    d_mean += through_u.matrix();
    d_log_std += (through_u * std_dev * draw.noise.array()).matrix();

    // c * log pi(a|s) with the noise held fixed.
    const Eigen::ArrayXXd tanh_u = draw.pre_tanh.array().tanh();
    d_mean += (entropy_c / count * 2.0 * tanh_u).matrix();
    d_log_std +=
        (entropy_c / count * (-1.0 + 2.0 * tanh_u * std_dev * draw.noise.array())).matrix();
  }

  if (hp.alpha2 > 0.0) {
    const int n = hp.n_perturb;
    const Eigen::MatrixXd candidates = sample_perturbations(states, hp.eps_p, n, rng);
    const auto cand_heads = policy.heads(candidates);
    const Eigen::VectorXd div = nn::jeffrey_divergence<double>(
        repeat_columns(heads.mean, n), repeat_columns(heads.log_std, n), cand_heads.mean,
        cand_heads.log_std);
    const Eigen::MatrixXd div_table = Eigen::Map<const Eigen::MatrixXd>(div.data(), n, batch);
    const std::vector<int> chosen = column_argmax(div_table);
    double total = 0.0;
    for (Eigen::Index b = 0; b < batch; ++b) total += div_table(chosen[static_cast<std::size_t>(b)], b);
    terms.divergence = total / count;

    if (trace) {
      trace->candidates = candidates;
      trace->divergences = div_table;
      trace->chosen = chosen;
    }
    if (grad) {
      const Eigen::MatrixXd selected = gather_columns(candidates, chosen, n);
      nn::MlpD::Cache sel_cache;
      const auto sel_heads = policy.heads(selected, sel_cache);
      const auto g = nn::jeffrey_divergence_gradient<double>(heads.mean, heads.log_std,
                                                              sel_heads.mean, sel_heads.log_std);
      const double w = hp.alpha2 / count;
      d_mean += w * g.d_mean_p;
      d_log_std += w * g.d_log_std_p;
      policy.backward(sel_cache, sel_heads, w * g.d_mean_q, w * g.d_log_std_q, *grad);
    }
  }

  terms.total = terms.q_term + hp.alpha2 * terms.divergence + entropy_c * terms.entropy;
  if (grad) policy.backward(cache, heads, d_mean, d_log_std, *grad);
  return terms;
}

}  // namespace rorl::algo
