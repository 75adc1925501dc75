#include "rorl/theory/linear_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "rorl/errors.hpp"

namespace rorl::theory {

VectorXd LinearMdpSpec::features(const VectorXd& x, int action) const {
  const VectorXd logits = feature_weight[static_cast<std::size_t>(action)] * x + feature_bias.col(action);
  const VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

VectorXd LinearMdpSpec::transition(const VectorXd& x, int action) const {
  return psi.transpose() * features(x, action);
}

double LinearMdpSpec::bellman(const VectorXd& x, int action, const VectorXd& next_value) const {
  return features(x, action).dot(theta + psi * next_value);
}

LinearMdpSpec random_linear_mdp(int d, int horizon, int num_states, int num_actions, Rng& rng) {
  if (d < 1 || horizon < 1 || num_states < 1 || num_actions < 1)
    throw ContractError("random_linear_mdp: all sizes must be positive");
  LinearMdpSpec mdp;
  mdp.d = d;
  mdp.horizon = horizon;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;

  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_states))));
  const double spacing = side > 1 ? 1.0 / (side - 1) : 0.0;
  mdp.coords.resize(2, num_states);
  for (int s = 0; s < num_states; ++s) {
    mdp.coords(0, s) = (s % side) * spacing;
    mdp.coords(1, s) = (s / side) * spacing;
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int a = 0; a < num_actions; ++a) {
    MatrixXd w(d, 2);
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = 3.0 * normal(rng);
    mdp.feature_weight.push_back(w);
  }
  mdp.feature_bias.resize(d, num_actions);
  for (Eigen::Index i = 0; i < mdp.feature_bias.size(); ++i) mdp.feature_bias(i) = normal(rng);
  mdp.psi.resize(d, num_states);
  for (int k = 0; k < d; ++k) {
    for (int s = 0; s < num_states; ++s) mdp.psi(k, s) = std::exp(2.0 * normal(rng));
    mdp.psi.row(k) /= mdp.psi.row(k).sum();
  }
  mdp.theta.resize(d);
  for (int k = 0; k < d; ++k) mdp.theta(k) = unit(rng);
  return mdp;
}

OfflineLinearDataset sample_offline_dataset(const LinearMdpSpec& mdp, int m, int n_perturb,
                                            double epsilon, Rng& rng) {
  if (m < 1 || n_perturb < 1 || epsilon < 0)
    throw ContractError("sample_offline_dataset: need m >= 1, n_perturb >= 1, epsilon >= 0");
  OfflineLinearDataset data;
  data.n_perturb = n_perturb;
  data.epsilon = epsilon;
  std::uniform_int_distribution<int> pick_state(0, mdp.num_states - 1);
  std::uniform_int_distribution<int> pick_action(0, mdp.num_actions - 1);
  std::uniform_real_distribution<double> noise(-epsilon, epsilon);
  const Eigen::Index coord_dim = mdp.coords.rows();
  for (int t = 0; t < mdp.horizon; ++t) {
    StepSamples step;
    step.perturbed.resize(coord_dim, static_cast<Eigen::Index>(m) * n_perturb);
    for (int i = 0; i < m; ++i) {
      const int s = pick_state(rng);
      const int a = pick_action(rng);
      const VectorXd p = mdp.transition(mdp.coords.col(s), a);
      std::discrete_distribution<int> next(p.data(), p.data() + p.size());
      step.states.push_back(s);
      step.actions.push_back(a);
      step.next_states.push_back(next(rng));
      for (int j = 0; j < n_perturb; ++j)
        for (Eigen::Index c = 0; c < coord_dim; ++c)
          step.perturbed(c, static_cast<Eigen::Index>(i) * n_perturb + j) =
              mdp.coords(c, s) + (epsilon > 0 ? noise(rng) : 0.0);
      step.ood_actions.push_back(pick_action(rng));
    }
    data.steps.push_back(std::move(step));
  }
  return data;
}

LsviData step_regression_data(const LinearMdpSpec& mdp, const OfflineLinearDataset& data, int t,
                              const VectorXd& next_value, double beta, TargetMode mode) {
  const StepSamples& step = data.steps.at(static_cast<std::size_t>(t));
  const int m = static_cast<int>(step.states.size());
  const int n = data.n_perturb;
  LsviData out;
  out.phi.resize(mdp.d, m);
  out.y.resize(m);
  out.phi_ood.resize(mdp.d, m);
  out.y_ood.resize(m);
  for (int i = 0; i < m; ++i) {
    const VectorXd x = mdp.coords.col(step.states[i]);
    const int a = step.actions[i];
    out.phi.col(i) = mdp.features(x, a);
    out.y(i) = mode.exact_targets ? mdp.bellman(x, a, next_value)
                                  : mdp.reward(x, a) + next_value(step.next_states[i]);
    MatrixXd z(mdp.d, n);
    for (int j = 0; j < n; ++j)
      z.col(j) = mdp.features(step.perturbed.col(static_cast<Eigen::Index>(i) * n + j), a) -
                 out.phi.col(i);
    out.diffs.push_back(std::move(z));
    out.phi_ood.col(i) =
        mdp.features(step.perturbed.col(static_cast<Eigen::Index>(i) * n), step.ood_actions[i]);
  }
  if (mode.oracle_ood) {
    for (int i = 0; i < m; ++i)
      out.y_ood(i) = mdp.bellman(step.perturbed.col(static_cast<Eigen::Index>(i) * n),
                                 step.ood_actions[i], next_value);
  } else {
    const VectorXd w_in = lsvi_solve_plain(out.phi, out.y, 1.0);
    MatrixXd lambda_in = out.phi * out.phi.transpose();
    lambda_in.diagonal().array() += 1.0;
    const MatrixXd solved = pd_solve(lambda_in, out.phi_ood, "Lambda_in + I");
    for (int i = 0; i < m; ++i) {
      const double width = std::sqrt(std::max(out.phi_ood.col(i).dot(solved.col(i)), 0.0));
      out.y_ood(i) = out.phi_ood.col(i).dot(w_in) - beta * width;
    }
  }
  return out;
}

namespace {

/// Features of every grid pair, column s * num_actions + a.
MatrixXd grid_feature_matrix(const LinearMdpSpec& mdp) {
  MatrixXd phi(mdp.d, mdp.num_states * mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      phi.col(s * mdp.num_actions + a) = mdp.grid_features(s, a);
  return phi;
}

/// sqrt(phi^T cov^{-1} phi) for every column.
VectorXd widths(const MatrixXd& phi, const MatrixXd& cov) {
  const MatrixXd solved = pd_solve(cov, phi, "covariance");
  return (phi.array() * solved.array()).colwise().sum().max(0.0).sqrt().transpose();
}

}  // namespace

PeviResult pessimistic_value_iteration(const LinearMdpSpec& mdp, const OfflineLinearDataset& data,
                                       double beta, TargetMode mode) {
  if (beta < 0) throw ContractError("pessimistic_value_iteration: beta must be >= 0");
  const int T = mdp.horizon;
  const MatrixXd grid = grid_feature_matrix(mdp);
  PeviResult r;
  r.beta = beta;
  r.weights.resize(T);
  r.lambda_tilde.resize(T);
  r.lambda_pbrl.resize(T);
  r.values.assign(static_cast<std::size_t>(T) + 1, VectorXd::Zero(mdp.num_states));
  r.policy.assign(T, std::vector<int>(static_cast<std::size_t>(mdp.num_states), 0));
  for (int t = T - 1; t >= 0; --t) {
    const LsviData reg = step_regression_data(mdp, data, t, r.values[t + 1], beta, mode);
    const CovarianceDecomposition cov = build_covariances(reg);
    r.weights[t] = lsvi_solve_rorl(reg, cov);
    r.lambda_tilde[t] = cov.lambda_tilde;
    r.lambda_pbrl[t] = cov.lambda_in + cov.lambda_ood;
    const VectorXd gamma = beta * widths(grid, cov.lambda_tilde);
    const VectorXd raw = grid.transpose() * r.weights[t];
    const VectorXd exact = grid.transpose() * (mdp.theta + mdp.psi * r.values[t + 1]);
    const double violation = ((raw - exact).cwiseAbs() - gamma).maxCoeff();
    r.xi_violation = t == T - 1 ? violation : std::max(r.xi_violation, violation);
    const double cap = static_cast<double>(T - t);
    for (int s = 0; s < mdp.num_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.num_actions; ++a) {
        const int c = s * mdp.num_actions + a;
        const double q = std::clamp(raw(c) - gamma(c), 0.0, cap);
        if (q > best) {
          best = q;
          r.policy[t][s] = a;
        }
      }
      r.values[t](s) = best;
    }
  }
  return r;
}

double xi_violation(const LinearMdpSpec& mdp, const OfflineLinearDataset& data,
                    const ValueTable& next_values, double beta, TargetMode mode) {
  if (next_values.size() != static_cast<std::size_t>(mdp.horizon) + 1)
    throw ShapeError("xi_violation: need horizon + 1 value vectors");
  const MatrixXd grid = grid_feature_matrix(mdp);
  double worst = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < mdp.horizon; ++t) {
    const VectorXd& v = next_values[t + 1];
    const LsviData reg = step_regression_data(mdp, data, t, v, beta, mode);
    const CovarianceDecomposition cov = build_covariances(reg);
    const VectorXd w = lsvi_solve_rorl(reg, cov);
    const VectorXd gamma = beta * widths(grid, cov.lambda_tilde);
    const VectorXd exact_w = mdp.theta + mdp.psi * v;
    const VectorXd err = (grid.transpose() * (w - exact_w)).cwiseAbs();
    worst = std::max(worst, (err - gamma).maxCoeff());
  }
  return worst;
}

double check_xi_quantifier(const LinearMdpSpec& mdp, const OfflineLinearDataset& data, double beta,
                           TargetMode mode) {
  return pessimistic_value_iteration(mdp, data, beta, mode).xi_violation;
}

ValueTable evaluate_policy(const LinearMdpSpec& mdp, const GridPolicy& policy) {
  ValueTable v(static_cast<std::size_t>(mdp.horizon) + 1, VectorXd::Zero(mdp.num_states));
  for (int t = mdp.horizon - 1; t >= 0; --t)
    for (int s = 0; s < mdp.num_states; ++s)
      v[t](s) = mdp.bellman(mdp.coords.col(s), policy.at(t).at(s), v[t + 1]);
  return v;
}

OptimalSolution optimal_policy(const LinearMdpSpec& mdp) {
  OptimalSolution sol;
  sol.values.assign(static_cast<std::size_t>(mdp.horizon) + 1, VectorXd::Zero(mdp.num_states));
  sol.policy.assign(mdp.horizon, std::vector<int>(static_cast<std::size_t>(mdp.num_states), 0));
  for (int t = mdp.horizon - 1; t >= 0; --t)
    for (int s = 0; s < mdp.num_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.num_actions; ++a) {
        const double q = mdp.bellman(mdp.coords.col(s), a, sol.values[t + 1]);
        if (q > best) {
          best = q;
          sol.policy[t][s] = a;
        }
      }
      sol.values[t](s) = best;
    }
  return sol;
}

double suboptimality(const LinearMdpSpec& mdp, const GridPolicy& pi_star, const GridPolicy& pi_hat) {
  return evaluate_policy(mdp, pi_star)[0](mdp.initial_state) -
         evaluate_policy(mdp, pi_hat)[0](mdp.initial_state);
}

std::vector<VectorXd> state_occupancy(const LinearMdpSpec& mdp, const GridPolicy& policy) {
  std::vector<VectorXd> occ;
  VectorXd current = VectorXd::Zero(mdp.num_states);
  current(mdp.initial_state) = 1.0;
  for (int t = 0; t < mdp.horizon; ++t) {
    occ.push_back(current);
    VectorXd next = VectorXd::Zero(mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s)
      if (current(s) != 0.0) next += current(s) * mdp.transition(mdp.coords.col(s), policy.at(t).at(s));
    current = next;
  }
  return occ;
}

double expected_penalty(const LinearMdpSpec& mdp, const GridPolicy& policy,
                        const std::vector<MatrixXd>& covariances, double beta) {
  const std::vector<VectorXd> occ = state_occupancy(mdp, policy);
  double total = 0.0;
  for (int t = 0; t < mdp.horizon; ++t) {
    MatrixXd phi(mdp.d, mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s) phi.col(s) = mdp.grid_features(s, policy[t][s]);
    total += beta * occ[t].dot(widths(phi, covariances.at(t)));
  }
  return total;
}

double calibrate_beta(const LinearMdpSpec& mdp, const CalibrationOptions& options,
                      std::uint64_t seed) {
  double worst = 0.0;
  for (int j = 0; j < options.draws; ++j) {
    Rng rng = make_stream(seed, 1000 + static_cast<std::uint64_t>(j));
    const OfflineLinearDataset data =
        sample_offline_dataset(mdp, options.m, options.n_perturb, options.epsilon, rng);
    auto passes = [&](double beta) { return check_xi_quantifier(mdp, data, beta, options.mode) <= 0.0; };
    if (passes(0.0)) continue;
    double hi = options.beta_max;
    while (!passes(hi)) {
      hi *= 2.0;
      if (hi > 1e6) throw ContractError("calibrate_beta: no beta up to 1e6 passes the xi check");
    }
    double lo = 0.0;
    for (int k = 0; k < options.bisection_steps; ++k) {
      const double mid = 0.5 * (lo + hi);
      (passes(mid) ? hi : lo) = mid;
    }
    worst = std::max(worst, hi);
  }
  return options.margin * worst;
}

TheoryRow run_theory_instance(std::uint64_t seed, int d, int horizon, int num_states,
                              int num_actions, const CalibrationOptions& options) {
  Rng mdp_rng = make_stream(seed, 0);
  const LinearMdpSpec mdp = random_linear_mdp(d, horizon, num_states, num_actions, mdp_rng);
  TheoryRow row;
  row.seed = seed;
  row.oracle_ood = options.mode.oracle_ood;
  row.beta = calibrate_beta(mdp, options, seed);

  Rng data_rng = make_stream(seed, 1);
  const OfflineLinearDataset data =
      sample_offline_dataset(mdp, options.m, options.n_perturb, options.epsilon, data_rng);
  const PeviResult pevi = pessimistic_value_iteration(mdp, data, row.beta, options.mode);
  row.xi_violation = xi_violation(mdp, data, pevi.values, row.beta, options.mode);
  const OptimalSolution star = optimal_policy(mdp);
  row.subopt = suboptimality(mdp, star.policy, pevi.policy);
  row.min_eig = std::numeric_limits<double>::infinity();
  for (const MatrixXd& cov : pevi.lambda_tilde) row.min_eig = std::min(row.min_eig, symmetric_eigen(cov).min());
  row.gamma_rorl = expected_penalty(mdp, star.policy, pevi.lambda_tilde, row.beta);
  try {
    row.gamma_pbrl = expected_penalty(mdp, star.policy, pevi.lambda_pbrl, row.beta);
  } catch (const SingularMatrixError&) {
    row.gamma_pbrl = std::numeric_limits<double>::infinity();
  }
  row.bound = row.gamma_rorl;
  return row;
}

}  // namespace rorl::theory
