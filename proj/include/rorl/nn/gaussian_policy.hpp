#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "rorl/nn/mlp.hpp"
#include "rorl/nn/random.hpp"

namespace rorl::nn {

/// log(1 - tanh(u)^2) written as 2*(log 2 - u - softplus(-2u)); stays finite
/// when tanh(u) rounds to +-1.
template <typename Derived>
auto log_one_minus_tanh_sq(const Eigen::ArrayBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  const Scalar ln2 = std::numbers::ln2_v<Scalar>;
  // softplus(x) = max(x,0) + log1p(exp(-|x|))
  auto x = (Scalar(-2) * u.derived());
  auto softplus = x.max(Scalar(0)) + (-(x.abs())).exp().log1p();
  return (Scalar(2) * (ln2 - u.derived() - softplus)).eval();
}

/// Mean and (clamped) log-std of the pre-squash Gaussian for a batch of
/// states. `log_std_active` marks entries where the clamp is not binding,
/// i.e. where gradients flow back into the trunk.
template <typename Scalar>
struct GaussianHeads {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix mean;
  Matrix log_std;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> log_std_active;
};

template <typename Scalar>
struct PolicySample {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Matrix action;    // tanh(pre_tanh), (action_dim x batch)
  Matrix pre_tanh;  // mean + std * noise
  Matrix noise;     // standard normal draws
  Vector log_prob;  // one entry per column
};

/// Diagonal Gaussian followed by tanh squashing; actions lie in (-1, 1).
/// The trunk maps a state to [mean; raw_log_std].
template <typename Scalar>
class GaussianTanhPolicy {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  GaussianTanhPolicy() = default;
  GaussianTanhPolicy(Mlp<Scalar> trunk, Scalar log_std_min = Scalar(-20),
                     Scalar log_std_max = Scalar(2))
      : trunk_(std::move(trunk)), log_std_min_(log_std_min), log_std_max_(log_std_max) {
    if (trunk_.output_size() % 2 != 0)
      throw ShapeError("policy trunk must emit [mean; log_std] with equal halves");
    if (!(log_std_min_ < log_std_max_)) throw ContractError("log_std bounds are inverted");
  }

  static GaussianTanhPolicy random(int state_dim, int action_dim, const std::vector<int>& hidden,
                                   Rng& rng) {
    std::vector<int> sizes{state_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * action_dim);
    return GaussianTanhPolicy(Mlp<Scalar>::random(sizes, rng));
  }

  int state_dim() const { return trunk_.input_size(); }
  int action_dim() const { return trunk_.output_size() / 2; }
  Scalar log_std_min() const { return log_std_min_; }
  Scalar log_std_max() const { return log_std_max_; }
  Mlp<Scalar>& trunk() { return trunk_; }
  const Mlp<Scalar>& trunk() const { return trunk_; }

  GaussianHeads<Scalar> heads(const Eigen::Ref<const Matrix>& states) const {
    return split(trunk_.forward(states));
  }
  GaussianHeads<Scalar> heads(const Eigen::Ref<const Matrix>& states,
                              typename Mlp<Scalar>::Cache& cache) const {
    return split(trunk_.forward(states, cache));
  }

  /// Reparameterized draw: action = tanh(mean + std * z), z ~ N(0, I).
  PolicySample<Scalar> sample(const GaussianHeads<Scalar>& h, Rng& rng) const {
    PolicySample<Scalar> out;
    out.noise = normal_matrix<Scalar>(h.mean.rows(), h.mean.cols(), rng);
    out.pre_tanh = h.mean.array() + h.log_std.array().exp() * out.noise.array();
    out.action = out.pre_tanh.array().tanh();
    out.log_prob = log_prob_from_pre_tanh(h, out.pre_tanh);
    return out;
  }

  PolicySample<Scalar> sample(const Eigen::Ref<const Matrix>& states, Rng& rng) const {
    return sample(heads(states), rng);
  }

  /// tanh(mean); what the agent executes at evaluation time.
  Matrix deterministic_action(const Eigen::Ref<const Matrix>& states) const {
    return heads(states).mean.array().tanh();
  }

  /// log pi(tanh(u) | s) including the change-of-variables term.
  static Vector log_prob_from_pre_tanh(const GaussianHeads<Scalar>& h,
                                       const Eigen::Ref<const Matrix>& pre_tanh) {
    const Scalar half_log_2pi = Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
    auto z = (pre_tanh.array() - h.mean.array()) * (-h.log_std.array()).exp();
    Matrix per_dim = Scalar(-0.5) * z.square() - h.log_std.array() - half_log_2pi -
                     log_one_minus_tanh_sq(pre_tanh.array());
    return per_dim.colwise().sum().transpose();
  }

  /// Log-density of given actions in (-1, 1).
  Vector log_prob(const Eigen::Ref<const Matrix>& states,
                  const Eigen::Ref<const Matrix>& actions) const {
    Matrix u = actions.array().atanh();
    return log_prob_from_pre_tanh(heads(states), u);
  }

  /// Backpropagates gradients w.r.t. mean and log_std through the clamp and
  /// the trunk. Accumulates into `param_grad`; returns the state gradient.
  Matrix backward(const typename Mlp<Scalar>::Cache& cache, const GaussianHeads<Scalar>& h,
                  const Eigen::Ref<const Matrix>& d_mean, const Eigen::Ref<const Matrix>& d_log_std,
                  Eigen::Ref<Vector> param_grad) const {
    return trunk_.backward(cache, join(h, d_mean, d_log_std), param_grad);
  }

  Matrix state_gradient(const typename Mlp<Scalar>::Cache& cache, const GaussianHeads<Scalar>& h,
                        const Eigen::Ref<const Matrix>& d_mean,
                        const Eigen::Ref<const Matrix>& d_log_std) const {
    return trunk_.input_gradient(cache, join(h, d_mean, d_log_std));
  }

 private:
  GaussianHeads<Scalar> split(const Matrix& out) const {
    const int m = action_dim();
    GaussianHeads<Scalar> h;
    h.mean = out.topRows(m);
    const Matrix raw = out.bottomRows(m);
    h.log_std = raw.cwiseMax(log_std_min_).cwiseMin(log_std_max_);
    h.log_std_active = (raw.array() >= log_std_min_) && (raw.array() <= log_std_max_);
    return h;
  }

  Matrix join(const GaussianHeads<Scalar>& h, const Eigen::Ref<const Matrix>& d_mean,
              const Eigen::Ref<const Matrix>& d_log_std) const {
    const int m = action_dim();
    Matrix upstream(2 * m, d_mean.cols());
    upstream.topRows(m) = d_mean;
    upstream.bottomRows(m) = h.log_std_active.select(d_log_std, Scalar(0));
    return upstream;
  }

  Mlp<Scalar> trunk_;
  Scalar log_std_min_ = Scalar(-20);
  Scalar log_std_max_ = Scalar(2);
};

/// Jeffrey's divergence 0.5*(KL(P||Q) + KL(Q||P)) between diagonal Gaussians
/// P = N(mean_p, exp(log_std_p)^2), Q likewise, summed over dimensions.
/// Column-wise for batched inputs.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> jeffrey_divergence(
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& mean_p,
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& log_std_p,
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& mean_q,
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& log_std_q) {
  auto var_p = (Scalar(2) * log_std_p.array()).exp();
  auto var_q = (Scalar(2) * log_std_q.array()).exp();
  auto diff_sq = (mean_p.array() - mean_q.array()).square();
  // 0.5 * [ (var_p + d^2) / (2 var_q) + (var_q + d^2) / (2 var_p) - 1 ]
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> per_dim =
      Scalar(0.25) * ((var_p + diff_sq) / var_q + (var_q + diff_sq) / var_p) - Scalar(0.5);
  return per_dim.colwise().sum().transpose();
}

/// Partial derivatives of jeffrey_divergence w.r.t. both distributions'
/// parameters, column-wise.
template <typename Scalar>
struct JeffreyGradient {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix d_mean_p, d_log_std_p, d_mean_q, d_log_std_q;
};

template <typename Scalar>
JeffreyGradient<Scalar> jeffrey_divergence_gradient(
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& mean_p,
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& log_std_p,
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& mean_q,
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& log_std_q) {
  auto inv_var_p = (Scalar(-2) * log_std_p.array()).exp();
  auto inv_var_q = (Scalar(-2) * log_std_q.array()).exp();
  auto var_p = (Scalar(2) * log_std_p.array()).exp();
  auto var_q = (Scalar(2) * log_std_q.array()).exp();
  auto diff = (mean_p.array() - mean_q.array());
  JeffreyGradient<Scalar> g;
  g.d_mean_p = Scalar(0.5) * diff * (inv_var_p + inv_var_q);
  g.d_mean_q = -g.d_mean_p;
  g.d_log_std_p = Scalar(0.5) * (var_p * inv_var_q - (var_q + diff.square()) * inv_var_p);
  g.d_log_std_q = Scalar(0.5) * (var_q * inv_var_p - (var_p + diff.square()) * inv_var_q);
  return g;
}

/// D_J between pi(.|s) and pi(.|s_hat) on the pre-squash Gaussians.
template <typename Scalar>
Scalar jeffrey_divergence(const GaussianTanhPolicy<Scalar>& policy,
                          const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& s,
                          const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& s_hat) {
  if (s.size() != s_hat.size()) throw ShapeError("jeffrey_divergence: state sizes differ");
  const auto p = policy.heads(s);
  const auto q = policy.heads(s_hat);
  return jeffrey_divergence<Scalar>(p.mean, p.log_std, q.mean, q.log_std)(0);
}

using PolicyD = GaussianTanhPolicy<double>;

}  // namespace rorl::nn
