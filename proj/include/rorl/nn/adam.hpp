#pragma once

#include <cmath>
#include <type_traits>
#include <cstdint>

#include <Eigen/Core>

#include "rorl/errors.hpp"

namespace rorl::nn {

template <typename Scalar>
struct AdamState {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector first_moment;
  Vector second_moment;
  std::int64_t step_count = 0;
  Scalar learning_rate = Scalar(3e-4);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);

  AdamState() = default;
  explicit AdamState(Eigen::Index num_params, Scalar lr = Scalar(3e-4))
      : first_moment(Vector::Zero(num_params)),
        second_moment(Vector::Zero(num_params)),
        learning_rate(lr) {}
};

/// Bias-corrected Adam update of `params` in place.
/// Throws OptimizerError (leaving state and params untouched) if any
/// gradient entry is NaN or infinite.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state,
               Eigen::Ref<Eigen::Matrix<std::type_identity_t<Scalar>, Eigen::Dynamic, 1>> params,
               const Eigen::Ref<const Eigen::Matrix<std::type_identity_t<Scalar>, Eigen::Dynamic, 1>>&
                   grads) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size())
    throw ShapeError("adam_step: parameter, gradient, and state sizes differ");
  if (!grads.allFinite()) throw OptimizerError("adam_step: non-finite gradient");

  state.step_count += 1;
  state.first_moment = state.beta1 * state.first_moment + (Scalar(1) - state.beta1) * grads;
  state.second_moment =
      state.beta2 * state.second_moment + (Scalar(1) - state.beta2) * grads.cwiseAbs2();
  const auto t = static_cast<Scalar>(state.step_count);
  const Scalar m_scale = Scalar(1) / (Scalar(1) - std::pow(state.beta1, t));
  const Scalar v_scale = Scalar(1) / (Scalar(1) - std::pow(state.beta2, t));
  params.array() -= state.learning_rate * (state.first_moment.array() * m_scale) /
                    ((state.second_moment.array() * v_scale).sqrt() + state.epsilon);
}

}  // namespace rorl::nn
