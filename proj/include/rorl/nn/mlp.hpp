#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rorl/errors.hpp"
#include "rorl/nn/random.hpp"

namespace rorl::nn {

enum class Activation { identity, relu };

/// Fully connected network with rectified hidden layers.
///
/// All parameters live in one contiguous vector laid out layer by layer as
/// [W_0 (row-major, out x in), b_0, W_1, b_1, ...]. Optimizers, Polyak
/// averaging, and checkpoints all operate on that flat vector, and the
/// per-layer views below are maps into it.
///
/// Batched calls take inputs as columns: x is (input_size x batch).
template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using WeightMap = Eigen::Map<RowMajorMatrix>;
  using ConstWeightMap = Eigen::Map<const RowMajorMatrix>;
  using BiasMap = Eigen::Map<Vector>;
  using ConstBiasMap = Eigen::Map<const Vector>;

  /// Intermediate values kept by forward() for a later backward().
  struct Cache {
    std::vector<Matrix> inputs;       // input to layer l
    std::vector<Matrix> preactivity;  // W_l * input + b_l
  };

  Mlp() = default;

  explicit Mlp(std::vector<int> layer_sizes, Activation output = Activation::identity)
      : layer_sizes_(std::move(layer_sizes)), output_activation_(output) {
    if (layer_sizes_.size() < 2) throw ShapeError("Mlp needs at least an input and output size");
    for (int n : layer_sizes_)
      if (n <= 0) throw ShapeError("Mlp layer sizes must be positive");
    Eigen::Index total = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
      weight_offset_.push_back(total);
      total += Eigen::Index(layer_sizes_[l + 1]) * layer_sizes_[l];
      bias_offset_.push_back(total);
      total += layer_sizes_[l + 1];
    }
    params_ = Vector::Zero(total);
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static Mlp random(std::vector<int> layer_sizes, Rng& rng,
                    Activation output = Activation::identity) {
    Mlp net(std::move(layer_sizes), output);
    for (int l = 0; l < net.num_layers(); ++l) {
      const Scalar bound = Scalar(1) / std::sqrt(Scalar(net.layer_sizes_[l]));
      std::uniform_real_distribution<Scalar> dist(-bound, bound);
      auto w = net.weight(l);
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
      auto b = net.bias(l);
      for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = dist(rng);
    }
    return net;
  }

  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  Activation output_activation() const { return output_activation_; }
  int num_layers() const { return static_cast<int>(layer_sizes_.size()) - 1; }
  int input_size() const { return layer_sizes_.front(); }
  int output_size() const { return layer_sizes_.back(); }
  Eigen::Index num_params() const { return params_.size(); }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  WeightMap weight(int l) {
    return WeightMap(params_.data() + weight_offset_[l], layer_sizes_[l + 1], layer_sizes_[l]);
  }
  ConstWeightMap weight(int l) const {
    return ConstWeightMap(params_.data() + weight_offset_[l], layer_sizes_[l + 1],
                          layer_sizes_[l]);
  }
  BiasMap bias(int l) { return BiasMap(params_.data() + bias_offset_[l], layer_sizes_[l + 1]); }
  ConstBiasMap bias(int l) const {
    return ConstBiasMap(params_.data() + bias_offset_[l], layer_sizes_[l + 1]);
  }

  Matrix forward(const Eigen::Ref<const Matrix>& x) const {
    check_input(x);
    Matrix a = x;
    for (int l = 0; l < num_layers(); ++l) {
      Matrix z = weight(l) * a;
      z.colwise() += bias(l);
      a = activate(std::move(z), l);
    }
    return a;
  }

  Matrix forward(const Eigen::Ref<const Matrix>& x, Cache& cache) const {
    check_input(x);
    cache.inputs.resize(num_layers());
    cache.preactivity.resize(num_layers());
    Matrix a = x;
    for (int l = 0; l < num_layers(); ++l) {
      Matrix z = weight(l) * a;
      z.colwise() += bias(l);
      cache.inputs[l] = std::move(a);
      cache.preactivity[l] = z;
      a = activate(std::move(z), l);
    }
    return a;
  }

  /// Reverse pass for the scalar sum_j upstream(:,j)' * output(:,j).
  /// Parameter gradients are accumulated (+=) into `param_grad`, which must
  /// have num_params() entries. Returns the input gradient, one column per
  /// sample.
  Matrix backward(const Cache& cache, const Eigen::Ref<const Matrix>& upstream,
                  Eigen::Ref<Vector> param_grad) const {
    if (cache.inputs.size() != static_cast<std::size_t>(num_layers()))
      throw ShapeError("Mlp::backward called with a cache from a different network");
    if (upstream.rows() != output_size() || upstream.cols() != cache.inputs.front().cols())
      throw ShapeError("Mlp::backward upstream shape mismatch");
    if (param_grad.size() != num_params()) throw ShapeError("Mlp::backward gradient size");
    Matrix g = upstream;
    for (int l = num_layers() - 1; l >= 0; --l) {
      if (l + 1 < num_layers() || output_activation_ == Activation::relu)
        g = (cache.preactivity[l].array() > Scalar(0)).select(g, Scalar(0));
      Eigen::Map<RowMajorMatrix> dw(param_grad.data() + weight_offset_[l], layer_sizes_[l + 1],
                                    layer_sizes_[l]);
      dw.noalias() += g * cache.inputs[l].transpose();
      Eigen::Map<Vector>(param_grad.data() + bias_offset_[l], layer_sizes_[l + 1]) +=
          g.rowwise().sum();
      if (l > 0) {
        g = weight(l).transpose() * g;
      } else {
        return weight(l).transpose() * g;
      }
    }
    return g;  // unreachable: num_layers() >= 1
  }

  /// Input gradient only; skips the weight outer products.
  Matrix input_gradient(const Cache& cache, const Eigen::Ref<const Matrix>& upstream) const {
    if (upstream.rows() != output_size() || upstream.cols() != cache.inputs.front().cols())
      throw ShapeError("Mlp::input_gradient upstream shape mismatch");
    Matrix g = upstream;
    for (int l = num_layers() - 1; l >= 0; --l) {
      if (l + 1 < num_layers() || output_activation_ == Activation::relu)
        g = (cache.preactivity[l].array() > Scalar(0)).select(g, Scalar(0));
      g = weight(l).transpose() * g;
    }
    return g;
  }

 private:
  void check_input(const Eigen::Ref<const Matrix>& x) const {
    if (x.rows() != input_size())
      throw ShapeError("Mlp input has " + std::to_string(x.rows()) + " rows, expected " +
                       std::to_string(input_size()));
  }

  Matrix activate(Matrix z, int l) const {
    if (l + 1 < num_layers() || output_activation_ == Activation::relu)
      z = z.cwiseMax(Scalar(0));
    return z;
  }

  std::vector<int> layer_sizes_;
  Activation output_activation_ = Activation::identity;
  std::vector<Eigen::Index> weight_offset_;
  std::vector<Eigen::Index> bias_offset_;
  Vector params_;
};

template <typename Scalar>
struct MlpGradients {
  typename Mlp<Scalar>::Vector params;
  typename Mlp<Scalar>::Vector input;
};

/// Exact reverse-mode gradients of upstream' * net(x) for a single input.
template <typename Scalar>
MlpGradients<Scalar> mlp_gradients(const Mlp<Scalar>& net,
                                   const typename Mlp<Scalar>::Vector& x,
                                   const typename Mlp<Scalar>::Vector& upstream) {
  typename Mlp<Scalar>::Cache cache;
  net.forward(x, cache);
  MlpGradients<Scalar> out;
  out.params = Mlp<Scalar>::Vector::Zero(net.num_params());
  out.input = net.backward(cache, upstream, out.params);
  return out;
}

using MlpD = Mlp<double>;

}  // namespace rorl::nn
