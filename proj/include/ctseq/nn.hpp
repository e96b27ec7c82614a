#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace ctseq {

using Rng = std::mt19937_64;

// y = weight * x + bias
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f(self.weight);
    f(self.bias);
  }
};

template <std::floating_point Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& z) {
  return z.unaryExpr([](typename Derived::Scalar v) { return sigmoid(v); });
}

template <typename Derived>
auto relu(const Eigen::ArrayBase<Derived>& z) {
  return z.max(typename Derived::Scalar(0));
}

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
double bce_loss(std::span<const double> p, std::span<const double> y);

/// Gradient of the mean BCE with respect to each logit z (p = sigmoid(z)).
/// Zero where the clamp is active, matching the clamped loss.
Eigen::VectorXd bce_logit_grad(std::span<const double> p, std::span<const double> y);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 5e-4;  // coupled L2: decay * theta is added to the gradient

  void validate() const;
};

struct AdamState {
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::VectorXd> v;
  std::int64_t step = 0;
};

using ParamBlocks = std::vector<Eigen::Map<Eigen::VectorXd>>;
using ConstParamBlocks = std::vector<Eigen::Map<const Eigen::VectorXd>>;

// Parameter structs expose `template <class Self, class F> static void
// visit(Self&, F&&)` calling f on every dense Eigen member in a fixed order.
template <class Params>
ParamBlocks param_blocks(Params& params) {
  ParamBlocks out;
  Params::visit(params, [&](auto& m) { out.emplace_back(m.data(), m.size()); });
  return out;
}

template <class Params>
ConstParamBlocks param_blocks(const Params& params) {
  ConstParamBlocks out;
  Params::visit(params, [&](const auto& m) { out.emplace_back(m.data(), m.size()); });
  return out;
}

template <class Params>
Params zeros_like(const Params& params) {
  Params out = params;
  Params::visit(out, [](auto& m) { m.setZero(); });
  return out;
}

template <class Params>
Eigen::Index parameter_count(const Params& params) {
  Eigen::Index n = 0;
  Params::visit(params, [&](const auto& m) { n += m.size(); });
  return n;
}

AdamState adam_init(const ConstParamBlocks& params);
void adam_step(const ParamBlocks& params, const ConstParamBlocks& grads, AdamState& state,
               const AdamConfig& cfg);

template <class Params>
AdamState adam_init(const Params& params) {
  return adam_init(param_blocks(params));
}

template <class Params>
void adam_step(Params& params, const Params& grads, AdamState& state, const AdamConfig& cfg) {
  adam_step(param_blocks(params), param_blocks(grads), state, cfg);
}

// Uniform(-bound, bound) fill.
void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, double bound, Rng& rng);

DenseLayer make_dense(int out, int in, Rng& rng);

}  // namespace ctseq
