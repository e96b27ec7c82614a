#include "ctseq/nn.hpp"

#include <algorithm>

#include "ctseq/error.hpp"

namespace ctseq {

namespace {

void check_pair(std::span<const double> p, std::span<const double> y) {
  if (p.empty()) throw Error(ErrorCode::Contract, "bce: empty batch");
  if (p.size() != y.size()) throw Error(ErrorCode::Shape, "bce: probability/label length mismatch");
}

}  // namespace

double bce_loss(std::span<const double> p, std::span<const double> y) {
  check_pair(p, y);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    total -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  return total / static_cast<double>(p.size());
}

Eigen::VectorXd bce_logit_grad(std::span<const double> p, std::span<const double> y) {
  check_pair(p, y);
  const double n = static_cast<double>(p.size());
  Eigen::VectorXd g(static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool clamped = p[i] < kProbabilityClamp || p[i] > 1.0 - kProbabilityClamp;
    g(static_cast<Eigen::Index>(i)) = clamped ? 0.0 : (p[i] - y[i]) / n;
  }
  return g;
}

void AdamConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw Error(ErrorCode::Config, "learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::Config, "Adam betas must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorCode::Config, "Adam epsilon must be > 0");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::Config, "weight decay must be >= 0");
}

AdamState adam_init(const ConstParamBlocks& params) {
  AdamState state;
  for (const auto& p : params) {
    state.m.push_back(Eigen::VectorXd::Zero(p.size()));
    state.v.push_back(Eigen::VectorXd::Zero(p.size()));
  }
  return state;
}

void adam_step(const ParamBlocks& params, const ConstParamBlocks& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw Error(ErrorCode::Shape, "adam_step: parameter/gradient/state block count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || params[i].size() != state.m[i].size()) {
      throw Error(ErrorCode::Shape, "adam_step: block " + std::to_string(i) + " shape mismatch");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::Map<Eigen::VectorXd> block = params[i];  // the vector is const, the mapped data is not
    auto theta = block.array();
    const Eigen::ArrayXd g = grads[i].array() + cfg.weight_decay * theta;
    auto m = state.m[i].array();
    auto v = state.v[i].array();
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.square();
    theta -= cfg.learning_rate * (m / correction1) / ((v / correction2).sqrt() + cfg.epsilon);
  }
}

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  }
}

DenseLayer make_dense(int out, int in, Rng& rng) {
  DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
  fill_uniform(layer.weight, std::sqrt(6.0 / (in + out)), rng);
  return layer;
}

}  // namespace ctseq
