#include "ctseq/attention.hpp"

#include <cmath>

#include "ctseq/error.hpp"

namespace ctseq {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd affine(const MatrixXd& x, const DenseLayer& layer) {
  MatrixXd y = x * layer.weight.transpose();
  y.rowwise() += layer.bias.transpose();
  return y;
}

// Accumulates the gradient of y = affine(x, layer) and returns dL/dx.
MatrixXd affine_backward(const MatrixXd& x, const DenseLayer& layer, const MatrixXd& dy,
                         DenseLayer& grad) {
  grad.weight.noalias() += dy.transpose() * x;
  grad.bias += dy.colwise().sum().transpose();
  return dy * layer.weight;
}

struct NormCache {
  MatrixXd xhat;
  VectorXd inv_std;
};

MatrixXd layer_norm(const MatrixXd& x, const LayerNormParams& p, NormCache& cache) {
  const Eigen::Index n = x.cols();
  const VectorXd mean = x.rowwise().mean();
  cache.xhat = x.colwise() - mean;
  const VectorXd var = cache.xhat.array().square().rowwise().sum() / static_cast<double>(n);
  cache.inv_std = (var.array() + kLayerNormEpsilon).rsqrt();
  cache.xhat = cache.inv_std.asDiagonal() * cache.xhat;
  MatrixXd y = cache.xhat * p.gamma.asDiagonal();
  y.rowwise() += p.beta.transpose();
  return y;
}

MatrixXd layer_norm_backward(const MatrixXd& dy, const LayerNormParams& p, const NormCache& cache,
                             LayerNormParams& grad) {
  const double n = static_cast<double>(dy.cols());
  grad.gamma += (dy.array() * cache.xhat.array()).colwise().sum().transpose().matrix();
  grad.beta += dy.colwise().sum().transpose();
  const MatrixXd dxhat = dy * p.gamma.asDiagonal();
  const VectorXd mean_d = dxhat.rowwise().sum() / n;
  const VectorXd mean_dx = (dxhat.array() * cache.xhat.array()).rowwise().sum().matrix() / n;
  MatrixXd dx = dxhat;
  dx.colwise() -= mean_d;
  dx -= mean_dx.asDiagonal() * cache.xhat;
  return cache.inv_std.asDiagonal() * dx;
}

struct LayerTape {
  std::vector<std::pair<int, int>> windows;
  MatrixXd z_in, q, k, v;
  std::vector<MatrixXd> probs;  // window-major, then head
  MatrixXd attended, y1, ff_pre, ff_act, z_out;
  NormCache norm1, norm2;
};

struct ForwardPass {
  MatrixXd projected;
  std::vector<LayerTape> layers;
  VectorXd pooled;
  double logit = 0.0;
};

void check_input(const AttnParams& params, const MatrixXd& x) {
  if (x.rows() < 1 || x.cols() != params.input_dim()) {
    throw Error(ErrorCode::Shape, "attention: expected k x " + std::to_string(params.input_dim()) +
                                      " input, got " + std::to_string(x.rows()) + "x" +
                                      std::to_string(x.cols()));
  }
}

MatrixXd attend(const MatrixXd& q, const MatrixXd& k, const MatrixXd& v, int heads,
                std::span<const std::pair<int, int>> windows, std::vector<MatrixXd>* probs) {
  const Eigen::Index dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  MatrixXd out(q.rows(), q.cols());
  for (const auto& [begin, len] : windows) {
    for (int head = 0; head < heads; ++head) {
      const Eigen::Index c = head * dh;
      MatrixXd s = scale * q.block(begin, c, len, dh) * k.block(begin, c, len, dh).transpose();
      s.colwise() -= s.rowwise().maxCoeff();
      s = s.array().exp().matrix();
      s = s.array().colwise() / s.rowwise().sum().array();
      out.block(begin, c, len, dh).noalias() = s * v.block(begin, c, len, dh);
      if (probs) probs->push_back(std::move(s));
    }
  }
  return out;
}

ForwardPass run_forward(const AttnParams& params, const MatrixXd& x) {
  check_input(params, x);
  const int k = static_cast<int>(x.rows());
  ForwardPass pass;
  pass.projected = affine(x, params.input);
  const MatrixXd* z = &pass.projected;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const EncoderLayer& layer = params.layers[l];
    LayerTape tape;
    tape.windows = attention_windows(k, params.window, params.shift && l % 2 == 1);
    tape.z_in = *z;
    tape.q = affine(tape.z_in, layer.query);
    tape.k = affine(tape.z_in, layer.key);
    tape.v = affine(tape.z_in, layer.value);
    tape.attended = attend(tape.q, tape.k, tape.v, params.heads, tape.windows, &tape.probs);
    tape.y1 = layer_norm(tape.z_in + affine(tape.attended, layer.output), layer.norm1, tape.norm1);
    tape.ff_pre = affine(tape.y1, layer.ff1);
    tape.ff_act = tape.ff_pre.array().max(0.0).matrix();
    tape.z_out = layer_norm(tape.y1 + affine(tape.ff_act, layer.ff2), layer.norm2, tape.norm2);
    pass.layers.push_back(std::move(tape));
    z = &pass.layers.back().z_out;
  }
  pass.pooled = z->colwise().mean().transpose();
  pass.logit = params.head.weight.row(0).dot(pass.pooled) + params.head.bias(0);
  return pass;
}

void run_backward(const AttnParams& params, const MatrixXd& x, const ForwardPass& pass,
                  double dlogit, AttnParams& grad) {
  const Eigen::Index k = x.rows();
  grad.head.weight.row(0) += dlogit * pass.pooled.transpose();
  grad.head.bias(0) += dlogit;
  MatrixXd dz = MatrixXd::Constant(k, 1, 1.0 / static_cast<double>(k)) * (dlogit * params.head.weight);

  const Eigen::Index dh = params.model_dim() / params.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const EncoderLayer& layer = params.layers[l];
    EncoderLayer& g = grad.layers[l];
    const LayerTape& tape = pass.layers[l];

    const MatrixXd d_r2 = layer_norm_backward(dz, layer.norm2, tape.norm2, g.norm2);
    const MatrixXd d_act = affine_backward(tape.ff_act, layer.ff2, d_r2, g.ff2);
    const MatrixXd d_pre = (tape.ff_pre.array() > 0.0).select(d_act.array(), 0.0).matrix();
    const MatrixXd d_y1 = d_r2 + affine_backward(tape.y1, layer.ff1, d_pre, g.ff1);
    const MatrixXd d_r1 = layer_norm_backward(d_y1, layer.norm1, tape.norm1, g.norm1);
    const MatrixXd d_att = affine_backward(tape.attended, layer.output, d_r1, g.output);

    MatrixXd dq = MatrixXd::Zero(k, tape.q.cols());
    MatrixXd dk = MatrixXd::Zero(k, tape.k.cols());
    MatrixXd dv = MatrixXd::Zero(k, tape.v.cols());
    std::size_t slot = 0;
    for (const auto& [begin, len] : tape.windows) {
      for (int head = 0; head < params.heads; ++head, ++slot) {
        const Eigen::Index c = head * dh;
        const MatrixXd& p = tape.probs[slot];
        const auto d_out = d_att.block(begin, c, len, dh);
        const MatrixXd dp = d_out * tape.v.block(begin, c, len, dh).transpose();
        dv.block(begin, c, len, dh).noalias() += p.transpose() * d_out;
        MatrixXd ds = p.array() * (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
        ds *= scale;
        dq.block(begin, c, len, dh).noalias() += ds * tape.k.block(begin, c, len, dh);
        dk.block(begin, c, len, dh).noalias() += ds.transpose() * tape.q.block(begin, c, len, dh);
      }
    }
    dz = d_r1;
    dz += affine_backward(tape.z_in, layer.query, dq, g.query);
    dz += affine_backward(tape.z_in, layer.key, dk, g.key);
    dz += affine_backward(tape.z_in, layer.value, dv, g.value);
  }
  affine_backward(x, params.input, dz, grad.input);
}

}  // namespace

void AttnConfig::validate() const {
  if (input_dim < 1 || model_dim < 1 || heads < 1 || layers < 1 || ff_mult < 1) {
    throw Error(ErrorCode::Config, "attention dimensions must be >= 1");
  }
  if (model_dim % heads != 0) throw Error(ErrorCode::Config, "model dim must be divisible by heads");
  if (window < 1) throw Error(ErrorCode::Config, "attention window must be >= 1");
}

AttnParams init_attn(const AttnConfig& cfg, Rng& rng) {
  cfg.validate();
  AttnParams params;
  params.heads = cfg.heads;
  params.window = cfg.window;
  params.shift = cfg.shift;
  const int m = cfg.model_dim;
  params.input = make_dense(m, cfg.input_dim, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    EncoderLayer layer;
    layer.query = make_dense(m, m, rng);
    layer.key = make_dense(m, m, rng);
    layer.value = make_dense(m, m, rng);
    layer.output = make_dense(m, m, rng);
    layer.norm1 = {VectorXd::Ones(m), VectorXd::Zero(m)};
    layer.ff1 = make_dense(cfg.ff_mult * m, m, rng);
    layer.ff2 = make_dense(m, cfg.ff_mult * m, rng);
    layer.norm2 = {VectorXd::Ones(m), VectorXd::Zero(m)};
    params.layers.push_back(std::move(layer));
  }
  params.head = make_dense(1, m, rng);
  return params;
}

void check_attn(const AttnParams& params) {
  const Eigen::Index m = params.input.weight.rows();
  auto dense_ok = [](const DenseLayer& d, Eigen::Index out, Eigen::Index in) {
    return d.weight.rows() == out && d.weight.cols() == in && d.bias.size() == out;
  };
  auto norm_ok = [m](const LayerNormParams& n) { return n.gamma.size() == m && n.beta.size() == m; };
  if (params.heads < 1 || m % params.heads != 0 || params.window < 1 || params.layers.empty() ||
      params.input.bias.size() != m) {
    throw Error(ErrorCode::Shape, "attention settings are inconsistent with the model dim");
  }
  for (const auto& layer : params.layers) {
    const Eigen::Index ff = layer.ff1.weight.rows();
    if (!dense_ok(layer.query, m, m) || !dense_ok(layer.key, m, m) || !dense_ok(layer.value, m, m) ||
        !dense_ok(layer.output, m, m) || !dense_ok(layer.ff1, ff, m) || !dense_ok(layer.ff2, m, ff) ||
        !norm_ok(layer.norm1) || !norm_ok(layer.norm2)) {
      throw Error(ErrorCode::Shape, "attention encoder layer shapes do not chain");
    }
  }
  if (!dense_ok(params.head, 1, m)) throw Error(ErrorCode::Shape, "attention head must be 1 x model dim");
}

std::vector<std::pair<int, int>> attention_windows(int k, int window, bool shifted) {
  std::vector<std::pair<int, int>> out;
  int begin = 0;
  const int offset = shifted ? window / 2 : 0;
  if (offset > 0) {
    out.emplace_back(0, std::min(offset, k));
    begin = offset;
  }
  for (; begin < k; begin += window) out.emplace_back(begin, std::min(window, k - begin));
  return out;
}

MatrixXd windowed_attention(const MatrixXd& q, const MatrixXd& k, const MatrixXd& v, int heads,
                            std::span<const std::pair<int, int>> windows) {
  if (heads < 1 || q.cols() % heads != 0 || k.rows() != q.rows() || v.rows() != q.rows() ||
      k.cols() != q.cols() || v.cols() != q.cols()) {
    throw Error(ErrorCode::Shape, "windowed_attention: inconsistent q/k/v shapes");
  }
  return attend(q, k, v, heads, windows, nullptr);
}

double attn_forward(const AttnParams& params, const MatrixXd& x) {
  return sigmoid(run_forward(params, x).logit);
}

double attn_loss_and_grad(const AttnParams& params, std::span<const MatrixXd> xs,
                          std::span<const double> labels, AttnParams& grad) {
  if (xs.empty()) throw Error(ErrorCode::Contract, "attention: empty batch");
  if (labels.size() != xs.size()) throw Error(ErrorCode::Shape, "attention: label count does not match the batch");
  std::vector<ForwardPass> passes;
  std::vector<double> probs;
  for (const auto& x : xs) {
    passes.push_back(run_forward(params, x));
    probs.push_back(sigmoid(passes.back().logit));
  }
  const double loss = bce_loss(probs, labels);
  const VectorXd dlogit = bce_logit_grad(probs, labels);

  grad = zeros_like(params);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    run_backward(params, xs[i], passes[i], dlogit(static_cast<Eigen::Index>(i)), grad);
  }
  return loss;
}

}  // namespace ctseq
