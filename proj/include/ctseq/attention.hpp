#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ctseq/nn.hpp"

namespace ctseq {

// Encoder over the slice axis with self-attention restricted to windows of
// `window` consecutive slices. With `shift`, odd layers move the window grid
// by window/2 so information crosses window borders.
struct AttnConfig {
  int input_dim = 224;
  int model_dim = 64;
  int heads = 4;
  int window = 16;
  int layers = 2;
  int ff_mult = 4;
  bool shift = true;

  void validate() const;
};

struct LayerNormParams {
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f(self.gamma);
    f(self.beta);
  }
};

// Post-norm block: x + attention -> norm -> x + feed-forward -> norm.
struct EncoderLayer {
  DenseLayer query, key, value, output;
  LayerNormParams norm1;
  DenseLayer ff1, ff2;
  LayerNormParams norm2;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    DenseLayer::visit(self.query, f);
    DenseLayer::visit(self.key, f);
    DenseLayer::visit(self.value, f);
    DenseLayer::visit(self.output, f);
    LayerNormParams::visit(self.norm1, f);
    DenseLayer::visit(self.ff1, f);
    DenseLayer::visit(self.ff2, f);
    LayerNormParams::visit(self.norm2, f);
  }
};

struct AttnParams {
  // Structural settings; not trained.
  int heads = 4;
  int window = 16;
  bool shift = true;

  DenseLayer input;  // model_dim x input_dim
  std::vector<EncoderLayer> layers;
  DenseLayer head;  // 1 x model_dim, applied to the mean over slices

  int input_dim() const { return static_cast<int>(input.weight.cols()); }
  int model_dim() const { return static_cast<int>(input.weight.rows()); }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    DenseLayer::visit(self.input, f);
    for (auto& layer : self.layers) EncoderLayer::visit(layer, f);
    DenseLayer::visit(self.head, f);
  }
};

inline constexpr double kLayerNormEpsilon = 1e-5;

AttnParams init_attn(const AttnConfig& cfg, Rng& rng);
void check_attn(const AttnParams& params);

/// [begin, length) windows covering [0, k). Shifted grids start with a
/// window of window/2 slices; a trailing window may be short, which is
/// equivalent to zero-padding with the padded positions masked out.
std::vector<std::pair<int, int>> attention_windows(int k, int window, bool shifted);

/// Multi-head scaled dot-product attention inside each window. Inputs are
/// k x model_dim projections; heads split the columns evenly.
Eigen::MatrixXd windowed_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                   const Eigen::MatrixXd& v, int heads,
                                   std::span<const std::pair<int, int>> windows);

/// Probability for one k x d sequence (rows are slices).
double attn_forward(const AttnParams& params, const Eigen::MatrixXd& x);

/// Mean BCE over the batch with analytic gradients.
double attn_loss_and_grad(const AttnParams& params, std::span<const Eigen::MatrixXd> xs,
                          std::span<const double> labels, AttnParams& grad);

}  // namespace ctseq
