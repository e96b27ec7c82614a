#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "ctseq/nn.hpp"

namespace ctseq {

struct LstmConfig {
  int input_dim = 224;
  int hidden = 128;  // per direction
  int layers = 4;
  int head_hidden = 64;

  void validate() const;
};

// One direction of one layer. Rows of `weight` are the gate blocks
// [input; forget; candidate; output], each hidden x (in + hidden); the first
// `in` columns act on the layer input and the rest on the previous state.
struct LstmCell {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;

  int hidden() const { return static_cast<int>(weight.rows() / 4); }
  int input_dim() const { return static_cast<int>(weight.cols()) - hidden(); }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f(self.weight);
    f(self.bias);
  }
};

struct BiLstmLayer {
  LstmCell forward;
  LstmCell backward;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    LstmCell::visit(self.forward, f);
    LstmCell::visit(self.backward, f);
  }
};

// Stacked bidirectional LSTM read out through the top layer's final forward
// state and first-step backward state, then linear -> ReLU -> linear -> sigmoid.
struct LstmParams {
  std::vector<BiLstmLayer> layers;
  DenseLayer head_hidden;  // head_hidden x 2*hidden
  DenseLayer head_out;     // 1 x head_hidden

  int input_dim() const { return layers.front().forward.input_dim(); }
  int hidden() const { return layers.front().forward.hidden(); }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    for (auto& layer : self.layers) BiLstmLayer::visit(layer, f);
    DenseLayer::visit(self.head_hidden, f);
    DenseLayer::visit(self.head_out, f);
  }
};

// Forget-gate bias at init. With zero bias the carried state halves every step
// and the readout cannot see the middle of a 120-step sequence.
inline constexpr double kForgetBiasInit = 1.0;

/// Weights and the other biases uniform in +-1/sqrt(hidden).
LstmParams init_lstm(const LstmConfig& cfg, Rng& rng);
void check_lstm(const LstmParams& params);

/// Probability for one k x d sequence (rows are time steps).
double lstm_forward(const LstmParams& params, const Eigen::MatrixXd& x);

/// Probabilities for equally long sequences evaluated together.
Eigen::VectorXd lstm_forward_batch(const LstmParams& params, std::span<const Eigen::MatrixXd> xs);

/// Mean BCE over the batch with gradients by backpropagation through time.
double lstm_loss_and_grad(const LstmParams& params, std::span<const Eigen::MatrixXd> xs,
                          std::span<const double> labels, LstmParams& grad);

}  // namespace ctseq
