#include "ctseq/lstm.hpp"

#include "ctseq/error.hpp"

namespace ctseq {

namespace {

using Eigen::MatrixXd;

// Column t*B + b of every tape matrix belongs to time step t of sequence b.
struct DirectionTape {
  MatrixXd gates;   // 4H x TB, after the gate nonlinearities
  MatrixXd cells;   // H x TB
  MatrixXd hidden;  // H x TB
};

struct LayerTape {
  MatrixXd input;
  DirectionTape fwd;
  DirectionTape bwd;
};

struct ForwardPass {
  std::vector<LayerTape> layers;
  MatrixXd readout;       // 2H x B
  MatrixXd head_pre;      // head_hidden x B, before ReLU
  MatrixXd head_act;      // head_hidden x B
  Eigen::RowVectorXd logits;
};

void run_direction(const LstmCell& cell, const MatrixXd& input, int steps, int batch, bool reverse,
                   DirectionTape& tape) {
  const int h = cell.hidden();
  const Eigen::Index in = input.rows();
  tape.gates.noalias() = cell.weight.leftCols(in) * input;
  tape.gates.colwise() += cell.bias;
  tape.cells.resize(h, input.cols());
  tape.hidden.resize(h, input.cols());

  MatrixXd h_prev = MatrixXd::Zero(h, batch);
  MatrixXd c_prev = MatrixXd::Zero(h, batch);
  const auto recurrent = cell.weight.rightCols(h);
  for (int step = 0; step < steps; ++step) {
    const int t = reverse ? steps - 1 - step : step;
    auto g = tape.gates.middleCols(static_cast<Eigen::Index>(t) * batch, batch);
    g.noalias() += recurrent * h_prev;
    g.topRows(h) = sigmoid(g.topRows(h).array()).matrix();
    g.middleRows(h, h) = sigmoid(g.middleRows(h, h).array()).matrix();
    g.middleRows(2 * h, h) = g.middleRows(2 * h, h).array().tanh().matrix();
    g.bottomRows(h) = sigmoid(g.bottomRows(h).array()).matrix();

    auto c = tape.cells.middleCols(static_cast<Eigen::Index>(t) * batch, batch);
    auto hid = tape.hidden.middleCols(static_cast<Eigen::Index>(t) * batch, batch);
    c = g.middleRows(h, h).cwiseProduct(c_prev) + g.topRows(h).cwiseProduct(g.middleRows(2 * h, h));
    hid = g.bottomRows(h).cwiseProduct(MatrixXd(c.array().tanh()));
    h_prev = hid;
    c_prev = c;
  }
}

// d_hidden holds dLoss/dh_t arriving from the layer above (or the readout).
// Adds dLoss/dinput to *d_input when it is non-null.
void backprop_direction(const LstmCell& cell, const MatrixXd& input, const DirectionTape& tape,
                        const Eigen::Ref<const MatrixXd>& d_hidden, int steps, int batch,
                        bool reverse, LstmCell& grad, MatrixXd* d_input) {
  const int h = cell.hidden();
  const Eigen::Index in = input.rows();
  const Eigen::Index total = input.cols();
  const auto recurrent = cell.weight.rightCols(h);

  MatrixXd d_gates(4 * h, total);
  MatrixXd prev_hidden = MatrixXd::Zero(h, total);
  MatrixXd dh_next = MatrixXd::Zero(h, batch);
  MatrixXd dc_next = MatrixXd::Zero(h, batch);
  const MatrixXd zeros = MatrixXd::Zero(h, batch);

  for (int step = steps - 1; step >= 0; --step) {
    const int t = reverse ? steps - 1 - step : step;
    const Eigen::Index col = static_cast<Eigen::Index>(t) * batch;
    const bool has_prev = step > 0;
    const Eigen::Index prev_col =
        has_prev ? static_cast<Eigen::Index>(reverse ? t + 1 : t - 1) * batch : 0;

    const auto g = tape.gates.middleCols(col, batch);
    const auto i_gate = g.topRows(h).array();
    const auto f_gate = g.middleRows(h, h).array();
    const auto cand = g.middleRows(2 * h, h).array();
    const auto o_gate = g.bottomRows(h).array();
    const Eigen::ArrayXXd c_prev =
        has_prev ? Eigen::ArrayXXd(tape.cells.middleCols(prev_col, batch).array()) : zeros.array();
    const Eigen::ArrayXXd tanh_c = tape.cells.middleCols(col, batch).array().tanh();

    const Eigen::ArrayXXd dh = d_hidden.middleCols(col, batch).array() + dh_next.array();
    const Eigen::ArrayXXd dc = dc_next.array() + dh * o_gate * (1.0 - tanh_c.square());

    auto dg = d_gates.middleCols(col, batch);
    dg.topRows(h) = (dc * cand * i_gate * (1.0 - i_gate)).matrix();
    dg.middleRows(h, h) = (dc * c_prev * f_gate * (1.0 - f_gate)).matrix();
    dg.middleRows(2 * h, h) = (dc * i_gate * (1.0 - cand.square())).matrix();
    dg.bottomRows(h) = (dh * tanh_c * o_gate * (1.0 - o_gate)).matrix();

    dc_next = (dc * f_gate).matrix();
    dh_next.noalias() = recurrent.transpose() * dg;
    if (has_prev) prev_hidden.middleCols(col, batch) = tape.hidden.middleCols(prev_col, batch);
  }

  grad.weight.leftCols(in).noalias() = d_gates * input.transpose();
  grad.weight.rightCols(h).noalias() = d_gates * prev_hidden.transpose();
  grad.bias = d_gates.rowwise().sum();
  if (d_input) d_input->noalias() += cell.weight.leftCols(in).transpose() * d_gates;
}

ForwardPass run_forward(const LstmParams& params, std::span<const MatrixXd> xs) {
  if (xs.empty()) throw Error(ErrorCode::Contract, "lstm: empty batch");
  const int steps = static_cast<int>(xs.front().rows());
  const int batch = static_cast<int>(xs.size());
  const int h = params.hidden();
  if (steps < 1) throw Error(ErrorCode::Shape, "lstm: sequence has no time steps");
  for (const auto& x : xs) {
    if (x.rows() != steps || x.cols() != params.input_dim()) {
      throw Error(ErrorCode::Shape, "lstm: expected " + std::to_string(steps) + "x" +
                                        std::to_string(params.input_dim()) + " input, got " +
                                        std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    }
  }

  ForwardPass pass;
  MatrixXd input(params.input_dim(), static_cast<Eigen::Index>(steps) * batch);
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch; ++b) {
      input.col(static_cast<Eigen::Index>(t) * batch + b) = xs[static_cast<std::size_t>(b)].row(t).transpose();
    }
  }
  for (const auto& layer : params.layers) {
    LayerTape tape;
    tape.input = std::move(input);
    run_direction(layer.forward, tape.input, steps, batch, false, tape.fwd);
    run_direction(layer.backward, tape.input, steps, batch, true, tape.bwd);
    input.resize(2 * h, tape.input.cols());
    input.topRows(h) = tape.fwd.hidden;
    input.bottomRows(h) = tape.bwd.hidden;
    pass.layers.push_back(std::move(tape));
  }

  const LayerTape& top = pass.layers.back();
  pass.readout.resize(2 * h, batch);
  pass.readout.topRows(h) = top.fwd.hidden.middleCols(static_cast<Eigen::Index>(steps - 1) * batch, batch);
  pass.readout.bottomRows(h) = top.bwd.hidden.middleCols(0, batch);
  pass.head_pre.noalias() = params.head_hidden.weight * pass.readout;
  pass.head_pre.colwise() += params.head_hidden.bias;
  pass.head_act = pass.head_pre.array().max(0.0).matrix();
  pass.logits.noalias() = params.head_out.weight * pass.head_act;
  pass.logits.array() += params.head_out.bias(0);
  return pass;
}

}  // namespace

void LstmConfig::validate() const {
  if (input_dim < 1 || hidden < 1 || layers < 1 || head_hidden < 1) {
    throw Error(ErrorCode::Config, "LSTM dimensions and layer count must be >= 1");
  }
}

LstmParams init_lstm(const LstmConfig& cfg, Rng& rng) {
  cfg.validate();
  LstmParams params;
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  int in = cfg.input_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    BiLstmLayer layer;
    for (LstmCell* cell : {&layer.forward, &layer.backward}) {
      cell->weight.resize(4 * cfg.hidden, in + cfg.hidden);
      cell->bias.resize(4 * cfg.hidden);
      fill_uniform(cell->weight, bound, rng);
      fill_uniform(cell->bias, bound, rng);
      cell->bias.segment(cfg.hidden, cfg.hidden).setConstant(kForgetBiasInit);
    }
    params.layers.push_back(std::move(layer));
    in = 2 * cfg.hidden;
  }
  params.head_hidden = make_dense(cfg.head_hidden, 2 * cfg.hidden, rng);
  params.head_out = make_dense(1, cfg.head_hidden, rng);
  return params;
}

void check_lstm(const LstmParams& params) {
  if (params.layers.empty()) throw Error(ErrorCode::Shape, "LSTM has no layers");
  const int h = params.hidden();
  int in = params.input_dim();
  for (const auto& layer : params.layers) {
    for (const LstmCell* cell : {&layer.forward, &layer.backward}) {
      if (cell->weight.rows() != 4 * h || cell->weight.cols() != in + h || cell->bias.size() != 4 * h) {
        throw Error(ErrorCode::Shape, "LSTM gate blocks do not chain");
      }
    }
    in = 2 * h;
  }
  const auto& hh = params.head_hidden;
  const auto& ho = params.head_out;
  if (hh.weight.cols() != 2 * h || hh.bias.size() != hh.weight.rows() || ho.weight.rows() != 1 ||
      ho.weight.cols() != hh.weight.rows() || ho.bias.size() != 1) {
    throw Error(ErrorCode::Shape, "LSTM head shapes do not chain");
  }
}

Eigen::VectorXd lstm_forward_batch(const LstmParams& params, std::span<const MatrixXd> xs) {
  const ForwardPass pass = run_forward(params, xs);
  Eigen::VectorXd p(pass.logits.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = sigmoid(pass.logits(i));
  return p;
}

double lstm_forward(const LstmParams& params, const MatrixXd& x) {
  return lstm_forward_batch(params, std::span<const MatrixXd>(&x, 1))(0);
}

double lstm_loss_and_grad(const LstmParams& params, std::span<const MatrixXd> xs,
                          std::span<const double> labels, LstmParams& grad) {
  if (labels.size() != xs.size()) throw Error(ErrorCode::Shape, "lstm: label count does not match the batch");
  const ForwardPass pass = run_forward(params, xs);
  const int steps = static_cast<int>(xs.front().rows());
  const int batch = static_cast<int>(xs.size());
  const int h = params.hidden();

  std::vector<double> probs(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) probs[static_cast<std::size_t>(b)] = sigmoid(pass.logits(b));
  const double loss = bce_loss(probs, labels);
  const Eigen::RowVectorXd dlogit = bce_logit_grad(probs, labels).transpose();

  if (grad.layers.size() != params.layers.size()) grad = zeros_like(params);
  grad.head_out.weight.noalias() = dlogit * pass.head_act.transpose();
  grad.head_out.bias(0) = dlogit.sum();
  const MatrixXd d_act = params.head_out.weight.transpose() * dlogit;
  const MatrixXd d_pre = (pass.head_pre.array() > 0.0).select(d_act.array(), 0.0).matrix();
  grad.head_hidden.weight.noalias() = d_pre * pass.readout.transpose();
  grad.head_hidden.bias = d_pre.rowwise().sum();
  const MatrixXd d_readout = params.head_hidden.weight.transpose() * d_pre;

  const Eigen::Index total = static_cast<Eigen::Index>(steps) * batch;
  MatrixXd d_out = MatrixXd::Zero(2 * h, total);
  d_out.topRows(h).middleCols(static_cast<Eigen::Index>(steps - 1) * batch, batch) = d_readout.topRows(h);
  d_out.bottomRows(h).middleCols(0, batch) = d_readout.bottomRows(h);

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const LayerTape& tape = pass.layers[l];
    MatrixXd d_in;
    MatrixXd* d_in_ptr = nullptr;
    if (l > 0) {
      d_in = MatrixXd::Zero(tape.input.rows(), total);
      d_in_ptr = &d_in;
    }
    backprop_direction(params.layers[l].forward, tape.input, tape.fwd, d_out.topRows(h), steps,
                       batch, false, grad.layers[l].forward, d_in_ptr);
    backprop_direction(params.layers[l].backward, tape.input, tape.bwd, d_out.bottomRows(h), steps,
                       batch, true, grad.layers[l].backward, d_in_ptr);
    if (l > 0) d_out = std::move(d_in);
  }
  return loss;
}

}  // namespace ctseq
