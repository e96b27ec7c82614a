#include <gtest/gtest.h>

#include <cmath>

#include "ctseq/lstm.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

namespace ctseq {
namespace {

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// One LSTM step from a zero state, written out per unit.
std::vector<double> single_step(const LstmCell& cell, const std::vector<double>& x) {
  const int h = cell.hidden();
  const int in = cell.input_dim();
  auto pre = [&](int row) {
    double z = cell.bias(row);
    for (int c = 0; c < in; ++c) z += cell.weight(row, c) * x[static_cast<std::size_t>(c)];
    return z;
  };
  std::vector<double> out(static_cast<std::size_t>(h));
  for (int u = 0; u < h; ++u) {
    const double i = sig(pre(u));
    const double g = std::tanh(pre(2 * h + u));
    const double o = sig(pre(3 * h + u));
    const double c = i * g;  // the forget gate multiplies a zero cell
    out[static_cast<std::size_t>(u)] = o * std::tanh(c);
  }
  return out;
}

double head(const LstmParams& p, const std::vector<double>& readout) {
  double z = p.head_out.bias(0);
  for (Eigen::Index r = 0; r < p.head_hidden.weight.rows(); ++r) {
    double a = p.head_hidden.bias(r);
    for (std::size_t c = 0; c < readout.size(); ++c) a += p.head_hidden.weight(r, static_cast<Eigen::Index>(c)) * readout[c];
    z += p.head_out.weight(0, r) * std::max(a, 0.0);
  }
  return sig(z);
}

LstmParams random_lstm(LstmConfig cfg, std::uint64_t seed) {
  Rng rng(seed);
  LstmParams p = init_lstm(cfg, rng);
  fill_uniform(p.head_hidden.bias, 0.5, rng);
  fill_uniform(p.head_out.bias, 0.5, rng);
  return p;
}

TEST(Lstm, ZeroParamsGiveHalf) {
  const LstmParams p = zeros_like(random_lstm({5, 4, 2, 3}, 1));
  EXPECT_EQ(lstm_forward(p, Eigen::MatrixXd::Random(7, 5)), 0.5);
}

TEST(Lstm, SingleStepMatchesHandUnrolledCell) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const LstmParams p = random_lstm({4, 3, 1, 5}, seed);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(1, 4);
    const std::vector<double> xv(x.data(), x.data() + 4);
    std::vector<double> readout = single_step(p.layers[0].forward, xv);
    const auto back = single_step(p.layers[0].backward, xv);
    readout.insert(readout.end(), back.begin(), back.end());
    EXPECT_NEAR(lstm_forward(p, x), head(p, readout), 1e-12);
  }
}

TEST(Lstm, TiedDirectionsAreReversalSymmetric) {
  LstmParams p = random_lstm({4, 3, 2, 5}, 7);
  const int h = p.hidden();
  for (auto& layer : p.layers) layer.backward = layer.forward;
  // Upper layers see [forward; backward] states; equal column blocks make
  // them indifferent to which half is which.
  auto& upper = p.layers[1];
  upper.forward.weight.middleCols(h, h) = upper.forward.weight.leftCols(h);
  upper.backward = upper.forward;
  p.head_hidden.weight.rightCols(h) = p.head_hidden.weight.leftCols(h);

  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(9, 4);
  const Eigen::MatrixXd reversed = x.colwise().reverse();
  EXPECT_NEAR(lstm_forward(p, x), lstm_forward(p, reversed), 1e-12);
  // Untied weights do care about direction.
  const LstmParams untied = random_lstm({4, 3, 2, 5}, 8);
  EXPECT_GT(std::abs(lstm_forward(untied, x) - lstm_forward(untied, reversed)), 1e-9);
}

TEST(Lstm, BatchMatchesSingle) {
  const LstmParams p = random_lstm({3, 4, 2, 3}, 2);
  std::vector<Eigen::MatrixXd> xs;
  for (int b = 0; b < 4; ++b) xs.push_back(Eigen::MatrixXd::Random(6, 3));
  const Eigen::VectorXd batch = lstm_forward_batch(p, xs);
  for (int b = 0; b < 4; ++b) EXPECT_NEAR(batch(b), lstm_forward(p, xs[static_cast<std::size_t>(b)]), 1e-14);
}

TEST(Lstm, GradientMatchesFiniteDifferences) {
  for (int layers : {1, 2}) {
    int checked = 0;
    for (std::uint64_t restart = 0; restart < 20; ++restart) {
      const LstmParams p = random_lstm({3, 4, layers, 4}, 100 + restart);
      std::vector<Eigen::MatrixXd> xs{Eigen::MatrixXd::Random(5, 3), Eigen::MatrixXd::Random(5, 3)};
      const std::vector<double> y{1.0, 0.0};
      LstmParams grad;
      lstm_loss_and_grad(p, xs, y, grad);
      const auto result = oracle::finite_difference_check(p, grad, [&](const LstmParams& q) {
        LstmParams scratch;
        return lstm_loss_and_grad(q, xs, y, scratch);
      });
      EXPECT_LT(result.max_rel_error, 1e-4) << "layers " << layers << " restart " << restart;
      checked += result.checked;
    }
    EXPECT_GT(checked, 20 * 150);
  }
}

TEST(Lstm, ProbabilityStaysInsideUnitInterval) {
  LstmParams p = random_lstm({3, 4, 1, 4}, 5);
  p.head_out.weight *= 1e3;
  const double prob = lstm_forward(p, Eigen::MatrixXd::Random(4, 3));
  EXPECT_GT(prob, 0.0);
  EXPECT_LT(prob, 1.0);
  std::vector<Eigen::MatrixXd> xs{Eigen::MatrixXd::Random(4, 3)};
  LstmParams grad;
  EXPECT_TRUE(std::isfinite(lstm_loss_and_grad(p, xs, std::vector<double>{0.0}, grad)));
}

TEST(Lstm, InitShapesAndForgetBias) {
  Rng rng(0);
  const LstmParams p = init_lstm(LstmConfig{}, rng);
  ASSERT_EQ(p.layers.size(), 4u);
  EXPECT_EQ(p.layers[0].forward.weight.rows(), 4 * 128);
  EXPECT_EQ(p.layers[0].forward.weight.cols(), 224 + 128);
  EXPECT_EQ(p.layers[1].backward.weight.cols(), 256 + 128);
  EXPECT_EQ(p.head_hidden.weight.rows(), 64);
  EXPECT_EQ(p.head_hidden.weight.cols(), 256);
  EXPECT_TRUE((p.layers[2].forward.bias.segment(128, 128).array() == kForgetBiasInit).all());
  EXPECT_NO_THROW(check_lstm(p));
}

TEST(Lstm, Errors) {
  const LstmParams p = random_lstm({3, 4, 1, 4}, 5);
  EXPECT_CTSEQ_ERROR(lstm_forward(p, Eigen::MatrixXd::Random(4, 2)), ErrorCode::Shape);
  EXPECT_CTSEQ_ERROR(lstm_forward(p, Eigen::MatrixXd(0, 3)), ErrorCode::Shape);
  std::vector<Eigen::MatrixXd> ragged{Eigen::MatrixXd::Random(4, 3), Eigen::MatrixXd::Random(5, 3)};
  EXPECT_CTSEQ_ERROR(lstm_forward_batch(p, ragged), ErrorCode::Shape);
  EXPECT_CTSEQ_ERROR((LstmConfig{0, 4, 1, 4}.validate()), ErrorCode::Config);
  LstmParams broken = p;
  broken.head_hidden.weight.resize(4, 3);
  EXPECT_CTSEQ_ERROR(check_lstm(broken), ErrorCode::Shape);
}

}  // namespace
}  // namespace ctseq
