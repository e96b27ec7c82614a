#include "ctseq/temporal.hpp"

#include <algorithm>
#include <numeric>

#include "ctseq/error.hpp"

namespace ctseq {

namespace {

template <class Params, class LossGrad>
TrainResult<Params> train_loop(Params params, std::span<const EmbeddingSequence> seqs,
                               std::span<const int> labels, const TemporalTrainConfig& cfg,
                               LossGrad&& loss_and_grad) {
  cfg.validate();
  if (seqs.empty()) throw Error(ErrorCode::Contract, "temporal training: empty dataset");
  if (seqs.size() != labels.size()) throw Error(ErrorCode::Contract, "temporal training: one label per sequence required");
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(ErrorCode::Contract, "temporal training: labels must be 0 or 1");
  }

  Rng rng(cfg.seed);
  std::bernoulli_distribution drop(cfg.sample.slice_dropout);
  TrainResult<Params> result{std::move(params), {}};
  Params grad = zeros_like(result.params);
  AdamState state = adam_init(result.params);

  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<Eigen::MatrixXd> xs;
  std::vector<double> ys;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      xs.clear();
      ys.clear();
      for (std::size_t j = 0; j < count; ++j) {
        const std::size_t idx = order[start + j];
        Eigen::MatrixXd x = gather_rows(seqs[idx].values,
                                        sample_sorted_indices(seqs[idx].size(), cfg.sample.length, rng));
        if (cfg.sample.slice_dropout > 0.0) {
          for (Eigen::Index r = 0; r < x.rows(); ++r) {
            if (drop(rng)) x.row(r).setZero();
          }
        }
        xs.push_back(std::move(x));
        ys.push_back(labels[idx]);
      }
      epoch_loss += loss_and_grad(result.params, xs, ys, grad) * static_cast<double>(count);
      adam_step(result.params, grad, state, cfg.adam);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

}  // namespace

void TemporalTrainConfig::validate() const {
  if (epochs < 0) throw Error(ErrorCode::Config, "epochs must be >= 0");
  if (batch_size < 1) throw Error(ErrorCode::Config, "batch size must be >= 1");
  adam.validate();
  sample.validate();
}

TrainResult<LstmParams> lstm_train(LstmParams params, std::span<const EmbeddingSequence> seqs,
                                   std::span<const int> labels, const TemporalTrainConfig& cfg) {
  check_lstm(params);
  return train_loop(std::move(params), seqs, labels, cfg,
                    [](const LstmParams& p, const std::vector<Eigen::MatrixXd>& xs,
                       const std::vector<double>& ys, LstmParams& g) {
                      return lstm_loss_and_grad(p, xs, ys, g);
                    });
}

TrainResult<AttnParams> attn_train(AttnParams params, std::span<const EmbeddingSequence> seqs,
                                   std::span<const int> labels, const TemporalTrainConfig& cfg) {
  check_attn(params);
  return train_loop(std::move(params), seqs, labels, cfg,
                    [](const AttnParams& p, const std::vector<Eigen::MatrixXd>& xs,
                       const std::vector<double>& ys, AttnParams& g) {
                      return attn_loss_and_grad(p, xs, ys, g);
                    });
}

double lstm_predict(const LstmParams& params, const EmbeddingSequence& seq, int k, int trials, Rng& rng) {
  if (trials < 1) throw Error(ErrorCode::Contract, "trials must be >= 1");
  std::vector<Eigen::MatrixXd> xs;
  for (int t = 0; t < trials; ++t) xs.push_back(sample_for_lstm(seq, k, rng));
  return lstm_forward_batch(params, xs).mean();
}

double attn_predict(const AttnParams& params, const EmbeddingSequence& seq, int k, int trials, Rng& rng) {
  if (trials < 1) throw Error(ErrorCode::Contract, "trials must be >= 1");
  double total = 0.0;
  for (int t = 0; t < trials; ++t) total += attn_forward(params, sample_for_transformer(seq, k, rng));
  return total / trials;
}

}  // namespace ctseq
