#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctseq/attention.hpp"
#include "ctseq/embedding_io.hpp"
#include "ctseq/lstm.hpp"
#include "ctseq/nn.hpp"
#include "ctseq/sampling.hpp"

namespace ctseq {

struct TemporalTrainConfig {
  int epochs = 10;
  int batch_size = 8;
  AdamConfig adam{};
  SampleSpec sample{};
  std::uint64_t seed = 0;

  void validate() const;
};

inline TemporalTrainConfig default_lstm_train_config() {
  TemporalTrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  cfg.sample = {kLstmSampleLength, 0.2};
  return cfg;
}

inline TemporalTrainConfig default_attn_train_config() {
  TemporalTrainConfig cfg;
  cfg.sample = {kTransformerSampleLength, 0.0};
  return cfg;
}

template <class Params>
struct TrainResult {
  Params params;
  std::vector<double> loss_history;  // mean loss per epoch
};

/// Every epoch each sequence is freshly resampled to cfg.sample.length sorted
/// slices; with slice dropout, each sampled row is zeroed independently.
TrainResult<LstmParams> lstm_train(LstmParams params, std::span<const EmbeddingSequence> seqs,
                                   std::span<const int> labels, const TemporalTrainConfig& cfg);

TrainResult<AttnParams> attn_train(AttnParams params, std::span<const EmbeddingSequence> seqs,
                                   std::span<const int> labels, const TemporalTrainConfig& cfg);

/// Mean probability over `trials` independent samplings of the sequence.
double lstm_predict(const LstmParams& params, const EmbeddingSequence& seq, int k, int trials, Rng& rng);
double attn_predict(const AttnParams& params, const EmbeddingSequence& seq, int k, int trials, Rng& rng);

}  // namespace ctseq
