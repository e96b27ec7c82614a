#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "ctseq/embedding_io.hpp"
#include "ctseq/nn.hpp"

namespace ctseq {

inline constexpr int kLstmSampleLength = 120;
inline constexpr int kTransformerSampleLength = 224;
inline constexpr int kEmbeddingMapSize = 224;

struct SampleSpec {
  int length = kLstmSampleLength;
  double slice_dropout = 0.0;  // probability of zeroing a sampled row (training only)

  void validate() const;
};

/// k indices from [0, n), ascending. n >= k: k distinct indices drawn without
/// replacement. n < k: every index once plus k - n draws with replacement.
std::vector<int> sample_sorted_indices(int n, int k, Rng& rng);

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& values, std::span<const int> rows);

Eigen::MatrixXd sample_for_lstm(const EmbeddingSequence& seq, int k, Rng& rng);
Eigen::MatrixXd sample_for_transformer(const EmbeddingSequence& seq, int k, Rng& rng);

/// Square slice-by-dimension map: row i holds the embedding of sampled slice i.
/// Strict mode insists on 224 slices of 224-dim embeddings.
Eigen::MatrixXd assemble_embedding_map(const Eigen::MatrixXd& sampled, bool strict = true);

}  // namespace ctseq
