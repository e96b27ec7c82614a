#include "ctseq/sampling.hpp"

#include <algorithm>
#include <numeric>

#include "ctseq/error.hpp"

namespace ctseq {

void SampleSpec::validate() const {
  if (length < 1) throw Error(ErrorCode::Config, "sample length must be >= 1");
  if (!(slice_dropout >= 0.0 && slice_dropout < 1.0)) {
    throw Error(ErrorCode::Config, "slice dropout must lie in [0,1)");
  }
}

std::vector<int> sample_sorted_indices(int n, int k, Rng& rng) {
  if (n < 1) throw Error(ErrorCode::Contract, "cannot sample from an empty sequence");
  if (k < 1) throw Error(ErrorCode::Contract, "sample length must be >= 1");
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  if (n >= k) {
    std::vector<int> out(static_cast<std::size_t>(k));
    std::sample(all.begin(), all.end(), out.begin(), k, rng);
    std::sort(out.begin(), out.end());
    return out;
  }
  std::uniform_int_distribution<int> any(0, n - 1);
  for (int i = n; i < k; ++i) all.push_back(any(rng));
  std::sort(all.begin(), all.end());
  return all;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& values, std::span<const int> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = values.row(rows[i]);
  }
  return out;
}

Eigen::MatrixXd sample_for_lstm(const EmbeddingSequence& seq, int k, Rng& rng) {
  return gather_rows(seq.values, sample_sorted_indices(seq.size(), k, rng));
}

Eigen::MatrixXd sample_for_transformer(const EmbeddingSequence& seq, int k, Rng& rng) {
  return gather_rows(seq.values, sample_sorted_indices(seq.size(), k, rng));
}

Eigen::MatrixXd assemble_embedding_map(const Eigen::MatrixXd& sampled, bool strict) {
  if (strict && (sampled.rows() != kEmbeddingMapSize || sampled.cols() != kEmbeddingMapSize)) {
    throw Error(ErrorCode::Shape, "embedding map must be 224 slices x 224 dims, got " +
                                      std::to_string(sampled.rows()) + "x" +
                                      std::to_string(sampled.cols()));
  }
  return sampled;
}

}  // namespace ctseq
