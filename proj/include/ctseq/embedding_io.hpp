#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>

namespace ctseq {

// One row per slice in scan order, one column per embedding dimension.
struct EmbeddingSequence {
  std::string volume_id;
  Eigen::MatrixXd values;

  int size() const { return static_cast<int>(values.rows()); }
  int dim() const { return static_cast<int>(values.cols()); }
};

// CSV with header "slice_index,e0,...,e{d-1}" and rows sorted by slice index.
// Values are written with 17 significant digits, so a round trip is exact.
std::string encode_embeddings_csv(const EmbeddingSequence& seq);
EmbeddingSequence decode_embeddings_csv(const std::string& text, const std::string& volume_id);

void export_embeddings(const EmbeddingSequence& seq, const std::filesystem::path& file);
/// The volume id is taken from the file name with any ".emb.csv"/".csv" suffix removed.
EmbeddingSequence import_embeddings(const std::filesystem::path& file);

}  // namespace ctseq
