#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ctseq/embedding_io.hpp"
#include "ctseq/nn.hpp"
#include "ctseq/slice_select.hpp"
#include "ctseq/volume_io.hpp"

namespace ctseq {

struct EmbedderConfig {
  int input_height = 64;
  int input_width = 64;
  std::vector<int> hidden{256, 224};  // the last width is the embedding size
  int embedding_dim = 224;
  AdamConfig adam{};
  int batch_size = 16;
  int epochs = 10;
  std::uint64_t seed = 0;
  double threshold = 0.5;

  int input_size() const { return input_height * input_width; }
  void validate() const;
};

// Per-slice classifier: ReLU hidden layers, the last of which is the
// embedding, followed by a sigmoid head.
struct MlpParams {
  std::vector<DenseLayer> hidden;
  DenseLayer head;  // 1 x embedding_dim

  int input_size() const { return static_cast<int>(hidden.front().weight.cols()); }
  int embedding_dim() const { return static_cast<int>(head.weight.cols()); }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    for (auto& layer : self.hidden) DenseLayer::visit(layer, f);
    DenseLayer::visit(self.head, f);
  }
};

MlpParams init_mlp(const EmbedderConfig& cfg, Rng& rng);
void check_mlp(const MlpParams& params);

/// Bilinear resample (pixel-center aligned) to the model input size, scaled to
/// [0,1], flattened row-major.
Eigen::VectorXd preprocess_for_model(const SliceImage& slice, const EmbedderConfig& cfg);

struct MlpOutput {
  Eigen::VectorXd embedding;
  double probability = 0.5;
};

MlpOutput mlp_forward(const MlpParams& params, const Eigen::Ref<const Eigen::VectorXd>& x);

// Column-per-sample batch evaluation. `activations`, when given, receives the
// input followed by every hidden layer's output.
Eigen::RowVectorXd mlp_logits(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                              std::vector<Eigen::MatrixXd>* activations = nullptr);

/// Mean BCE over the batch; writes d(loss)/d(params) into `grad` (resized as needed).
double mlp_loss_and_grad(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                         std::span<const double> labels, MlpParams& grad);

struct TrainedEmbedder {
  MlpParams params;
  std::vector<double> loss_history;  // mean loss per epoch
};

/// Trains on the slices inside each volume's range; every slice inherits its
/// volume label. Each epoch visits the pooled slices once in a seeded random
/// order, in batches of cfg.batch_size.
TrainedEmbedder train_2d(std::span<const CtVolume> volumes, std::span<const SliceRange> ranges,
                         const EmbedderConfig& cfg);

struct MeanKResult {
  double probability = 0.0;
  int decision = 0;
};

/// Each trial draws `k` slices from the range (without replacement when the
/// range holds at least k slices) and averages their probabilities; the
/// result is the mean over `trials` trials.
MeanKResult predict_volume_mean_k(const MlpParams& params, const CtVolume& volume,
                                  const SliceRange& range, int k, int trials, Rng& rng,
                                  const EmbedderConfig& cfg);

/// Embeddings for every slice of the volume, in scan order.
EmbeddingSequence embed_volume(const MlpParams& params, const CtVolume& volume,
                               const EmbedderConfig& cfg);

}  // namespace ctseq
