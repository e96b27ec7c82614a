#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ctseq/embedder.hpp"
#include "ctseq/lung_seg.hpp"
#include "ctseq/phantom.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

namespace ctseq {
namespace {

EmbedderConfig tiny_config(int in_side, std::vector<int> hidden) {
  EmbedderConfig cfg;
  cfg.input_height = in_side;
  cfg.input_width = in_side;
  cfg.embedding_dim = hidden.back();
  cfg.hidden = std::move(hidden);
  return cfg;
}

// Straight-line forward pass over plain loops.
double scalar_forward(const MlpParams& p, const Eigen::VectorXd& x) {
  std::vector<double> a(x.data(), x.data() + x.size());
  for (const auto& layer : p.hidden) {
    std::vector<double> next(static_cast<std::size_t>(layer.weight.rows()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      double z = layer.bias(r);
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) z += layer.weight(r, c) * a[static_cast<std::size_t>(c)];
      next[static_cast<std::size_t>(r)] = z > 0 ? z : 0;
    }
    a = std::move(next);
  }
  double z = p.head.bias(0);
  for (std::size_t c = 0; c < a.size(); ++c) z += p.head.weight(0, static_cast<Eigen::Index>(c)) * a[c];
  return 1.0 / (1.0 + std::exp(-z));
}

std::vector<CtVolume> phantom_set(int count, int n_slices, std::vector<SliceRange>& ranges) {
  std::vector<CtVolume> out;
  ranges.clear();
  for (int i = 0; i < count; ++i) {
    PhantomSpec spec;
    spec.n_slices = n_slices;
    spec.label = i % 2;
    spec.seed = static_cast<std::uint64_t>(100 + i);
    out.push_back(generate_phantom(spec).volume);
    const auto profile = slice_area_profile(out.back(), SegConfig{});
    ranges.push_back(select_range(profile, default_budget(n_slices)));
  }
  return out;
}

MlpParams constant_model(const EmbedderConfig& cfg, double p) {
  Rng rng(0);
  MlpParams params = zeros_like(init_mlp(cfg, rng));
  params.head.bias(0) = std::log(p / (1 - p));
  return params;
}

TEST(Preprocess, ConstantSlice) {
  const EmbedderConfig cfg = tiny_config(8, {4});
  const Eigen::VectorXd v = preprocess_for_model(SliceImage::Constant(37, 23, 128), cfg);
  ASSERT_EQ(v.size(), 64);
  for (Eigen::Index i = 0; i < v.size(); ++i) EXPECT_NEAR(v(i), 128.0 / 255.0, 1e-15);
}

TEST(Preprocess, SameSizeIsPureRescale) {
  Rng rng(4);
  const SliceImage img = testing::random_slice(8, 8, rng);
  const Eigen::VectorXd v = preprocess_for_model(img, tiny_config(8, {4}));
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) EXPECT_DOUBLE_EQ(v(y * 8 + x), img(y, x) / 255.0);
  }
}

TEST(Preprocess, CheckerboardToOnePixel) {
  SliceImage img(2, 2);
  img << 0, 255, 255, 0;
  const Eigen::VectorXd v = preprocess_for_model(img, tiny_config(1, {4}));
  ASSERT_EQ(v.size(), 1);
  EXPECT_NEAR(v(0), 0.5, 1.0 / 255.0);
}

TEST(Forward, ZeroParamsGiveHalf) {
  const EmbedderConfig cfg = tiny_config(4, {6, 3});
  const MlpParams params = constant_model(cfg, 0.5);
  Rng rng(1);
  const Eigen::VectorXd x = Eigen::VectorXd::Random(16);
  const MlpOutput out = mlp_forward(params, x);
  EXPECT_EQ(out.probability, 0.5);
  EXPECT_EQ(out.embedding.size(), 3);
}

TEST(Forward, MatchesScalarOracle) {
  const EmbedderConfig cfg = tiny_config(3, {7, 5});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    MlpParams params = init_mlp(cfg, rng);
    for (auto& layer : params.hidden) fill_uniform(layer.bias, 0.3, rng);
    const Eigen::VectorXd x = (Eigen::VectorXd::Random(9).array() + 1.0) / 2.0;
    EXPECT_NEAR(mlp_forward(params, x).probability, scalar_forward(params, x), 1e-12);
  }
}

TEST(Forward, HeadScalingSaturatesMonotonically) {
  const EmbedderConfig cfg = tiny_config(3, {6, 4});
  Rng rng(9);
  MlpParams params = init_mlp(cfg, rng);
  for (auto& layer : params.hidden) layer.bias.setConstant(0.2);  // keep the embedding nonzero
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(9, 0.5);
  const double start = mlp_forward(params, x).probability;
  const bool up = start > 0.5;
  double prev = start;
  for (double scale : {2.0, 4.0, 16.0, 256.0}) {
    MlpParams scaled = params;
    scaled.head.weight *= scale;
    scaled.head.bias *= scale;
    const double p = mlp_forward(scaled, x).probability;
    if (up) EXPECT_GT(p, prev); else EXPECT_LT(p, prev);
    prev = p;
  }
  EXPECT_NEAR(prev, up ? 1.0 : 0.0, 1e-6);
}

TEST(Forward, InputSizeMismatch) {
  const EmbedderConfig cfg = tiny_config(3, {4});
  Rng rng(0);
  const MlpParams params = init_mlp(cfg, rng);
  EXPECT_CTSEQ_ERROR(mlp_forward(params, Eigen::VectorXd::Zero(8)), ErrorCode::Shape);
}

TEST(Gradient, MatchesFiniteDifferences) {
  const EmbedderConfig cfg = tiny_config(3, {10, 5});
  int checked = 0;
  for (std::uint64_t restart = 0; restart < 20; ++restart) {
    Rng rng(restart);
    MlpParams params = init_mlp(cfg, rng);
    for (auto& layer : params.hidden) fill_uniform(layer.bias, 0.2, rng);
    ASSERT_LE(parameter_count(params), 2000);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(9, 6);
    const std::vector<double> y{0, 1, 1, 0, 1, 0};
    MlpParams grad;
    mlp_loss_and_grad(params, x, y, grad);
    const auto result = oracle::finite_difference_check(params, grad, [&](const MlpParams& p) {
      MlpParams scratch;
      return mlp_loss_and_grad(p, x, y, scratch);
    });
    EXPECT_LT(result.max_rel_error, 1e-4) << "restart " << restart;
    checked += result.checked;
  }
  EXPECT_GT(checked, 20 * 100);
}

TEST(Train, LossDecreasesAndIsDeterministic) {
  std::vector<SliceRange> ranges;
  const auto volumes = phantom_set(8, 24, ranges);
  EmbedderConfig cfg = tiny_config(16, {32, 16});
  cfg.epochs = 5;
  cfg.seed = 3;
  const TrainedEmbedder a = train_2d(volumes, ranges, cfg);
  ASSERT_EQ(a.loss_history.size(), 5u);
  for (std::size_t i = 1; i < a.loss_history.size(); ++i) EXPECT_LT(a.loss_history[i], a.loss_history[i - 1]);

  const TrainedEmbedder b = train_2d(volumes, ranges, cfg);
  EXPECT_EQ(a.loss_history, b.loss_history);
  const auto pa = param_blocks(a.params);
  const auto pb = param_blocks(b.params);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i], pb[i]);
}

TEST(Train, ZeroLearningRateLeavesInitialParams) {
  std::vector<SliceRange> ranges;
  const auto volumes = phantom_set(2, 24, ranges);
  EmbedderConfig cfg = tiny_config(8, {6, 4});
  cfg.epochs = 3;
  cfg.seed = 12;
  cfg.adam.learning_rate = 0.0;
  cfg.adam.weight_decay = 0.0;
  const TrainedEmbedder trained = train_2d(volumes, ranges, cfg);
  Rng rng(cfg.seed);
  const MlpParams initial = init_mlp(cfg, rng);
  const auto got = param_blocks(trained.params);
  const auto want = param_blocks(initial);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], want[i]);
}

TEST(Train, Errors) {
  std::vector<SliceRange> ranges;
  auto volumes = phantom_set(2, 24, ranges);
  const EmbedderConfig cfg = tiny_config(8, {4});
  EXPECT_CTSEQ_ERROR(train_2d(std::span<const CtVolume>{}, std::span<const SliceRange>{}, cfg),
                     ErrorCode::Contract);
  volumes[0].label.reset();
  EXPECT_CTSEQ_ERROR(train_2d(volumes, ranges, cfg), ErrorCode::Contract);
}

TEST(MeanK, ConstantModel) {
  const EmbedderConfig cfg = tiny_config(8, {4});
  const MlpParams params = constant_model(cfg, 0.7);
  PhantomSpec spec;
  spec.n_slices = 24;
  const CtVolume vol = generate_phantom(spec).volume;
  Rng rng(1);
  for (int k : {1, 16, 30}) {
    for (int trials : {1, 10}) {
      const MeanKResult r = predict_volume_mean_k(params, vol, {3, 15, 0}, k, trials, rng, cfg);
      EXPECT_NEAR(r.probability, 0.7, 1e-12);
      EXPECT_EQ(r.decision, 1);
    }
  }
}

TEST(MeanK, ShortRangeSamplesWithReplacement) {
  const EmbedderConfig cfg = tiny_config(8, {4});
  Rng init(5);
  const MlpParams params = init_mlp(cfg, init);
  PhantomSpec spec;
  spec.n_slices = 24;
  const CtVolume vol = generate_phantom(spec).volume;
  Rng rng(2);
  const MeanKResult r = predict_volume_mean_k(params, vol, {10, 13, 0}, 16, 3, rng, cfg);
  EXPECT_GT(r.probability, 0.0);
  EXPECT_LT(r.probability, 1.0);
}

TEST(MeanK, MoreTrialsReduceSpread) {
  const EmbedderConfig cfg = tiny_config(8, {16, 8});
  Rng init(7);
  MlpParams params = init_mlp(cfg, init);
  params.head.weight *= 20.0;  // spread the per-slice probabilities
  PhantomSpec spec;
  spec.n_slices = 40;
  spec.label = 1;
  const CtVolume vol = generate_phantom(spec).volume;
  auto spread = [&](int trials) {
    Rng rng(99);
    std::vector<double> ps;
    for (int rep = 0; rep < 30; ++rep) {
      ps.push_back(predict_volume_mean_k(params, vol, {0, 39, 0}, 16, trials, rng, cfg).probability);
    }
    const double mean = std::accumulate(ps.begin(), ps.end(), 0.0) / ps.size();
    double ss = 0;
    for (double p : ps) ss += (p - mean) * (p - mean);
    return std::sqrt(ss / (ps.size() - 1));
  };
  const double one = spread(1);
  EXPECT_GT(one, 0.0);
  EXPECT_LE(spread(50), one);
}

TEST(MeanK, DeterministicPerSeed) {
  const EmbedderConfig cfg = tiny_config(8, {8, 4});
  Rng init(3);
  const MlpParams params = init_mlp(cfg, init);
  PhantomSpec spec;
  spec.n_slices = 30;
  const CtVolume vol = generate_phantom(spec).volume;
  Rng a(42), b(42);
  EXPECT_EQ(predict_volume_mean_k(params, vol, {2, 25, 0}, 16, 10, a, cfg).probability,
            predict_volume_mean_k(params, vol, {2, 25, 0}, 16, 10, b, cfg).probability);
}

TEST(MeanK, PermutationInsideRangeWhenSamplingIsIndexFree) {
  // With k equal to the range length every trial takes each slice once.
  const EmbedderConfig cfg = tiny_config(8, {8, 4});
  Rng init(3);
  const MlpParams params = init_mlp(cfg, init);
  PhantomSpec spec;
  spec.n_slices = 30;
  spec.label = 1;
  CtVolume vol = generate_phantom(spec).volume;
  const SliceRange range{5, 20, 0};
  Rng a(8);
  const double before = predict_volume_mean_k(params, vol, range, range.length(), 4, a, cfg).probability;
  std::mt19937_64 shuffler(1);
  std::shuffle(vol.slices.begin() + range.s, vol.slices.begin() + range.e + 1, shuffler);
  Rng b(8);
  EXPECT_NEAR(predict_volume_mean_k(params, vol, range, range.length(), 4, b, cfg).probability, before, 1e-12);
}

TEST(MeanK, Errors) {
  const EmbedderConfig cfg = tiny_config(8, {4});
  Rng rng(0);
  const MlpParams params = init_mlp(cfg, rng);
  PhantomSpec spec;
  spec.n_slices = 24;
  const CtVolume vol = generate_phantom(spec).volume;
  EXPECT_CTSEQ_ERROR(predict_volume_mean_k(params, vol, {5, 4, 0}, 16, 1, rng, cfg), ErrorCode::Contract);
  EXPECT_CTSEQ_ERROR(predict_volume_mean_k(params, vol, {0, 30, 0}, 16, 1, rng, cfg), ErrorCode::Contract);
  EXPECT_CTSEQ_ERROR(predict_volume_mean_k(params, vol, {0, 3, 0}, 16, 0, rng, cfg), ErrorCode::Contract);
}

TEST(Embed, ShapeAndDuplicateSlices) {
  const EmbedderConfig cfg = tiny_config(8, {12, 6});
  Rng rng(2);
  const MlpParams params = init_mlp(cfg, rng);
  PhantomSpec spec;
  spec.n_slices = 24;
  CtVolume vol = generate_phantom(spec).volume;
  vol.slices.resize(10);
  vol.slices[7] = vol.slices[2];
  const EmbeddingSequence seq = embed_volume(params, vol, cfg);
  EXPECT_EQ(seq.volume_id, vol.id);
  EXPECT_EQ(seq.size(), 10);
  EXPECT_EQ(seq.dim(), 6);
  EXPECT_EQ(seq.values.row(7), seq.values.row(2));
  EXPECT_TRUE(seq.values.allFinite());
  const Eigen::VectorXd single = mlp_forward(params, preprocess_for_model(vol.slices[4], cfg)).embedding;
  EXPECT_LT((seq.values.row(4).transpose() - single).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Embed, DefaultEmbeddingIs224) {
  EmbedderConfig cfg;
  Rng rng(0);
  const MlpParams params = init_mlp(cfg, rng);
  EXPECT_EQ(params.embedding_dim(), 224);
  EXPECT_EQ(params.input_size(), 64 * 64);
}

TEST(EmbedderConfig, Validation) {
  EmbedderConfig cfg;
  cfg.hidden = {256, 100};
  EXPECT_CTSEQ_ERROR(cfg.validate(), ErrorCode::Config);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_CTSEQ_ERROR(cfg.validate(), ErrorCode::Config);
  cfg = {};
  cfg.adam.learning_rate = -1;
  EXPECT_CTSEQ_ERROR(cfg.validate(), ErrorCode::Config);
}

}  // namespace
}  // namespace ctseq
