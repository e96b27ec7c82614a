#include "ctseq/embedder.hpp"

#include <algorithm>
#include <numeric>

#include "ctseq/error.hpp"

namespace ctseq {

void EmbedderConfig::validate() const {
  if (input_height < 1 || input_width < 1) throw Error(ErrorCode::Config, "input size must be >= 1");
  if (hidden.empty()) throw Error(ErrorCode::Config, "embedder needs at least one hidden layer");
  for (int width : hidden) {
    if (width < 1) throw Error(ErrorCode::Config, "hidden widths must be >= 1");
  }
  if (embedding_dim < 1) throw Error(ErrorCode::Config, "embedding dim must be >= 1");
  if (hidden.back() != embedding_dim) {
    throw Error(ErrorCode::Config, "last hidden width must equal the embedding dim");
  }
  if (batch_size < 1) throw Error(ErrorCode::Config, "batch size must be >= 1");
  if (epochs < 0) throw Error(ErrorCode::Config, "epochs must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::Config, "threshold must lie in (0,1)");
  adam.validate();
}

MlpParams init_mlp(const EmbedderConfig& cfg, Rng& rng) {
  cfg.validate();
  MlpParams params;
  int in = cfg.input_size();
  for (int width : cfg.hidden) {
    DenseLayer layer{Eigen::MatrixXd(width, in), Eigen::VectorXd::Zero(width)};
    fill_uniform(layer.weight, std::sqrt(6.0 / in), rng);  // He-uniform for ReLU
    params.hidden.push_back(std::move(layer));
    in = width;
  }
  params.head = make_dense(1, in, rng);
  return params;
}

void check_mlp(const MlpParams& params) {
  if (params.hidden.empty()) throw Error(ErrorCode::Shape, "MLP has no hidden layers");
  Eigen::Index in = params.hidden.front().weight.cols();
  for (const auto& layer : params.hidden) {
    if (layer.weight.cols() != in || layer.bias.size() != layer.weight.rows()) {
      throw Error(ErrorCode::Shape, "MLP layer shapes do not chain");
    }
    in = layer.weight.rows();
  }
  if (params.head.weight.rows() != 1 || params.head.weight.cols() != in || params.head.bias.size() != 1) {
    throw Error(ErrorCode::Shape, "MLP head must map the embedding to one logit");
  }
}

Eigen::VectorXd preprocess_for_model(const SliceImage& slice, const EmbedderConfig& cfg) {
  const Eigen::Index in_h = slice.rows();
  const Eigen::Index in_w = slice.cols();
  const int out_h = cfg.input_height;
  const int out_w = cfg.input_width;
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;

  Eigen::VectorXd out(out_h * out_w);
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    const Eigen::Index y0 = static_cast<Eigen::Index>(fy);
    const Eigen::Index y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      const Eigen::Index x0 = static_cast<Eigen::Index>(fx);
      const Eigen::Index x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1 - wx) * slice(y0, x0) + wx * slice(y0, x1);
      const double bottom = (1 - wx) * slice(y1, x0) + wx * slice(y1, x1);
      out(y * out_w + x) = ((1 - wy) * top + wy * bottom) / 255.0;
    }
  }
  return out;
}

Eigen::RowVectorXd mlp_logits(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                              std::vector<Eigen::MatrixXd>* activations) {
  if (inputs.rows() != params.input_size()) {
    throw Error(ErrorCode::Shape, "MLP input has " + std::to_string(inputs.rows()) +
                                      " features, model expects " + std::to_string(params.input_size()));
  }
  Eigen::MatrixXd a = inputs;
  if (activations) {
    activations->clear();
    activations->push_back(a);
  }
  for (const auto& layer : params.hidden) {
    Eigen::MatrixXd z = layer.weight * a;
    z.colwise() += layer.bias;
    a = z.array().max(0.0).matrix();
    if (activations) activations->push_back(a);
  }
  Eigen::RowVectorXd logits = params.head.weight * a;
  logits.array() += params.head.bias(0);
  return logits;
}

MlpOutput mlp_forward(const MlpParams& params, const Eigen::Ref<const Eigen::VectorXd>& x) {
  std::vector<Eigen::MatrixXd> acts;
  const Eigen::RowVectorXd logit = mlp_logits(params, x, &acts);
  return {acts.back().col(0), sigmoid(logit(0))};
}

double mlp_loss_and_grad(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                         std::span<const double> labels, MlpParams& grad) {
  if (static_cast<Eigen::Index>(labels.size()) != inputs.cols()) {
    throw Error(ErrorCode::Shape, "label count does not match the batch");
  }
  std::vector<Eigen::MatrixXd> acts;
  const Eigen::RowVectorXd logits = mlp_logits(params, inputs, &acts);
  std::vector<double> probs(static_cast<std::size_t>(logits.size()));
  for (Eigen::Index i = 0; i < logits.size(); ++i) probs[static_cast<std::size_t>(i)] = sigmoid(logits(i));
  const double loss = bce_loss(probs, labels);
  const Eigen::RowVectorXd dlogit = bce_logit_grad(probs, labels).transpose();

  if (grad.hidden.size() != params.hidden.size()) grad = zeros_like(params);
  grad.head.weight.noalias() = dlogit * acts.back().transpose();
  grad.head.bias(0) = dlogit.sum();
  Eigen::MatrixXd da = params.head.weight.transpose() * dlogit;
  for (std::size_t l = params.hidden.size(); l-- > 0;) {
    const Eigen::MatrixXd dz = (acts[l + 1].array() > 0.0).select(da.array(), 0.0).matrix();
    grad.hidden[l].weight.noalias() = dz * acts[l].transpose();
    grad.hidden[l].bias = dz.rowwise().sum();
    if (l > 0) da.noalias() = params.hidden[l].weight.transpose() * dz;
  }
  return loss;
}

TrainedEmbedder train_2d(std::span<const CtVolume> volumes, std::span<const SliceRange> ranges,
                         const EmbedderConfig& cfg) {
  cfg.validate();
  if (volumes.size() != ranges.size()) {
    throw Error(ErrorCode::Contract, "train_2d: one slice range per volume required");
  }
  std::vector<std::pair<std::size_t, int>> pool;
  for (std::size_t v = 0; v < volumes.size(); ++v) {
    if (!volumes[v].label) {
      throw Error(ErrorCode::Contract, "train_2d: volume " + volumes[v].id + " has no label");
    }
    const SliceRange& r = ranges[v];
    if (r.s < 0 || r.e < r.s || r.e >= volumes[v].size()) {
      throw Error(ErrorCode::Contract, "train_2d: range outside volume " + volumes[v].id);
    }
    for (int i = r.s; i <= r.e; ++i) pool.emplace_back(v, i);
  }
  if (pool.empty()) throw Error(ErrorCode::Contract, "train_2d: empty training set");

  Eigen::MatrixXd inputs(cfg.input_size(), static_cast<Eigen::Index>(pool.size()));
  std::vector<double> labels(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& [v, s] = pool[i];
    inputs.col(static_cast<Eigen::Index>(i)) =
        preprocess_for_model(volumes[v].slices[static_cast<std::size_t>(s)], cfg);
    labels[i] = *volumes[v].label;
  }

  Rng rng(cfg.seed);
  TrainedEmbedder result{init_mlp(cfg, rng), {}};
  MlpParams grad = zeros_like(result.params);
  AdamState state = adam_init(result.params);

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  Eigen::MatrixXd x(inputs.rows(), cfg.batch_size);
  std::vector<double> y;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      x.resize(inputs.rows(), static_cast<Eigen::Index>(count));
      y.resize(count);
      for (std::size_t j = 0; j < count; ++j) {
        x.col(static_cast<Eigen::Index>(j)) = inputs.col(static_cast<Eigen::Index>(order[start + j]));
        y[j] = labels[order[start + j]];
      }
      epoch_loss += mlp_loss_and_grad(result.params, x, y, grad) * static_cast<double>(count);
      adam_step(result.params, grad, state, cfg.adam);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

MeanKResult predict_volume_mean_k(const MlpParams& params, const CtVolume& volume,
                                  const SliceRange& range, int k, int trials, Rng& rng,
                                  const EmbedderConfig& cfg) {
  if (range.s < 0 || range.e < range.s || range.e >= volume.size()) {
    throw Error(ErrorCode::Contract, "predict_volume_mean_k: empty or out-of-volume range");
  }
  if (k < 1 || trials < 1) throw Error(ErrorCode::Contract, "predict_volume_mean_k: k and trials must be >= 1");
  const int len = range.length();
  Eigen::MatrixXd inputs(cfg.input_size(), len);
  for (int i = 0; i < len; ++i) {
    inputs.col(i) = preprocess_for_model(volume.slices[static_cast<std::size_t>(range.s + i)], cfg);
  }
  const Eigen::RowVectorXd logits = mlp_logits(params, inputs);
  std::vector<double> probs(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) probs[static_cast<std::size_t>(i)] = sigmoid(logits(i));

  std::vector<int> all(static_cast<std::size_t>(len));
  std::iota(all.begin(), all.end(), 0);
  std::vector<int> picked(static_cast<std::size_t>(k));
  std::uniform_int_distribution<int> any(0, len - 1);
  double total = 0.0;
  for (int t = 0; t < trials; ++t) {
    if (len >= k) {
      std::sample(all.begin(), all.end(), picked.begin(), k, rng);
    } else {
      for (int& idx : picked) idx = any(rng);
    }
    double trial = 0.0;
    for (int idx : picked) trial += probs[static_cast<std::size_t>(idx)];
    total += trial / k;
  }
  MeanKResult result;
  result.probability = total / trials;
  result.decision = result.probability >= cfg.threshold ? 1 : 0;
  return result;
}

EmbeddingSequence embed_volume(const MlpParams& params, const CtVolume& volume,
                               const EmbedderConfig& cfg) {
  Eigen::MatrixXd inputs(cfg.input_size(), volume.size());
  for (int i = 0; i < volume.size(); ++i) {
    inputs.col(i) = preprocess_for_model(volume.slices[static_cast<std::size_t>(i)], cfg);
  }
  std::vector<Eigen::MatrixXd> acts;
  mlp_logits(params, inputs, &acts);
  return {volume.id, acts.back().transpose()};
}

}  // namespace ctseq
