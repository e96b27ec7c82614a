#include "ctseq/model_io.hpp"

#include <cstring>

#include "ctseq/error.hpp"
#include "ctseq/volume_io.hpp"

namespace ctseq {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void need(std::size_t n) const {
    if (remaining() < n) throw Error(ErrorCode::Format, source_ + ": truncated model file");
  }

 private:
  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

DenseLayer column_record(const Eigen::VectorXd& values) {
  return {Eigen::MatrixXd(values), Eigen::VectorXd::Zero(values.size())};
}

ModelContainer read_model(const std::filesystem::path& file, ModelKind expected) {
  ModelContainer c = decode_container(read_file(file), file.string());
  if (c.kind != expected) {
    throw Error(ErrorCode::Format, file.string() + ": model kind " +
                                       std::to_string(static_cast<int>(c.kind)) + " does not match the expected kind " +
                                       std::to_string(static_cast<int>(expected)));
  }
  return c;
}

[[noreturn]] void layout_error(const std::filesystem::path& file, const char* what) {
  throw Error(ErrorCode::Format, file.string() + ": unexpected layer layout for " + what);
}

}  // namespace

std::string encode_container(const ModelContainer& container) {
  std::string out = "CTSK";
  if (container.kind == ModelKind::Embedder) {
    put_u32(out, kUntaggedVersion);
  } else {
    put_u32(out, kTaggedVersion);
    out.push_back(static_cast<char>(container.kind));
  }
  put_u32(out, static_cast<std::uint32_t>(container.layers.size()));
  for (const auto& layer : container.layers) {
    if (layer.bias.size() != layer.weight.rows()) {
      throw Error(ErrorCode::Shape, "model record bias length must equal its row count");
    }
    put_u32(out, static_cast<std::uint32_t>(layer.weight.rows()));
    put_u32(out, static_cast<std::uint32_t>(layer.weight.cols()));
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) put_f64(out, layer.weight(i, j));
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) put_f64(out, layer.bias(i));
  }
  return out;
}

ModelContainer decode_container(const std::string& bytes, const std::string& source) {
  if (bytes.size() < 8 || bytes.compare(0, 4, "CTSK") != 0) {
    throw Error(ErrorCode::Format, source + ": bad magic, not a CTSK model file");
  }
  Reader in(bytes, source);
  for (int i = 0; i < 4; ++i) in.u8();
  const std::uint32_t version = in.u32();
  ModelContainer c;
  if (version == kTaggedVersion) {
    const std::uint8_t kind = in.u8();
    if (kind != static_cast<std::uint8_t>(ModelKind::Lstm) && kind != static_cast<std::uint8_t>(ModelKind::Attn)) {
      throw Error(ErrorCode::Format, source + ": unknown model kind tag " + std::to_string(kind));
    }
    c.kind = static_cast<ModelKind>(kind);
  } else if (version != kUntaggedVersion) {
    throw Error(ErrorCode::Format, source + ": unsupported CTSK version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  for (std::uint32_t l = 0; l < count; ++l) {
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    in.need((static_cast<std::size_t>(rows) * cols + rows) * 8);
    DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) layer.weight(i, j) = in.f64();
    }
    for (std::uint32_t i = 0; i < rows; ++i) layer.bias(i) = in.f64();
    c.layers.push_back(std::move(layer));
  }
  if (in.remaining() != 0) throw Error(ErrorCode::Format, source + ": trailing bytes after the last layer");
  return c;
}

void save_mlp(const MlpParams& params, const std::filesystem::path& file) {
  check_mlp(params);
  ModelContainer c{ModelKind::Embedder, params.hidden};
  c.layers.push_back(params.head);
  write_file_atomic(file, encode_container(c));
}

MlpParams load_mlp(const std::filesystem::path& file) {
  ModelContainer c = read_model(file, ModelKind::Embedder);
  if (c.layers.size() < 2) layout_error(file, "the slice embedder");
  MlpParams params;
  params.head = std::move(c.layers.back());
  c.layers.pop_back();
  params.hidden = std::move(c.layers);
  try {
    check_mlp(params);
  } catch (const Error&) {
    layout_error(file, "the slice embedder");
  }
  return params;
}

// Records: per layer forward then backward cell, then the two head layers.
void save_lstm(const LstmParams& params, const std::filesystem::path& file) {
  check_lstm(params);
  ModelContainer c{ModelKind::Lstm, {}};
  for (const auto& layer : params.layers) {
    c.layers.push_back({layer.forward.weight, layer.forward.bias});
    c.layers.push_back({layer.backward.weight, layer.backward.bias});
  }
  c.layers.push_back(params.head_hidden);
  c.layers.push_back(params.head_out);
  write_file_atomic(file, encode_container(c));
}

LstmParams load_lstm(const std::filesystem::path& file) {
  ModelContainer c = read_model(file, ModelKind::Lstm);
  if (c.layers.size() < 4 || c.layers.size() % 2 != 0) layout_error(file, "the bi-LSTM");
  LstmParams params;
  const std::size_t cells = c.layers.size() - 2;
  for (std::size_t i = 0; i < cells; i += 2) {
    BiLstmLayer layer;
    layer.forward = {std::move(c.layers[i].weight), std::move(c.layers[i].bias)};
    layer.backward = {std::move(c.layers[i + 1].weight), std::move(c.layers[i + 1].bias)};
    params.layers.push_back(std::move(layer));
  }
  params.head_hidden = std::move(c.layers[cells]);
  params.head_out = std::move(c.layers[cells + 1]);
  try {
    check_lstm(params);
  } catch (const Error&) {
    layout_error(file, "the bi-LSTM");
  }
  return params;
}

// Records: a 3x1 settings column [heads, window, shift], the input projection,
// per encoder layer query/key/value/output, norm1 (gamma column, beta bias),
// ff1, ff2, norm2, and finally the head.
void save_attn(const AttnParams& params, const std::filesystem::path& file) {
  check_attn(params);
  ModelContainer c{ModelKind::Attn, {}};
  c.layers.push_back(column_record(Eigen::Vector3d(params.heads, params.window, params.shift ? 1.0 : 0.0)));
  c.layers.push_back(params.input);
  for (const auto& layer : params.layers) {
    c.layers.push_back(layer.query);
    c.layers.push_back(layer.key);
    c.layers.push_back(layer.value);
    c.layers.push_back(layer.output);
    c.layers.push_back({Eigen::MatrixXd(layer.norm1.gamma), layer.norm1.beta});
    c.layers.push_back(layer.ff1);
    c.layers.push_back(layer.ff2);
    c.layers.push_back({Eigen::MatrixXd(layer.norm2.gamma), layer.norm2.beta});
  }
  c.layers.push_back(params.head);
  write_file_atomic(file, encode_container(c));
}

AttnParams load_attn(const std::filesystem::path& file) {
  ModelContainer c = read_model(file, ModelKind::Attn);
  if (c.layers.size() < 11 || (c.layers.size() - 3) % 8 != 0) layout_error(file, "the attention encoder");
  const auto& settings = c.layers[0].weight;
  if (settings.rows() != 3 || settings.cols() != 1) layout_error(file, "the attention encoder");
  AttnParams params;
  params.heads = static_cast<int>(settings(0, 0));
  params.window = static_cast<int>(settings(1, 0));
  params.shift = settings(2, 0) != 0.0;
  params.input = std::move(c.layers[1]);
  std::size_t i = 2;
  auto norm = [](DenseLayer& d) {
    if (d.weight.cols() != 1) throw Error(ErrorCode::Format, "layer norm record must be a column");
    return LayerNormParams{d.weight.col(0), d.bias};
  };
  try {
    while (i + 1 < c.layers.size()) {
      EncoderLayer layer;
      layer.query = std::move(c.layers[i++]);
      layer.key = std::move(c.layers[i++]);
      layer.value = std::move(c.layers[i++]);
      layer.output = std::move(c.layers[i++]);
      layer.norm1 = norm(c.layers[i++]);
      layer.ff1 = std::move(c.layers[i++]);
      layer.ff2 = std::move(c.layers[i++]);
      layer.norm2 = norm(c.layers[i++]);
      params.layers.push_back(std::move(layer));
    }
    params.head = std::move(c.layers.back());
    check_attn(params);
  } catch (const Error&) {
    layout_error(file, "the attention encoder");
  }
  return params;
}

}  // namespace ctseq
