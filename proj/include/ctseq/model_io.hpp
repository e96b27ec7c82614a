#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctseq/attention.hpp"
#include "ctseq/embedder.hpp"
#include "ctseq/lstm.hpp"
#include "ctseq/nn.hpp"

namespace ctseq {

// "CTSK" container, little-endian:
//   magic "CTSK" | u32 version | [u8 kind, version 2 only] | u32 layer count |
//   per layer: u32 rows | u32 cols | rows*cols f64 weights (row-major) | rows f64 biases
// Version 1 holds the slice embedder and carries no kind byte; version 2 holds
// a temporal model tagged by kind.
enum class ModelKind : std::uint8_t { Embedder = 0, Lstm = 1, Attn = 2 };

inline constexpr std::uint32_t kUntaggedVersion = 1;
inline constexpr std::uint32_t kTaggedVersion = 2;

struct ModelContainer {
  ModelKind kind = ModelKind::Embedder;
  std::vector<DenseLayer> layers;
};

std::string encode_container(const ModelContainer& container);
ModelContainer decode_container(const std::string& bytes, const std::string& source = "model");

void save_mlp(const MlpParams& params, const std::filesystem::path& file);
MlpParams load_mlp(const std::filesystem::path& file);

void save_lstm(const LstmParams& params, const std::filesystem::path& file);
LstmParams load_lstm(const std::filesystem::path& file);

void save_attn(const AttnParams& params, const std::filesystem::path& file);
AttnParams load_attn(const std::filesystem::path& file);

}  // namespace ctseq
