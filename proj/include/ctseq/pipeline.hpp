#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctseq/attention.hpp"
#include "ctseq/embedder.hpp"
#include "ctseq/lstm.hpp"
#include "ctseq/lung_seg.hpp"
#include "ctseq/metrics.hpp"
#include "ctseq/slice_select.hpp"
#include "ctseq/temporal.hpp"

namespace ctseq {

struct MeanKConfig {
  int k = 16;  // slices per trial
  int trials = 10;
};

struct PhantomGenConfig {
  int min_slices = 24;
  int max_slices = 48;
  int width = 96;
  int height = 96;
  double noise_sigma = 4.0;
};

struct PipelinePaths {
  std::optional<fs::path> manifest;
  std::optional<fs::path> model_store;
  std::optional<fs::path> output_dir;
};

// Everything a command needs besides its flags. Every field has a default, so
// a config file only lists what it changes.
struct PipelineConfig {
  SegConfig seg;
  EmbedderConfig embedder;
  MeanKConfig mean_k;
  LstmConfig lstm;
  TemporalTrainConfig lstm_train = default_lstm_train_config();
  AttnConfig attn;
  TemporalTrainConfig attn_train = default_attn_train_config();
  PhantomGenConfig phantom;
  PipelinePaths paths;

  void validate() const;
};

/// Unknown keys are rejected so that typos do not silently fall back to defaults.
PipelineConfig parse_pipeline_config(std::string_view json_text, const std::string& source = "config");
PipelineConfig load_pipeline_config(const fs::path& file);
std::string encode_pipeline_config(const PipelineConfig& cfg);

enum class TemporalModel { Lstm, Attn };
enum class PredictModel { MeanK2d, Lstm, Attn };

struct PhantomGenRequest {
  int count = 0;
  double covid_ratio = 0.5;
  std::uint64_t seed = 0;
  fs::path out;
  bool force = false;
  std::optional<double> val_fraction;  // also writes train.json / val.json
};

/// Volumes land in out/<id>/ with ids "phantom_0000", ...; out/manifest.json
/// lists all of them.
void run_phantom_gen(const PhantomGenRequest& req, const PipelineConfig& cfg);

struct RangeRecord {
  std::string volume;
  SliceRange range;
  int n = 0;
  int n_c = 0;
};

std::string encode_range_json(const RangeRecord& rec);
RangeRecord decode_range_json(std::string_view text, const std::string& source = "range");

/// Writes <id>.profile.csv and <id>.range.json per volume. `budget` absent
/// means half the slices, rounded up.
void run_preprocess(const fs::path& manifest, const fs::path& out, std::optional<int> budget,
                    const PipelineConfig& cfg);

/// Returns the per-epoch loss history.
std::vector<double> run_train_2d(const fs::path& manifest, const fs::path& preprocessed,
                                 const fs::path& weights_out, const PipelineConfig& cfg);

/// Writes <id>.emb.csv for every volume.
void run_embed(const fs::path& manifest, const fs::path& weights, const fs::path& out,
               const PipelineConfig& cfg);

std::vector<double> run_train_temporal(TemporalModel model, const fs::path& manifest,
                                       const fs::path& embeddings, const fs::path& weights_out,
                                       const PipelineConfig& cfg);

struct Prediction {
  std::string id;
  double probability = 0.0;
  int decision = 0;
};

std::string encode_predictions(const std::vector<Prediction>& preds);
std::vector<Prediction> decode_predictions(std::string_view text, const std::string& source = "predictions");

struct PredictRequest {
  PredictModel model = PredictModel::MeanK2d;
  fs::path weights;
  fs::path manifest;
  fs::path inputs;  // preprocessed dir for 2d-meanK, embeddings dir otherwise
  int trials = 10;
  std::uint64_t seed = 0;
  fs::path out;
};

/// Volume i draws from its own generator seeded by (seed, i), so a volume's
/// prediction does not depend on which other volumes are listed.
std::vector<Prediction> run_predict(const PredictRequest& req, const PipelineConfig& cfg);

/// Joins predictions to manifest labels by id; both sides must match exactly.
EvalReport run_eval(const fs::path& predictions, const fs::path& manifest, const fs::path& out,
                    std::optional<std::string> model_id);

/// Writes out/table.txt and, with a profile directory, out/area_profiles.svg.
void run_report(const std::vector<fs::path>& reports, const std::optional<fs::path>& profiles,
                const fs::path& out);

std::string render_profiles_svg(const std::vector<std::pair<std::string, std::vector<std::int64_t>>>& profiles);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace ctseq
