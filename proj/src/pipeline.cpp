#include "ctseq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "ctseq/embedding_io.hpp"
#include "ctseq/error.hpp"
#include "ctseq/model_io.hpp"
#include "ctseq/phantom.hpp"
#include "json.hpp"

namespace ctseq {

using nlohmann::json;

namespace {

// Reads optional keys from one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::Config, path_ + " must be a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::Config, path_ + "." + key + " has the wrong type");
    }
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) {
    T value{};
    if (!j_.contains(key)) return;
    get(key, value);
    out = std::move(value);
  }

  const json* child(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  std::string sub(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw Error(ErrorCode::Config, "unknown key " + path_ + "." + item.key());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_adam(const json& j, const std::string& path, AdamConfig& a) {
  Section s(j, path);
  s.get("learning_rate", a.learning_rate);
  s.get("beta1", a.beta1);
  s.get("beta2", a.beta2);
  s.get("epsilon", a.epsilon);
  s.get("weight_decay", a.weight_decay);
  s.finish();
}

json adam_json(const AdamConfig& a) {
  return {{"learning_rate", a.learning_rate},
          {"beta1", a.beta1},
          {"beta2", a.beta2},
          {"epsilon", a.epsilon},
          {"weight_decay", a.weight_decay}};
}

void read_train(const json& j, const std::string& path, TemporalTrainConfig& t) {
  Section s(j, path);
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("seed", t.seed);
  s.get("sample_length", t.sample.length);
  s.get("slice_dropout", t.sample.slice_dropout);
  if (const json* a = s.child("adam")) read_adam(*a, s.sub("adam"), t.adam);
  s.finish();
}

json train_json(const TemporalTrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"seed", t.seed},
          {"sample_length", t.sample.length},
          {"slice_dropout", t.sample.slice_dropout},
          {"adam", adam_json(t.adam)}};
}

json optional_path(const std::optional<fs::path>& p) { return p ? json(p->generic_string()) : json(nullptr); }

[[noreturn]] void missing(const fs::path& what, const std::string& producer) {
  throw Error(ErrorCode::MissingArtifact,
              what.string() + " not found; produce it with `ctseq " + producer + "`");
}

void require_file(const fs::path& file, const std::string& producer) {
  std::error_code ec;
  if (!fs::is_regular_file(file, ec)) missing(file, producer);
}

void require_dir(const fs::path& dir, const std::string& producer) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) missing(dir, producer);
}

DatasetManifest load_manifest(const fs::path& file) {
  require_file(file, "phantom-gen");
  DatasetManifest m = read_manifest(file);
  std::set<std::string> ids;
  for (const auto& e : m.entries) {
    if (!ids.insert(e.id()).second) throw Error(ErrorCode::Parse, file.string() + ": duplicate volume id " + e.id());
  }
  return m;
}

RangeRecord load_range(const fs::path& dir, const std::string& id, int n) {
  const fs::path file = dir / (id + ".range.json");
  require_file(file, "preprocess");
  RangeRecord rec = decode_range_json(read_file(file), file.string());
  if (rec.volume != id) throw Error(ErrorCode::Parse, file.string() + ": range belongs to " + rec.volume);
  if (rec.n != n || rec.range.s < 0 || rec.range.e < rec.range.s || rec.range.e >= n) {
    throw Error(ErrorCode::Contract, file.string() + ": range does not fit the " + std::to_string(n) +
                                         "-slice volume; rerun `ctseq preprocess`");
  }
  return rec;
}

EmbeddingSequence load_embedding(const fs::path& dir, const std::string& id) {
  const fs::path file = dir / (id + ".emb.csv");
  require_file(file, "embed");
  return import_embeddings(file);
}

std::vector<EmbeddingSequence> load_embeddings(const DatasetManifest& m, const fs::path& dir) {
  require_dir(dir, "embed");
  std::vector<EmbeddingSequence> seqs;
  for (const auto& e : m.entries) {
    seqs.push_back(load_embedding(dir, e.id()));
    if (seqs.back().dim() != seqs.front().dim()) {
      throw Error(ErrorCode::Shape, "embedding width differs for volume " + e.id());
    }
  }
  return seqs;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::Io, "cannot create directory " + dir.string());
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void PipelineConfig::validate() const {
  seg.validate();
  embedder.validate();
  if (mean_k.k < 1 || mean_k.trials < 1) throw Error(ErrorCode::Config, "mean_k.k and mean_k.trials must be >= 1");
  lstm.validate();
  lstm_train.validate();
  attn.validate();
  attn_train.validate();
  if (phantom.min_slices < 1 || phantom.max_slices < phantom.min_slices) {
    throw Error(ErrorCode::Config, "phantom slice range must satisfy 1 <= min_slices <= max_slices");
  }
  if (!(phantom.noise_sigma >= 0.0)) throw Error(ErrorCode::Config, "phantom.noise_sigma must be >= 0");
}

PipelineConfig parse_pipeline_config(std::string_view json_text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, source + ": " + e.what());
  }
  PipelineConfig cfg;
  Section root(doc, "config");
  if (const json* j = root.child("seg")) {
    Section s(*j, "config.seg");
    s.get("background_threshold", cfg.seg.background_threshold);
    s.get("crop_margin", cfg.seg.crop_margin);
    s.get("filter_kernel", cfg.seg.filter_kernel);
    s.get("fixed_threshold", cfg.seg.fixed_threshold);
    std::optional<std::string> mode;
    s.get("threshold_mode", mode);
    if (mode) {
      if (*mode == "otsu") cfg.seg.mode = ThresholdMode::Otsu;
      else if (*mode == "fixed") cfg.seg.mode = ThresholdMode::Fixed;
      else throw Error(ErrorCode::Config, "config.seg.threshold_mode must be \"otsu\" or \"fixed\"");
    }
    s.finish();
  }
  if (const json* j = root.child("embedder")) {
    Section s(*j, "config.embedder");
    auto& e = cfg.embedder;
    s.get("input_height", e.input_height);
    s.get("input_width", e.input_width);
    s.get("hidden", e.hidden);
    s.get("embedding_dim", e.embedding_dim);
    s.get("batch_size", e.batch_size);
    s.get("epochs", e.epochs);
    s.get("seed", e.seed);
    s.get("threshold", e.threshold);
    if (const json* a = s.child("adam")) read_adam(*a, s.sub("adam"), e.adam);
    s.finish();
  }
  if (const json* j = root.child("mean_k")) {
    Section s(*j, "config.mean_k");
    s.get("k", cfg.mean_k.k);
    s.get("trials", cfg.mean_k.trials);
    s.finish();
  }
  if (const json* j = root.child("lstm")) {
    Section s(*j, "config.lstm");
    s.get("hidden", cfg.lstm.hidden);
    s.get("layers", cfg.lstm.layers);
    s.get("head_hidden", cfg.lstm.head_hidden);
    if (const json* t = s.child("train")) read_train(*t, s.sub("train"), cfg.lstm_train);
    s.finish();
  }
  if (const json* j = root.child("attn")) {
    Section s(*j, "config.attn");
    s.get("model_dim", cfg.attn.model_dim);
    s.get("heads", cfg.attn.heads);
    s.get("window", cfg.attn.window);
    s.get("layers", cfg.attn.layers);
    s.get("ff_mult", cfg.attn.ff_mult);
    s.get("shift", cfg.attn.shift);
    if (const json* t = s.child("train")) read_train(*t, s.sub("train"), cfg.attn_train);
    s.finish();
  }
  if (const json* j = root.child("phantom")) {
    Section s(*j, "config.phantom");
    s.get("min_slices", cfg.phantom.min_slices);
    s.get("max_slices", cfg.phantom.max_slices);
    s.get("width", cfg.phantom.width);
    s.get("height", cfg.phantom.height);
    s.get("noise_sigma", cfg.phantom.noise_sigma);
    s.finish();
  }
  if (const json* j = root.child("paths")) {
    Section s(*j, "config.paths");
    std::optional<std::string> manifest, store, out;
    s.get("manifest", manifest);
    s.get("model_store", store);
    s.get("output_dir", out);
    s.finish();
    // relative paths are taken relative to the working directory
    if (manifest) cfg.paths.manifest = *manifest;
    if (store) cfg.paths.model_store = *store;
    if (out) cfg.paths.output_dir = *out;
  }
  root.finish();
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& file) {
  std::error_code ec;
  if (!fs::is_regular_file(file, ec)) throw Error(ErrorCode::Io, "config not found: " + file.string());
  return parse_pipeline_config(read_file(file), file.string());
}

std::string encode_pipeline_config(const PipelineConfig& cfg) {
  const auto& e = cfg.embedder;
  json j = {
      {"seg",
       {{"background_threshold", cfg.seg.background_threshold},
        {"crop_margin", cfg.seg.crop_margin},
        {"filter_kernel", cfg.seg.filter_kernel},
        {"threshold_mode", cfg.seg.mode == ThresholdMode::Otsu ? "otsu" : "fixed"},
        {"fixed_threshold", cfg.seg.fixed_threshold}}},
      {"embedder",
       {{"input_height", e.input_height},
        {"input_width", e.input_width},
        {"hidden", e.hidden},
        {"embedding_dim", e.embedding_dim},
        {"batch_size", e.batch_size},
        {"epochs", e.epochs},
        {"seed", e.seed},
        {"threshold", e.threshold},
        {"adam", adam_json(e.adam)}}},
      {"mean_k", {{"k", cfg.mean_k.k}, {"trials", cfg.mean_k.trials}}},
      {"lstm",
       {{"hidden", cfg.lstm.hidden},
        {"layers", cfg.lstm.layers},
        {"head_hidden", cfg.lstm.head_hidden},
        {"train", train_json(cfg.lstm_train)}}},
      {"attn",
       {{"model_dim", cfg.attn.model_dim},
        {"heads", cfg.attn.heads},
        {"window", cfg.attn.window},
        {"layers", cfg.attn.layers},
        {"ff_mult", cfg.attn.ff_mult},
        {"shift", cfg.attn.shift},
        {"train", train_json(cfg.attn_train)}}},
      {"phantom",
       {{"min_slices", cfg.phantom.min_slices},
        {"max_slices", cfg.phantom.max_slices},
        {"width", cfg.phantom.width},
        {"height", cfg.phantom.height},
        {"noise_sigma", cfg.phantom.noise_sigma}}},
      {"paths",
       {{"manifest", optional_path(cfg.paths.manifest)},
        {"model_store", optional_path(cfg.paths.model_store)},
        {"output_dir", optional_path(cfg.paths.output_dir)}}},
  };
  // null paths are dropped so the output parses back
  for (const char* key : {"manifest", "model_store", "output_dir"}) {
    if (j["paths"][key].is_null()) j["paths"].erase(key);
  }
  return j.dump(2) + "\n";
}

void run_phantom_gen(const PhantomGenRequest& req, const PipelineConfig& cfg) {
  if (req.count < 0) throw Error(ErrorCode::Usage, "--count must be >= 0");
  if (!(req.covid_ratio >= 0.0 && req.covid_ratio <= 1.0)) throw Error(ErrorCode::Usage, "--covid-ratio must lie in [0,1]");
  if (req.val_fraction && !(*req.val_fraction > 0.0 && *req.val_fraction < 1.0)) {
    throw Error(ErrorCode::Usage, "--val-fraction must lie in (0,1)");
  }
  std::error_code ec;
  if (fs::exists(req.out, ec)) {
    if (!fs::is_directory(req.out, ec)) throw Error(ErrorCode::Io, req.out.string() + " exists and is not a directory");
    if (!fs::is_empty(req.out, ec) && !req.force) {
      throw Error(ErrorCode::Io, req.out.string() + " is not empty; pass --force to overwrite");
    }
  }
  ensure_dir(req.out);

  const int n_covid = static_cast<int>(std::lround(req.count * req.covid_ratio));
  std::vector<int> labels(static_cast<std::size_t>(req.count), 0);
  std::fill_n(labels.begin(), n_covid, 1);
  Rng rng(req.seed);
  std::shuffle(labels.begin(), labels.end(), rng);

  DatasetManifest all;
  for (int i = 0; i < req.count; ++i) {
    const std::uint64_t vseed = derive_seed(req.seed, static_cast<std::uint64_t>(i));
    Rng vrng(vseed);
    PhantomSpec spec;
    spec.n_slices = std::uniform_int_distribution<int>(cfg.phantom.min_slices, cfg.phantom.max_slices)(vrng);
    spec.width = cfg.phantom.width;
    spec.height = cfg.phantom.height;
    spec.noise_sigma = cfg.phantom.noise_sigma;
    spec.label = labels[static_cast<std::size_t>(i)];
    spec.seed = vrng();
    Phantom ph = generate_phantom(spec);
    char id[32];
    std::snprintf(id, sizeof id, "phantom_%04d", i);
    const fs::path dir = req.out / id;
    fs::remove_all(dir, ec);  // stale slices from an earlier run must not survive
    ph.volume.id = id;
    save_volume(ph.volume, dir);
    all.entries.push_back({dir, spec.label});
  }
  write_manifest(all, req.out / "manifest.json");

  if (req.val_fraction) {
    // stratified: each class contributes round(fraction * class size) to val
    DatasetManifest train, val;
    std::vector<bool> to_val(all.entries.size(), false);
    for (int cls = 0; cls <= 1; ++cls) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < all.entries.size(); ++i) {
        if (all.entries[i].label == cls) members.push_back(i);
      }
      std::shuffle(members.begin(), members.end(), rng);
      const auto n_val = static_cast<std::size_t>(std::lround(static_cast<double>(members.size()) * *req.val_fraction));
      for (std::size_t j = 0; j < n_val; ++j) to_val[members[j]] = true;
    }
    for (std::size_t i = 0; i < all.entries.size(); ++i) (to_val[i] ? val : train).entries.push_back(all.entries[i]);
    write_manifest(train, req.out / "train.json");
    write_manifest(val, req.out / "val.json");
  }
}

std::string encode_range_json(const RangeRecord& rec) {
  json j = {{"volume", rec.volume}, {"s", rec.range.s},        {"e", rec.range.e},
            {"sum_area", rec.range.sum_area}, {"n", rec.n}, {"n_c", rec.n_c}};
  return j.dump() + "\n";
}

RangeRecord decode_range_json(std::string_view text, const std::string& source) {
  try {
    const json j = json::parse(text);
    RangeRecord rec;
    rec.volume = j.at("volume").get<std::string>();
    rec.range.s = j.at("s").get<int>();
    rec.range.e = j.at("e").get<int>();
    rec.range.sum_area = j.at("sum_area").get<std::int64_t>();
    rec.n = j.at("n").get<int>();
    rec.n_c = j.at("n_c").get<int>();
    return rec;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, source + ": " + e.what());
  }
}

void run_preprocess(const fs::path& manifest, const fs::path& out, std::optional<int> budget,
                    const PipelineConfig& cfg) {
  if (budget && *budget < 1) throw Error(ErrorCode::Usage, "--budget must be >= 1");
  const DatasetManifest m = load_manifest(manifest);
  ensure_dir(out);
  for (const auto& entry : m.entries) {
    const CtVolume vol = load_volume(entry.path, entry.label);
    const std::vector<std::int64_t> profile = slice_area_profile(vol, cfg.seg);
    RangeRecord rec;
    rec.volume = entry.id();
    rec.n = vol.size();
    rec.range = select_range(profile, budget ? *budget : default_budget(vol.size()));
    rec.n_c = rec.range.length();
    write_file_atomic(out / (rec.volume + ".profile.csv"), profile_csv(profile));
    write_file_atomic(out / (rec.volume + ".range.json"), encode_range_json(rec));
  }
}

std::vector<double> run_train_2d(const fs::path& manifest, const fs::path& preprocessed,
                                 const fs::path& weights_out, const PipelineConfig& cfg) {
  const DatasetManifest m = load_manifest(manifest);
  require_dir(preprocessed, "preprocess");
  std::vector<CtVolume> volumes;
  std::vector<SliceRange> ranges;
  for (const auto& entry : m.entries) {
    volumes.push_back(load_volume(entry.path, entry.label));
    volumes.back().id = entry.id();
    ranges.push_back(load_range(preprocessed, entry.id(), volumes.back().size()).range);
  }
  TrainedEmbedder trained = train_2d(volumes, ranges, cfg.embedder);
  save_mlp(trained.params, weights_out);
  return trained.loss_history;
}

void run_embed(const fs::path& manifest, const fs::path& weights, const fs::path& out,
               const PipelineConfig& cfg) {
  const DatasetManifest m = load_manifest(manifest);
  require_file(weights, "train-2d");
  const MlpParams params = load_mlp(weights);
  if (params.input_size() != cfg.embedder.input_size()) {
    throw Error(ErrorCode::Shape, weights.string() + " expects " + std::to_string(params.input_size()) +
                                      " input features; config gives " + std::to_string(cfg.embedder.input_size()));
  }
  ensure_dir(out);
  for (const auto& entry : m.entries) {
    CtVolume vol = load_volume(entry.path, entry.label);
    vol.id = entry.id();
    export_embeddings(embed_volume(params, vol, cfg.embedder), out / (vol.id + ".emb.csv"));
  }
}

std::vector<double> run_train_temporal(TemporalModel model, const fs::path& manifest,
                                       const fs::path& embeddings, const fs::path& weights_out,
                                       const PipelineConfig& cfg) {
  const DatasetManifest m = load_manifest(manifest);
  if (m.entries.empty()) throw Error(ErrorCode::Contract, manifest.string() + " lists no volumes");
  const std::vector<EmbeddingSequence> seqs = load_embeddings(m, embeddings);
  std::vector<int> labels;
  for (const auto& e : m.entries) labels.push_back(e.label);

  if (model == TemporalModel::Lstm) {
    LstmConfig lc = cfg.lstm;
    lc.input_dim = seqs.front().dim();
    Rng rng(derive_seed(cfg.lstm_train.seed, 0));
    auto result = lstm_train(init_lstm(lc, rng), seqs, labels, cfg.lstm_train);
    save_lstm(result.params, weights_out);
    return result.loss_history;
  }
  AttnConfig ac = cfg.attn;
  ac.input_dim = seqs.front().dim();
  Rng rng(derive_seed(cfg.attn_train.seed, 0));
  auto result = attn_train(init_attn(ac, rng), seqs, labels, cfg.attn_train);
  save_attn(result.params, weights_out);
  return result.loss_history;
}

std::string encode_predictions(const std::vector<Prediction>& preds) {
  json j = json::array();
  for (const auto& p : preds) j.push_back({{"id", p.id}, {"probability", p.probability}, {"decision", p.decision}});
  return j.dump(2) + "\n";
}

std::vector<Prediction> decode_predictions(std::string_view text, const std::string& source) {
  try {
    const json j = json::parse(text);
    if (!j.is_array()) throw Error(ErrorCode::Parse, source + ": predictions must be a JSON array");
    std::vector<Prediction> preds;
    std::set<std::string> ids;
    for (const auto& item : j) {
      Prediction p{item.at("id").get<std::string>(), item.at("probability").get<double>(),
                   item.at("decision").get<int>()};
      if (p.decision != 0 && p.decision != 1) throw Error(ErrorCode::Parse, source + ": decision must be 0 or 1");
      if (!ids.insert(p.id).second) throw Error(ErrorCode::Parse, source + ": duplicate id " + p.id);
      preds.push_back(std::move(p));
    }
    return preds;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, source + ": " + e.what());
  }
}

std::vector<Prediction> run_predict(const PredictRequest& req, const PipelineConfig& cfg) {
  if (req.trials < 1) throw Error(ErrorCode::Usage, "--trials must be >= 1");
  const DatasetManifest m = load_manifest(req.manifest);
  const char* producer = req.model == PredictModel::MeanK2d ? "train-2d" : "train-temporal";
  require_file(req.weights, producer);

  std::vector<Prediction> preds;
  auto decide = [](double p) { return p >= 0.5 ? 1 : 0; };
  switch (req.model) {
    case PredictModel::MeanK2d: {
      const MlpParams params = load_mlp(req.weights);
      require_dir(req.inputs, "preprocess");
      for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& entry = m.entries[i];
        const CtVolume vol = load_volume(entry.path);
        const RangeRecord rec = load_range(req.inputs, entry.id(), vol.size());
        Rng rng(derive_seed(req.seed, i));
        const MeanKResult r = predict_volume_mean_k(params, vol, rec.range, cfg.mean_k.k, req.trials, rng, cfg.embedder);
        preds.push_back({entry.id(), r.probability, r.decision});
      }
      break;
    }
    case PredictModel::Lstm: {
      const LstmParams params = load_lstm(req.weights);
      require_dir(req.inputs, "embed");
      for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const EmbeddingSequence seq = load_embedding(req.inputs, m.entries[i].id());
        Rng rng(derive_seed(req.seed, i));
        const double p = lstm_predict(params, seq, cfg.lstm_train.sample.length, req.trials, rng);
        preds.push_back({m.entries[i].id(), p, decide(p)});
      }
      break;
    }
    case PredictModel::Attn: {
      const AttnParams params = load_attn(req.weights);
      require_dir(req.inputs, "embed");
      for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const EmbeddingSequence seq = load_embedding(req.inputs, m.entries[i].id());
        Rng rng(derive_seed(req.seed, i));
        const double p = attn_predict(params, seq, cfg.attn_train.sample.length, req.trials, rng);
        preds.push_back({m.entries[i].id(), p, decide(p)});
      }
      break;
    }
  }
  if (!req.out.empty()) write_file_atomic(req.out, encode_predictions(preds));
  return preds;
}

EvalReport run_eval(const fs::path& predictions, const fs::path& manifest, const fs::path& out,
                    std::optional<std::string> model_id) {
  require_file(predictions, "predict");
  const std::string pred_bytes = read_file(predictions);
  const std::vector<Prediction> preds = decode_predictions(pred_bytes, predictions.string());
  const DatasetManifest m = load_manifest(manifest);

  std::map<std::string, int> by_id;
  for (const auto& p : preds) by_id[p.id] = p.decision;
  std::set<std::string> manifest_ids;
  std::vector<int> decisions, labels;
  std::vector<std::string> unmatched;
  for (const auto& e : m.entries) {
    manifest_ids.insert(e.id());
    auto it = by_id.find(e.id());
    if (it == by_id.end()) {
      unmatched.push_back(e.id() + " (manifest only)");
      continue;
    }
    decisions.push_back(it->second);
    labels.push_back(e.label);
  }
  for (const auto& p : preds) {
    if (!manifest_ids.count(p.id)) unmatched.push_back(p.id + " (predictions only)");
  }
  if (!unmatched.empty()) {
    std::string list;
    for (const auto& u : unmatched) list += (list.empty() ? "" : ", ") + u;
    throw Error(ErrorCode::Join, "predictions and manifest disagree on ids: " + list);
  }
  const std::string digest = fnv1a_hex(pred_bytes + '\0' + read_file(manifest));
  EvalReport report = make_report(confusion(decisions, labels),
                                  model_id ? *model_id : predictions.stem().string(), digest);
  if (!out.empty()) write_file_atomic(out, report_to_json(report));
  return report;
}

std::string render_profiles_svg(const std::vector<std::pair<std::string, std::vector<std::int64_t>>>& profiles) {
  constexpr double W = 640, H = 360, left = 60, right = 20, top = 20, bottom = 40;
  std::size_t max_n = 2;
  std::int64_t max_area = 1;
  for (const auto& [id, prof] : profiles) {
    max_n = std::max(max_n, prof.size());
    for (auto a : prof) max_area = std::max(max_area, a);
  }
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  auto px = [&](std::size_t i) { return left + (W - left - right) * static_cast<double>(i) / static_cast<double>(max_n - 1); };
  auto py = [&](std::int64_t a) { return H - bottom - (H - top - bottom) * static_cast<double>(a) / static_cast<double>(max_area); };

  std::string svg;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                W, H, W, H);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<path d=\"M%.0f %.0f V%.0f H%.0f\" stroke=\"black\" fill=\"none\"/>\n", left, top,
                H - bottom, W - right);
  svg += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"%.0f\" font-size=\"12\" text-anchor=\"middle\">slice index</text>\n",
                (left + W - right) / 2, H - 8);
  svg += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"14\" y=\"%.0f\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 %.0f)\">lung area (px)</text>\n",
                (top + H - bottom) / 2, (top + H - bottom) / 2);
  svg += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"%.0f\" font-size=\"10\" text-anchor=\"end\">%lld</text>\n", left - 4,
                top + 4, static_cast<long long>(max_area));
  svg += buf;
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    const auto& [id, prof] = profiles[p];
    svg += "<polyline fill=\"none\" stroke-width=\"1\" stroke=\"";
    svg += palette[p % std::size(palette)];
    svg += "\" points=\"";
    for (std::size_t i = 0; i < prof.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(i), py(prof[i]));
      svg += buf;
    }
    svg += "\"><title>" + id + "</title></polyline>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void run_report(const std::vector<fs::path>& reports, const std::optional<fs::path>& profiles,
                const fs::path& out) {
  if (reports.empty()) throw Error(ErrorCode::Usage, "report needs at least one --reports file");
  std::vector<EvalReport> parsed;
  for (const auto& file : reports) {
    require_file(file, "eval");
    parsed.push_back(report_from_json(read_file(file), file.string()));
  }
  ensure_dir(out);
  write_file_atomic(out / "table.txt", render_table(parsed));
  if (!profiles) return;
  require_dir(*profiles, "preprocess");
  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(*profiles)) {
    const std::string name = de.path().filename().string();
    if (name.size() > 12 && name.ends_with(".profile.csv")) files.push_back(de.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> curves;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    curves.emplace_back(name.substr(0, name.size() - 12), parse_profile_csv(read_file(f)));
  }
  write_file_atomic(out / "area_profiles.svg", render_profiles_svg(curves));
}

}  // namespace ctseq
