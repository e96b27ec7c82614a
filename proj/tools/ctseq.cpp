// ctseq: command-line driver for the CT slice-sequence pipeline.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctseq/error.hpp"
#include "ctseq/pipeline.hpp"
#include "json.hpp"

namespace {

using ctseq::Error;
using ctseq::ErrorCode;
namespace fs = std::filesystem;

struct Options {
  std::string config;
  // shared
  std::string manifest, out, weights, preprocessed, embeddings, history, model, model_id, profiles;
  std::uint64_t seed = 0;
  // phantom-gen
  int count = 0;
  double covid_ratio = 0.5;
  double val_fraction = 0.0;
  bool force = false;
  // preprocess
  bool budget_half = false;
  int budget = 0;
  // train
  int epochs = -1;
  // predict
  int trials = 0;
  std::vector<std::string> reports;
};

ctseq::PipelineConfig load_config(const Options& o) {
  return o.config.empty() ? ctseq::PipelineConfig{} : ctseq::load_pipeline_config(o.config);
}

fs::path pick(const std::string& flag_value, const std::optional<fs::path>& fallback, const char* flag) {
  if (!flag_value.empty()) return flag_value;
  if (fallback) return *fallback;
  throw Error(ErrorCode::Usage, std::string(flag) + " is required (or set it under \"paths\" in --config)");
}

void write_history(const std::string& file, const std::vector<double>& loss) {
  if (!file.empty()) ctseq::write_file_atomic(file, nlohmann::json(loss).dump() + "\n");
}

void print_loss(const std::vector<double>& loss) {
  for (std::size_t i = 0; i < loss.size(); ++i) std::printf("epoch %zu loss %.6f\n", i + 1, loss[i]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CT slice selection, slice embedding and sequence classification"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "pipeline config (JSON)");

  auto* gen = app.add_subcommand("phantom-gen", "generate labelled synthetic chest CT volumes");
  gen->add_option("--count", o.count, "number of volumes")->required();
  gen->add_option("--covid-ratio", o.covid_ratio, "fraction labelled covid")->required();
  gen->add_option("--seed", o.seed, "generator seed")->required();
  gen->add_option("--out", o.out, "output directory")->required();
  gen->add_flag("--force", o.force, "write into a non-empty directory");
  gen->add_option("--val-fraction", o.val_fraction, "also write stratified train.json / val.json");

  auto* pre = app.add_subcommand("preprocess", "lung-area profiles and slice windows");
  pre->add_option("--manifest", o.manifest, "dataset manifest");
  pre->add_option("--out", o.out, "output directory");
  auto* half = pre->add_flag("--budget-half", o.budget_half, "window of half the slices (default)");
  pre->add_option("--budget", o.budget, "window length in slices")->excludes(half);

  auto* t2d = app.add_subcommand("train-2d", "train the slice embedder on selected slices");
  t2d->add_option("--manifest", o.manifest, "training manifest");
  t2d->add_option("--preprocessed", o.preprocessed, "output of preprocess")->required();
  t2d->add_option("--out", o.out, "weights file");
  t2d->add_option("--epochs", o.epochs, "override the configured epoch count");
  t2d->add_option("--seed", o.seed, "override the configured seed");
  t2d->add_option("--history", o.history, "write per-epoch loss as JSON");

  auto* emb = app.add_subcommand("embed", "export per-slice embeddings");
  emb->add_option("--manifest", o.manifest, "dataset manifest");
  emb->add_option("--weights", o.weights, "embedder weights")->required();
  emb->add_option("--out", o.out, "output directory");

  auto* tt = app.add_subcommand("train-temporal", "train a sequence model over slice embeddings");
  tt->add_option("--model", o.model, "lstm | attn")->required()->check(CLI::IsMember({"lstm", "attn"}));
  tt->add_option("--manifest", o.manifest, "training manifest");
  tt->add_option("--embeddings", o.embeddings, "output of embed")->required();
  tt->add_option("--out", o.out, "weights file");
  tt->add_option("--epochs", o.epochs, "override the configured epoch count");
  tt->add_option("--seed", o.seed, "override the configured seed");
  tt->add_option("--history", o.history, "write per-epoch loss as JSON");

  auto* pred = app.add_subcommand("predict", "per-volume covid probabilities");
  pred->add_option("--model", o.model, "2d-meanK | lstm | attn")
      ->required()
      ->check(CLI::IsMember({"2d-meanK", "lstm", "attn"}));
  pred->add_option("--weights", o.weights, "model weights")->required();
  pred->add_option("--manifest", o.manifest, "dataset manifest");
  auto* pp = pred->add_option("--preprocessed", o.preprocessed, "output of preprocess (2d-meanK)");
  auto* pe = pred->add_option("--embeddings", o.embeddings, "output of embed (lstm, attn)");
  pp->excludes(pe);
  pred->add_option("--trials", o.trials, "sampling trials per volume");
  pred->add_option("--seed", o.seed, "sampling seed");
  pred->add_option("--out", o.out, "predictions JSON");

  auto* ev = app.add_subcommand("eval", "score predictions against manifest labels");
  ev->add_option("--predictions", o.weights, "output of predict")->required();
  ev->add_option("--manifest", o.manifest, "dataset manifest");
  ev->add_option("--out", o.out, "report JSON");
  ev->add_option("--model-id", o.model_id, "name shown in tables");

  auto* rep = app.add_subcommand("report", "render eval reports");
  rep->add_option("--reports", o.reports, "report JSON files")->required();
  rep->add_option("--profiles", o.profiles, "directory of *.profile.csv");
  rep->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error[E_USAGE]: %s\n", e.what());
    return 2;
  }

  try {
    ctseq::PipelineConfig cfg = load_config(o);
    const auto& paths = cfg.paths;
    if (*gen) {
      ctseq::PhantomGenRequest req;
      req.count = o.count;
      req.covid_ratio = o.covid_ratio;
      req.seed = o.seed;
      req.out = o.out;
      req.force = o.force;
      if (gen->count("--val-fraction")) req.val_fraction = o.val_fraction;
      ctseq::run_phantom_gen(req, cfg);
    } else if (*pre) {
      std::optional<int> budget;
      if (pre->count("--budget")) budget = o.budget;
      ctseq::run_preprocess(pick(o.manifest, paths.manifest, "--manifest"), pick(o.out, paths.output_dir, "--out"),
                            budget, cfg);
    } else if (*t2d) {
      if (o.epochs >= 0) cfg.embedder.epochs = o.epochs;
      if (t2d->count("--seed")) cfg.embedder.seed = o.seed;
      cfg.validate();
      const auto loss = ctseq::run_train_2d(pick(o.manifest, paths.manifest, "--manifest"), o.preprocessed,
                                            pick(o.out, paths.model_store, "--out"), cfg);
      print_loss(loss);
      write_history(o.history, loss);
    } else if (*emb) {
      ctseq::run_embed(pick(o.manifest, paths.manifest, "--manifest"), o.weights,
                       pick(o.out, paths.output_dir, "--out"), cfg);
    } else if (*tt) {
      const bool lstm = o.model == "lstm";
      auto& train = lstm ? cfg.lstm_train : cfg.attn_train;
      if (o.epochs >= 0) train.epochs = o.epochs;
      if (tt->count("--seed")) train.seed = o.seed;
      cfg.validate();
      const auto loss = ctseq::run_train_temporal(lstm ? ctseq::TemporalModel::Lstm : ctseq::TemporalModel::Attn,
                                                  pick(o.manifest, paths.manifest, "--manifest"), o.embeddings,
                                                  pick(o.out, paths.model_store, "--out"), cfg);
      print_loss(loss);
      write_history(o.history, loss);
    } else if (*pred) {
      ctseq::PredictRequest req;
      req.model = o.model == "2d-meanK" ? ctseq::PredictModel::MeanK2d
                  : o.model == "lstm"   ? ctseq::PredictModel::Lstm
                                        : ctseq::PredictModel::Attn;
      if (req.model == ctseq::PredictModel::MeanK2d) {
        if (o.preprocessed.empty()) throw Error(ErrorCode::Usage, "--model 2d-meanK needs --preprocessed");
        req.inputs = o.preprocessed;
      } else {
        if (o.embeddings.empty()) throw Error(ErrorCode::Usage, "--model " + o.model + " needs --embeddings");
        req.inputs = o.embeddings;
      }
      req.weights = o.weights;
      req.manifest = pick(o.manifest, paths.manifest, "--manifest");
      req.trials = pred->count("--trials") ? o.trials : cfg.mean_k.trials;
      req.seed = o.seed;
      req.out = o.out;
      const auto preds = ctseq::run_predict(req, cfg);
      if (o.out.empty()) std::fputs(ctseq::encode_predictions(preds).c_str(), stdout);
    } else if (*ev) {
      std::optional<std::string> id;
      if (!o.model_id.empty()) id = o.model_id;
      const auto report = ctseq::run_eval(o.weights, pick(o.manifest, paths.manifest, "--manifest"), o.out, id);
      const std::vector<ctseq::EvalReport> one{report};
      std::fputs(ctseq::render_table(one).c_str(), stdout);
    } else if (*rep) {
      std::vector<fs::path> files(o.reports.begin(), o.reports.end());
      std::optional<fs::path> profiles;
      if (!o.profiles.empty()) profiles = o.profiles;
      ctseq::run_report(files, profiles, pick(o.out, paths.output_dir, "--out"));
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", std::string(ctseq::error_code_name(e.code())).c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[E_INTERNAL]: %s\n", e.what());
    return 1;
  }
  return 0;
}
