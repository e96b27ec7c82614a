#include "ctseq/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"

#include "ctseq/error.hpp"

namespace ctseq {

using nlohmann::json;

Confusion confusion(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorCode::Contract, "confusion: " + std::to_string(preds.size()) + " predictions vs " +
                                         std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw Error(ErrorCode::Contract, "confusion: no predictions");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] != 0;
    const bool y = labels[i] != 0;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::optional<double> sensitivity(const Confusion& c) {
  if (c.tp + c.fn == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

std::optional<double> specificity(const Confusion& c) {
  if (c.tn + c.fp == 0) return std::nullopt;
  return static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

namespace {

// hits = correct predictions of the class, predicted = predicted as the class,
// support = true members of the class.
ClassF1 class_f1(std::int64_t hits, std::int64_t predicted, std::int64_t support) {
  if (predicted == 0 || support == 0) return {0.0, true};
  if (hits == 0) return {0.0, false};
  // 2PR/(P+R) with P = hits/predicted, R = hits/support
  return {2.0 * static_cast<double>(hits) / static_cast<double>(predicted + support), false};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string cell(const std::optional<double>& v) {
  if (!v) return "undef";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

}  // namespace

MacroF1 macro_f1(const Confusion& c) {
  MacroF1 m;
  m.positive = class_f1(c.tp, c.tp + c.fp, c.tp + c.fn);
  m.negative = class_f1(c.tn, c.tn + c.fn, c.tn + c.fp);
  m.value = 0.5 * (m.positive.value + m.negative.value);
  return m;
}

EvalReport make_report(const Confusion& c, std::string model_id, std::string config_digest) {
  return {std::move(model_id), std::move(config_digest), c, sensitivity(c), specificity(c), macro_f1(c)};
}

std::string report_to_json(const EvalReport& r) {
  json undefined = json::array();
  if (!r.sensitivity) undefined.push_back("sensitivity");
  if (!r.specificity) undefined.push_back("specificity");
  if (r.f1.positive.flagged) undefined.push_back("f1_covid");
  if (r.f1.negative.flagged) undefined.push_back("f1_non_covid");
  json j = {
      {"model_id", r.model_id},
      {"config_digest", r.config_digest},
      {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}},
      {"sensitivity", optional_json(r.sensitivity)},
      {"specificity", optional_json(r.specificity)},
      {"macro_f1", r.f1.value},
      {"f1_per_class", {{"covid", r.f1.positive.value}, {"non_covid", r.f1.negative.value}}},
      {"undefined", undefined},
      {"conventions",
       "SE/SP with a zero denominator are reported as null; a class with no support or no "
       "predictions contributes F1 = 0 to the unweighted two-class macro mean"},
  };
  return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text, const std::string& source) {
  try {
    const json j = json::parse(text);
    Confusion c;
    const json& counts = j.at("counts");
    c.tp = counts.at("tp").get<std::int64_t>();
    c.fp = counts.at("fp").get<std::int64_t>();
    c.tn = counts.at("tn").get<std::int64_t>();
    c.fn = counts.at("fn").get<std::int64_t>();
    if (c.tp < 0 || c.fp < 0 || c.tn < 0 || c.fn < 0) throw Error(ErrorCode::Parse, source + ": negative count");
    // metrics are recomputed from the counts
    return make_report(c, j.at("model_id").get<std::string>(), j.at("config_digest").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, source + ": " + e.what());
  }
}

std::string render_table(std::span<const EvalReport> reports) {
  std::size_t name_w = 5;
  for (const auto& r : reports) name_w = std::max(name_w, r.model_id.size());
  auto row = [&](const std::string& a, const std::string& b, const std::string& c, const std::string& d) {
    std::string line = a + std::string(name_w - a.size(), ' ');
    auto right = [&](const std::string& s, std::size_t w) { line += "  " + std::string(w - std::min(w, s.size()), ' ') + s; };
    right(b, 6);
    right(c, 6);
    right(d, 8);
    return line + "\n";
  };
  std::string out = row("Model", "SE", "SP", "Macro-F1");
  out += std::string(name_w + 26, '-') + "\n";
  for (const auto& r : reports) out += row(r.model_id, cell(r.sensitivity), cell(r.specificity), cell(r.f1.value));
  return out;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ctseq
