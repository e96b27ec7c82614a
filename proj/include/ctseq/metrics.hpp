#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctseq {

// Positive class is covid (1).
struct Confusion {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

Confusion confusion(std::span<const int> preds, std::span<const int> labels);

// nullopt when the denominator is zero.
std::optional<double> sensitivity(const Confusion& c);
std::optional<double> specificity(const Confusion& c);

struct ClassF1 {
  double value = 0.0;
  bool flagged = false;  // no support or no predictions; value forced to 0
};

struct MacroF1 {
  double value = 0.0;
  ClassF1 positive;
  ClassF1 negative;
};

/// Unweighted mean of the two per-class F1 scores.
MacroF1 macro_f1(const Confusion& c);

struct EvalReport {
  std::string model_id;
  std::string config_digest;
  Confusion counts;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  MacroF1 f1;
};

EvalReport make_report(const Confusion& c, std::string model_id, std::string config_digest);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text, const std::string& source = "report");

/// Aligned plain-text table, one row per report, columns Model | SE | SP | Macro-F1.
std::string render_table(std::span<const EvalReport> reports);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace ctseq
