#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uqeval/error.hpp"

namespace uqeval {

enum class Split { train, val, test, ood };

std::string split_name(Split s);
std::optional<Split> split_from(std::string_view name);

inline constexpr double kProbClip = 1e-12;
inline constexpr double kLogitProbTol = 1e-9;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Clip used only inside log-based metrics; stored probabilities stay raw.
inline double clip_prob(double p) {
  if (p < kProbClip) return kProbClip;
  if (p > 1.0 - kProbClip) return 1.0 - kProbClip;
  return p;
}

/// One sample's label, score(s), optional MC sample vector and strata.
/// Label convention: 1 = fake (positive class), 0 = real.
struct PredictionRecord {
  std::string id;
  Split split = Split::test;
  int label = 0;
  std::optional<double> logit;
  std::optional<double> prob;
  std::optional<std::vector<double>> mc_probs;
  // Derived summaries attached by summarize_log / ensemble combination.
  std::optional<double> mc_mean;
  std::optional<double> mc_var;
  std::optional<double> mc_entropy;
  std::map<std::string, std::string> strata;

  bool operator==(const PredictionRecord&) const = default;
};

/// Validated, immutable-after-construction collection for one
/// (model, inference mode, split) tuple.
struct PredictionLog {
  std::vector<PredictionRecord> records;
  std::map<std::string, std::string> meta;

  size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  /// True when every record carries mc_probs (all-or-none is an invariant).
  bool has_mc() const { return !records.empty() && records.front().mc_probs.has_value(); }

  bool operator==(const PredictionLog&) const = default;
};

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;
  long total() const { return tp + fp + tn + fn; }

  bool operator==(const ConfusionCounts&) const = default;
};

/// Check every record invariant and materialize prob from logit when absent.
/// Throws Error with codes missing_score / inconsistent_score / out_of_range /
/// bad_label.
PredictionRecord validate_record(const PredictionRecord& raw);

/// Validate each record plus log-level invariants (non-empty, unique ids,
/// uniform mc_probs presence). Records are normalized in place.
void validate_log(PredictionLog& log);

/// Decision rule: 1 iff prob >= threshold (tie resolves positive).
inline int decide(double prob, double threshold) { return prob >= threshold ? 1 : 0; }

}  // namespace uqeval
