#include "uqeval/core.hpp"

#include <set>

namespace uqeval {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::missing_score: return "MissingScore";
    case Errc::inconsistent_score: return "InconsistentScore";
    case Errc::out_of_range: return "OutOfRange";
    case Errc::bad_label: return "BadLabel";
    case Errc::parse_error: return "ParseError";
    case Errc::validation_error: return "ValidationError";
    case Errc::mixed_mc_presence: return "MixedMcPresence";
    case Errc::unknown_stratum_key: return "UnknownStratumKey";
    case Errc::empty_log: return "EmptyLog";
    case Errc::degenerate_labels: return "DegenerateLabels";
    case Errc::missing_logits: return "MissingLogits";
    case Errc::empty_samples: return "EmptySamples";
    case Errc::misaligned_members: return "MisalignedMembers";
    case Errc::insufficient_band: return "InsufficientBand";
    case Errc::group_too_small: return "GroupTooSmall";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::diverged_loss: return "DivergedLoss";
    case Errc::missing_fields: return "MissingFields";
    case Errc::io_error: return "IoError";
  }
  return "UnknownError";
}

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::ood: return "ood";
  }
  return "test";
}

std::optional<Split> split_from(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  if (name == "ood") return Split::ood;
  return std::nullopt;
}

PredictionRecord validate_record(const PredictionRecord& raw) {
  PredictionRecord r = raw;
  if (r.label != 0 && r.label != 1)
    fail(Errc::bad_label, "label must be 0 or 1 (id=" + r.id + ")");
  if (!r.logit && !r.prob && !r.mc_probs)
    fail(Errc::missing_score, "record carries no logit, prob or mc_probs (id=" + r.id + ")");
  if (r.prob && (*r.prob < 0.0 || *r.prob > 1.0 || !std::isfinite(*r.prob)))
    fail(Errc::out_of_range, "prob outside [0,1] (id=" + r.id + ")");
  if (r.logit && !std::isfinite(*r.logit))
    fail(Errc::out_of_range, "non-finite logit (id=" + r.id + ")");
  if (r.mc_probs) {
    for (double p : *r.mc_probs)
      if (p < 0.0 || p > 1.0 || !std::isfinite(p))
        fail(Errc::out_of_range, "mc_probs entry outside [0,1] (id=" + r.id + ")");
  }
  if (r.logit && r.prob) {
    if (std::fabs(*r.prob - sigmoid(*r.logit)) > kLogitProbTol)
      fail(Errc::inconsistent_score, "prob does not match sigmoid(logit) (id=" + r.id + ")");
  } else if (r.logit && !r.prob) {
    r.prob = sigmoid(*r.logit);
  }
  return r;
}

void validate_log(PredictionLog& log) {
  if (log.records.empty()) fail(Errc::empty_log, "log has no records");
  std::set<std::string> ids;
  bool first_mc = log.records.front().mc_probs.has_value();
  for (auto& rec : log.records) {
    rec = validate_record(rec);
    if (!ids.insert(rec.id).second)
      fail(Errc::validation_error, "duplicate id " + rec.id);
    if (rec.mc_probs.has_value() != first_mc)
      fail(Errc::mixed_mc_presence, "record " + rec.id + " breaks the mc_probs presence pattern");
  }
}

}  // namespace uqeval
