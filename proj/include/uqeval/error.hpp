#pragma once

#include <stdexcept>
#include <string>

namespace uqeval {

enum class Errc {
  missing_score,
  inconsistent_score,
  out_of_range,
  bad_label,
  parse_error,
  validation_error,
  mixed_mc_presence,
  unknown_stratum_key,
  empty_log,
  degenerate_labels,
  missing_logits,
  empty_samples,
  misaligned_members,
  insufficient_band,
  group_too_small,
  length_mismatch,
  diverged_loss,
  missing_fields,
  io_error,
};

const char* errc_name(Errc c);

/// Library-wide exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace uqeval
