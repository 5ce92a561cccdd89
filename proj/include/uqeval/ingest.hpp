#pragma once

#include <map>
#include <string>
#include <vector>

#include "uqeval/core.hpp"

namespace uqeval {

enum class LogFormat { jsonl, csv };

std::optional<LogFormat> format_from(std::string_view name);

/// Load and validate a prediction log. JSONL is the canonical format; CSV
/// carries flat fields only (no mc_probs). Order is preserved. A sidecar
/// <path>.meta.json is read into log.meta when present.
PredictionLog load_log(const std::string& path, LogFormat format);

/// Inverse of load_log: load_log(write_log(L)) == L field-for-field
/// (CSV restricted to flat logs).
void write_log(const PredictionLog& log, const std::string& path, LogFormat format);

struct MetadataRecord {
  std::string id;
  std::map<std::string, std::string> fields;

  bool operator==(const MetadataRecord&) const = default;
};

/// JSONL metadata: {"id": str, <field>: str, ...} or {"id": str,
/// "fields": {str: str}}.
std::vector<MetadataRecord> load_metadata(const std::string& path);

/// Retain a record iff any field value contains any keyword
/// (case-insensitive ASCII substring). Scores and pixels are never consulted.
std::vector<MetadataRecord> keyword_filter(const std::vector<MetadataRecord>& records,
                                           const std::vector<std::string>& keywords);

/// Stratum keys present in at least one record, sorted.
std::vector<std::string> stratum_keys(const PredictionLog& log);

/// Exhaustive, disjoint partition by a declared stratum key. Records missing
/// the key land under "". Sub-log sizes are the per-stratum n.
std::map<std::string, PredictionLog> partition_by_stratum(const PredictionLog& log,
                                                          const std::string& key);

PredictionLog filter_split(const PredictionLog& log, Split split);

}  // namespace uqeval
