#include "uqeval/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace uqeval {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ordered_json record_to_json(const PredictionRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["split"] = split_name(r.split);
  j["label"] = r.label;
  if (r.logit) j["logit"] = *r.logit;
  if (r.prob) j["prob"] = *r.prob;
  if (r.mc_probs) j["mc_probs"] = *r.mc_probs;
  if (r.mc_mean) j["mc_mean"] = *r.mc_mean;
  if (r.mc_var) j["mc_var"] = *r.mc_var;
  if (r.mc_entropy) j["mc_entropy"] = *r.mc_entropy;
  if (!r.strata.empty()) j["strata"] = r.strata;
  return j;
}

PredictionRecord record_from_json(const ordered_json& j, long line_no) {
  auto bad = [&](const std::string& what) {
    fail(Errc::parse_error, what + " (line " + std::to_string(line_no) + ")");
  };
  PredictionRecord r;
  if (!j.is_object()) bad("record is not a JSON object");
  if (!j.contains("id") || !j["id"].is_string()) bad("missing string id");
  r.id = j["id"].get<std::string>();
  if (j.contains("split")) {
    if (!j["split"].is_string()) bad("split must be a string");
    auto s = split_from(j["split"].get<std::string>());
    if (!s) bad("unknown split '" + j["split"].get<std::string>() + "'");
    r.split = *s;
  }
  if (!j.contains("label") || !j["label"].is_number_integer()) bad("missing integer label");
  r.label = j["label"].get<int>();
  if (j.contains("logit")) r.logit = j["logit"].get<double>();
  if (j.contains("prob")) r.prob = j["prob"].get<double>();
  if (j.contains("mc_probs")) {
    if (!j["mc_probs"].is_array() || j["mc_probs"].empty()) bad("mc_probs must be a non-empty array");
    r.mc_probs = j["mc_probs"].get<std::vector<double>>();
  }
  if (j.contains("mc_mean")) r.mc_mean = j["mc_mean"].get<double>();
  if (j.contains("mc_var")) r.mc_var = j["mc_var"].get<double>();
  if (j.contains("mc_entropy")) r.mc_entropy = j["mc_entropy"].get<double>();
  if (j.contains("strata")) {
    if (!j["strata"].is_object()) bad("strata must be an object");
    for (auto it = j["strata"].begin(); it != j["strata"].end(); ++it) {
      if (!it.value().is_string()) bad("strata values must be strings");
      r.strata[it.key()] = it.value().get<std::string>();
    }
  }
  return r;
}

// Minimal RFC-style CSV: quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line, long line_no) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted)
    fail(Errc::parse_error, "unterminated quote (line " + std::to_string(line_no) + ")");
  cells.push_back(cur);
  return cells;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

double parse_double(const std::string& s, long line_no) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(Errc::parse_error, "bad number '" + s + "' (line " + std::to_string(line_no) + ")");
  }
}

PredictionLog load_log_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path);
  PredictionLog log;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(Errc::parse_error, std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
    }
    log.records.push_back(record_from_json(j, line_no));
  }
  return log;
}

PredictionLog load_log_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path);
  PredictionLog log;
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) fail(Errc::parse_error, "empty csv " + path);
  ++line_no;
  auto header = split_csv_line(line, line_no);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line, line_no);
    if (cells.size() != header.size())
      fail(Errc::parse_error, "wrong cell count (line " + std::to_string(line_no) + ")");
    PredictionRecord r;
    for (size_t c = 0; c < header.size(); ++c) {
      const std::string& key = header[c];
      const std::string& val = cells[c];
      if (val.empty()) continue;
      if (key == "id") {
        r.id = val;
      } else if (key == "split") {
        auto s = split_from(val);
        if (!s) fail(Errc::parse_error, "unknown split '" + val + "' (line " + std::to_string(line_no) + ")");
        r.split = *s;
      } else if (key == "label") {
        r.label = static_cast<int>(parse_double(val, line_no));
      } else if (key == "logit") {
        r.logit = parse_double(val, line_no);
      } else if (key == "prob") {
        r.prob = parse_double(val, line_no);
      } else if (key == "mc_mean") {
        r.mc_mean = parse_double(val, line_no);
      } else if (key == "mc_var") {
        r.mc_var = parse_double(val, line_no);
      } else if (key == "mc_entropy") {
        r.mc_entropy = parse_double(val, line_no);
      } else if (key.rfind("strata.", 0) == 0) {
        r.strata[key.substr(7)] = val;
      } else {
        fail(Errc::parse_error, "unknown column '" + key + "'");
      }
    }
    log.records.push_back(std::move(r));
  }
  return log;
}

void load_meta_sidecar(PredictionLog& log, const std::string& path) {
  std::string meta_path = path + ".meta.json";
  if (!std::filesystem::exists(meta_path)) return;
  std::ifstream in(meta_path);
  if (!in) fail(Errc::io_error, "cannot open " + meta_path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::parse_error, std::string(e.what()) + " in " + meta_path);
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    log.meta[it.key()] = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
}

}  // namespace

std::optional<LogFormat> format_from(std::string_view name) {
  if (name == "jsonl") return LogFormat::jsonl;
  if (name == "csv") return LogFormat::csv;
  return std::nullopt;
}

PredictionLog load_log(const std::string& path, LogFormat format) {
  PredictionLog log = format == LogFormat::jsonl ? load_log_jsonl(path) : load_log_csv(path);
  try {
    validate_log(log);
  } catch (const Error& e) {
    if (e.code() == Errc::mixed_mc_presence || e.code() == Errc::empty_log) throw;
    fail(Errc::validation_error, std::string(e.what()) + " in " + path);
  }
  load_meta_sidecar(log, path);
  return log;
}

void write_log(const PredictionLog& log, const std::string& path, LogFormat format) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path);
  if (format == LogFormat::jsonl) {
    for (const auto& r : log.records) out << record_to_json(r).dump() << "\n";
  } else {
    for (const auto& r : log.records)
      if (r.mc_probs)
        fail(Errc::validation_error, "csv cannot carry mc_probs (id=" + r.id + "); use jsonl");
    // Column set is the union over records so the file is self-describing.
    std::set<std::string> skeys;
    bool any_logit = false, any_prob = false, any_mean = false, any_var = false, any_ent = false;
    for (const auto& r : log.records) {
      for (const auto& [k, v] : r.strata) skeys.insert(k);
      any_logit |= r.logit.has_value();
      any_prob |= r.prob.has_value();
      any_mean |= r.mc_mean.has_value();
      any_var |= r.mc_var.has_value();
      any_ent |= r.mc_entropy.has_value();
    }
    out << "id,split,label";
    if (any_logit) out << ",logit";
    if (any_prob) out << ",prob";
    if (any_mean) out << ",mc_mean";
    if (any_var) out << ",mc_var";
    if (any_ent) out << ",mc_entropy";
    for (const auto& k : skeys) out << ",strata." << csv_escape(k);
    out << "\n";
    for (const auto& r : log.records) {
      out << csv_escape(r.id) << "," << split_name(r.split) << "," << r.label;
      if (any_logit) out << "," << (r.logit ? fmt_double(*r.logit) : "");
      if (any_prob) out << "," << (r.prob ? fmt_double(*r.prob) : "");
      if (any_mean) out << "," << (r.mc_mean ? fmt_double(*r.mc_mean) : "");
      if (any_var) out << "," << (r.mc_var ? fmt_double(*r.mc_var) : "");
      if (any_ent) out << "," << (r.mc_entropy ? fmt_double(*r.mc_entropy) : "");
      for (const auto& k : skeys) {
        auto it = r.strata.find(k);
        out << "," << (it != r.strata.end() ? csv_escape(it->second) : "");
      }
      out << "\n";
    }
  }
  if (!log.meta.empty()) {
    ordered_json j;
    for (const auto& [k, v] : log.meta) j[k] = v;
    std::ofstream mout(path + ".meta.json");
    if (!mout) fail(Errc::io_error, "cannot write " + path + ".meta.json");
    mout << j.dump(2) << "\n";
  }
}

std::vector<MetadataRecord> load_metadata(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path);
  std::vector<MetadataRecord> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(Errc::parse_error, std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
    }
    MetadataRecord m;
    if (!j.contains("id") || !j["id"].is_string())
      fail(Errc::parse_error, "missing string id (line " + std::to_string(line_no) + ")");
    m.id = j["id"].get<std::string>();
    if (m.id.empty())
      fail(Errc::parse_error, "empty id (line " + std::to_string(line_no) + ")");
    const ordered_json& fields = j.contains("fields") ? j["fields"] : j;
    for (auto it = fields.begin(); it != fields.end(); ++it) {
      if (it.key() == "id" || !it.value().is_string()) continue;
      m.fields[it.key()] = it.value().get<std::string>();
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<MetadataRecord> keyword_filter(const std::vector<MetadataRecord>& records,
                                           const std::vector<std::string>& keywords) {
  if (keywords.empty()) fail(Errc::validation_error, "keyword list is empty");
  std::vector<std::string> needles;
  needles.reserve(keywords.size());
  for (const auto& k : keywords) needles.push_back(lower_ascii(k));

  std::vector<MetadataRecord> kept;
  for (const auto& rec : records) {
    bool hit = false;
    for (const auto& [key, value] : rec.fields) {
      std::string hay = lower_ascii(value);
      for (const auto& needle : needles) {
        if (hay.find(needle) != std::string::npos) {
          hit = true;
          break;
        }
      }
      if (hit) break;
    }
    if (hit) kept.push_back(rec);
  }
  return kept;
}

std::vector<std::string> stratum_keys(const PredictionLog& log) {
  std::set<std::string> keys;
  for (const auto& r : log.records)
    for (const auto& [k, v] : r.strata) keys.insert(k);
  return {keys.begin(), keys.end()};
}

std::map<std::string, PredictionLog> partition_by_stratum(const PredictionLog& log,
                                                          const std::string& key) {
  auto keys = stratum_keys(log);
  if (std::find(keys.begin(), keys.end(), key) == keys.end())
    fail(Errc::unknown_stratum_key, "stratum key '" + key + "' not declared in log");
  std::map<std::string, PredictionLog> parts;
  for (const auto& r : log.records) {
    auto it = r.strata.find(key);
    std::string value = it != r.strata.end() ? it->second : "";
    auto& part = parts[value];
    if (part.records.empty()) {
      part.meta = log.meta;
      part.meta["stratum"] = key + "=" + value;
    }
    part.records.push_back(r);
  }
  return parts;
}

PredictionLog filter_split(const PredictionLog& log, Split split) {
  PredictionLog out;
  out.meta = log.meta;
  out.meta["split"] = split_name(split);
  for (const auto& r : log.records)
    if (r.split == split) out.records.push_back(r);
  return out;
}

}  // namespace uqeval
