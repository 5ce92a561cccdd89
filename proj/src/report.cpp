#include "uqeval/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "uqeval/stochastic.hpp"

namespace uqeval {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string fixed6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fixed3(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string full(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
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

std::ofstream open_out(const std::string& path) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path);
  return out;
}

void dump_json(const ordered_json& j, const std::string& path) {
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

}  // namespace

std::string file_digest_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_json_text,
                    const std::vector<std::string>& input_paths) {
  ordered_json j;
  j["tool"] = "uqeval";
  j["version"] = kToolVersion;
  j["command"] = command;
  j["config"] = ordered_json::parse(config_json_text);
  ordered_json inputs = ordered_json::object();
  for (const auto& p : input_paths) inputs[p] = file_digest_hex(p);
  j["inputs"] = inputs;
  auto now = std::chrono::system_clock::now();
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  j["timestamp_unix"] = secs;
  dump_json(j, (fs::path(out_dir) / "manifest.json").string());
}

// ---------------------------------------------------------------- tables

namespace {

void metrics_row(std::ostream& out, const MethodMetrics& row) {
  const auto& r = row.report;
  out << csv_escape(row.method) << "," << r.n << "," << fixed6(r.acc) << ","
      << (r.auc_defined ? fixed6(r.auc) : "NA") << "," << fixed6(r.ece) << ","
      << fixed6(r.brier) << "," << fixed6(r.nll) << "," << r.confusion.tp << ","
      << r.confusion.fp << "," << r.confusion.tn << "," << r.confusion.fn << "\n";
}

ordered_json metrics_obj(const MethodMetrics& row) {
  const auto& r = row.report;
  ordered_json o;
  o["method"] = row.method;
  o["n"] = r.n;
  o["Acc"] = r.acc;
  if (r.auc_defined)
    o["AUC"] = r.auc;
  else
    o["AUC"] = nullptr;
  o["ECE"] = r.ece;
  o["Brier"] = r.brier;
  o["NLL"] = r.nll;
  o["TP"] = r.confusion.tp;
  o["FP"] = r.confusion.fp;
  o["TN"] = r.confusion.tn;
  o["FN"] = r.confusion.fn;
  o["threshold"] = r.threshold;
  o["ece_bins"] = r.ece_bins;
  return o;
}

}  // namespace

void write_metrics_csv(const std::vector<MethodMetrics>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "method,n,Acc,AUC,ECE,Brier,NLL,TP,FP,TN,FN\n";
  for (const auto& row : rows) metrics_row(out, row);
}

void write_metrics_json(const std::vector<MethodMetrics>& rows, const std::string& path) {
  ordered_json arr = ordered_json::array();
  for (const auto& row : rows) arr.push_back(metrics_obj(row));
  dump_json(arr, path);
}

void write_stratified_metrics_csv(const std::string& key,
                                  const std::vector<std::pair<std::string, MethodMetrics>>& rows,
                                  const std::string& path) {
  auto out = open_out(path);
  out << "method," << csv_escape(key) << ",n,Acc,AUC,ECE,Brier,NLL,TP,FP,TN,FN\n";
  for (const auto& [value, row] : rows) {
    const auto& r = row.report;
    out << csv_escape(row.method) << "," << csv_escape(value) << "," << r.n << ","
        << fixed6(r.acc) << "," << (r.auc_defined ? fixed6(r.auc) : "NA") << ","
        << fixed6(r.ece) << "," << fixed6(r.brier) << "," << fixed6(r.nll) << ","
        << r.confusion.tp << "," << r.confusion.fp << "," << r.confusion.tn << ","
        << r.confusion.fn << "\n";
  }
}

void write_error_auroc_csv(const std::vector<ErrorAurocRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "uncertainty_score,error_auroc\n";
  for (const auto& row : rows)
    out << csv_escape(row.score_name) << ","
        << (row.auroc.defined ? fixed6(row.auroc.value) : "NA") << "\n";
}

void write_error_auroc_json(const std::vector<ErrorAurocRow>& rows, const std::string& path) {
  ordered_json arr = ordered_json::array();
  for (const auto& row : rows) {
    ordered_json o;
    o["uncertainty_score"] = row.score_name;
    if (row.auroc.defined)
      o["error_auroc"] = row.auroc.value;
    else
      o["error_auroc"] = nullptr;
    arr.push_back(o);
  }
  dump_json(arr, path);
}

void write_band_grid_csv(const BandSweepGrid& grid, const std::string& path) {
  auto out = open_out(path);
  out << "band_center";
  for (const auto& p : grid.partitions) out << "," << p.name();
  out << "\n";
  for (size_t b = 0; b < grid.bands.size(); ++b) {
    out << fixed3(grid.bands[b].center());
    for (size_t p = 0; p < grid.partitions.size(); ++p) {
      const auto& cell = grid.cell(b, p);
      if (cell.insufficient)
        out << ",insufficient";
      else
        out << "," << csv_escape(fixed3(cell.delta_err) + " [" + fixed3(cell.ci_low) + ", " +
                                 fixed3(cell.ci_high) + "]");
    }
    out << "\n";
  }
  out << "significant_fraction";
  for (double v : grid.summary.significant_fraction) out << "," << fixed3(v);
  out << "\n";
  out << "directional_consistency";
  for (double v : grid.summary.directional_consistency) out << "," << fixed3(v);
  out << "\n";
  out << "delta_range_median," << fixed3(grid.summary.median_range) << "\n";
  out << "delta_range_max," << fixed3(grid.summary.max_range) << "\n";
}

void write_band_grid_json(const BandSweepGrid& grid, const std::string& path) {
  ordered_json j;
  ordered_json cells = ordered_json::array();
  for (size_t b = 0; b < grid.bands.size(); ++b)
    for (size_t p = 0; p < grid.partitions.size(); ++p) {
      const auto& cell = grid.cell(b, p);
      ordered_json o;
      o["band_center"] = grid.bands[b].center();
      o["band_lower"] = grid.bands[b].lower;
      o["band_upper"] = grid.bands[b].upper;
      o["partition"] = grid.partitions[p].name();
      o["n_band"] = cell.n_band;
      o["insufficient"] = cell.insufficient;
      if (!cell.insufficient) {
        o["delta_err"] = cell.delta_err;
        o["ci_low"] = cell.ci_low;
        o["ci_high"] = cell.ci_high;
        o["significant"] = cell.significant;
        o["skipped_resamples"] = cell.skipped_resamples;
      }
      cells.push_back(o);
    }
  j["cells"] = cells;
  ordered_json summary;
  summary["significant_fraction"] = grid.summary.significant_fraction;
  summary["directional_consistency"] = grid.summary.directional_consistency;
  summary["delta_range_median"] = grid.summary.median_range;
  summary["delta_range_max"] = grid.summary.max_range;
  j["summary"] = summary;
  dump_json(j, path);
}

void write_band_plot_csv(const BandSweepGrid& grid, const std::string& path) {
  auto out = open_out(path);
  out << "band_center,partition,n_band,delta_err,ci_low,ci_high,significant,insufficient\n";
  for (size_t b = 0; b < grid.bands.size(); ++b)
    for (size_t p = 0; p < grid.partitions.size(); ++p) {
      const auto& cell = grid.cell(b, p);
      out << full(grid.bands[b].center()) << "," << grid.partitions[p].name() << ","
          << cell.n_band << "," << full(cell.delta_err) << "," << full(cell.ci_low) << ","
          << full(cell.ci_high) << "," << (cell.significant ? 1 : 0) << ","
          << (cell.insufficient ? 1 : 0) << "\n";
    }
}

void write_t_sensitivity_csv(const std::vector<TSensitivityRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "T,Acc,ECE,Brier\n";
  for (const auto& r : rows)
    out << r.t << "," << fixed6(r.acc) << "," << fixed6(r.ece) << "," << fixed6(r.brier) << "\n";
}

void write_t_sensitivity_json(const std::vector<TSensitivityRow>& rows, const std::string& path) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json o;
    o["T"] = r.t;
    o["Acc"] = r.acc;
    o["ECE"] = r.ece;
    o["Brier"] = r.brier;
    arr.push_back(o);
  }
  dump_json(arr, path);
}

void write_dropout_ablation_csv(const std::vector<DropoutAblationRow>& rows,
                                const std::string& path) {
  auto out = open_out(path);
  out << "p,Acc,ECE,Brier,mean_var\n";
  for (const auto& r : rows)
    out << fixed3(r.p) << "," << fixed6(r.acc) << "," << fixed6(r.ece) << ","
        << fixed6(r.brier) << "," << fixed6(r.mean_var) << "\n";
}

void write_dropout_ablation_json(const std::vector<DropoutAblationRow>& rows,
                                 const std::string& path) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json o;
    o["p"] = r.p;
    o["Acc"] = r.acc;
    o["ECE"] = r.ece;
    o["Brier"] = r.brier;
    o["mean_var"] = r.mean_var;
    arr.push_back(o);
  }
  dump_json(arr, path);
}

void write_bootstrap_csv(const std::vector<BootstrapRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "method,Acc_mean,Acc_lo,Acc_hi,ECE_mean,ECE_lo,ECE_hi,Brier_mean,Brier_lo,Brier_hi\n";
  for (const auto& r : rows)
    out << csv_escape(r.method) << "," << fixed6(r.acc.mean) << "," << fixed6(r.acc.ci_low) << ","
        << fixed6(r.acc.ci_high) << "," << fixed6(r.ece.mean) << "," << fixed6(r.ece.ci_low)
        << "," << fixed6(r.ece.ci_high) << "," << fixed6(r.brier.mean) << ","
        << fixed6(r.brier.ci_low) << "," << fixed6(r.brier.ci_high) << "\n";
}

void write_bootstrap_json(const std::vector<BootstrapRow>& rows, const std::string& path) {
  auto stat_obj = [](const BootstrapResult& r) {
    ordered_json o;
    o["point"] = r.point;
    o["mean"] = r.mean;
    o["ci_low"] = r.ci_low;
    o["ci_high"] = r.ci_high;
    o["B"] = r.b;
    o["level"] = r.level;
    o["skipped"] = r.skipped;
    return o;
  };
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json o;
    o["method"] = r.method;
    o["Acc"] = stat_obj(r.acc);
    o["ECE"] = stat_obj(r.ece);
    o["Brier"] = stat_obj(r.brier);
    arr.push_back(o);
  }
  dump_json(arr, path);
}

void write_delong_csv(const std::vector<DeLongRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "comparison,AUC_ref,AUC_cmp,delta_AUC,p,decision\n";
  for (const auto& r : rows) {
    out << csv_escape(r.comparison) << "," << fixed6(r.result.auc_a) << ","
        << fixed6(r.result.auc_b) << "," << fixed6(r.result.delta) << ",";
    if (!r.applicable)
      out << ",not applicable\n";
    else
      out << fixed6(r.result.p_two_sided) << ","
          << (r.result.p_two_sided < r.alpha ? "sig." : "n.s.") << "\n";
  }
}

void write_delong_json(const std::vector<DeLongRow>& rows, const std::string& path) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json o;
    o["comparison"] = r.comparison;
    o["AUC_ref"] = r.result.auc_a;
    o["AUC_cmp"] = r.result.auc_b;
    o["delta_AUC"] = r.result.delta;
    if (r.applicable) {
      o["p"] = r.result.p_two_sided;
      o["z"] = r.result.z;
      o["var_delta"] = r.result.var_delta;
      o["degenerate"] = r.result.degenerate;
      o["decision"] = r.result.p_two_sided < r.alpha ? "sig." : "n.s.";
    } else {
      o["p"] = nullptr;
      o["decision"] = "not applicable";
    }
    o["alpha"] = r.alpha;
    arr.push_back(o);
  }
  dump_json(arr, path);
}

// --------------------------------------------------------------- figures

namespace {

// Fixed 480x360 canvas with a 60px margin; x and y in [0,1] data space.
struct SvgPlot {
  std::string body;
  static constexpr double W = 480, H = 360, M = 60;

  static double px(double x) { return M + x * (W - 2 * M); }
  static double py(double y) { return H - M - y * (H - 2 * M); }

  void polyline(const std::vector<std::pair<double, double>>& pts, const char* color) {
    body += "  <polyline fill=\"none\" stroke=\"";
    body += color;
    body += "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(x), py(y));
      body += buf;
    }
    body += "\"/>\n";
  }

  void bar(double x0, double x1, double height, const char* color, double opacity) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "  <rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\" "
                  "fill-opacity=\"%.2f\"/>\n",
                  px(x0), py(height), px(x1) - px(x0), py(0) - py(height), color, opacity);
    body += buf;
  }

  void text(double x, double y, const std::string& s) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "  <text x=\"%.2f\" y=\"%.2f\" font-size=\"12\">", x, y);
    body += buf;
    body += s;
    body += "</text>\n";
  }

  void save(const std::string& path, const std::string& x_label, const std::string& y_label) {
    auto out = open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"360\" "
           "viewBox=\"0 0 480 360\">\n"
        << "  <rect width=\"480\" height=\"360\" fill=\"white\"/>\n"
        << "  <line x1=\"60\" y1=\"300\" x2=\"420\" y2=\"300\" stroke=\"black\"/>\n"
        << "  <line x1=\"60\" y1=\"60\" x2=\"60\" y2=\"300\" stroke=\"black\"/>\n";
    out << body;
    out << "  <text x=\"200\" y=\"340\" font-size=\"12\">" << x_label << "</text>\n"
        << "  <text x=\"12\" y=\"180\" font-size=\"12\" transform=\"rotate(-90 12 180)\">"
        << y_label << "</text>\n"
        << "</svg>\n";
  }
};

PredictionLog ensure_probs(const PredictionLog& log) {
  if (!log.empty() && !log.records.front().prob && log.has_mc()) return summarize_log(log);
  return log;
}

void figure_roc_like(const RocCurve& curve, const std::string& stem, const char* color) {
  auto out = open_out(stem + ".csv");
  out << "fpr,tpr,threshold\n";
  for (const auto& pt : curve.points)
    out << full(pt.fpr) << "," << full(pt.tpr) << "," << full(pt.threshold) << "\n";
  out.close();

  SvgPlot plot;
  plot.polyline({{0, 0}, {1, 1}}, "#bbbbbb");
  std::vector<std::pair<double, double>> pts;
  pts.reserve(curve.points.size());
  for (const auto& pt : curve.points) pts.push_back({pt.fpr, pt.tpr});
  plot.polyline(pts, color);
  plot.text(SvgPlot::px(0.05), SvgPlot::py(0.92), "AUC " + fixed6(curve.area));
  plot.save(stem + ".svg", "false positive rate", "true positive rate");
}

}  // namespace

std::optional<FigureKind> figure_kind_from(std::string_view name) {
  if (name == "reliability") return FigureKind::reliability;
  if (name == "roc") return FigureKind::roc;
  if (name == "histogram") return FigureKind::histogram;
  if (name == "entropy-correctness") return FigureKind::entropy_correctness;
  if (name == "error-roc") return FigureKind::error_roc;
  return std::nullopt;
}

std::string figure_kind_name(FigureKind kind) {
  switch (kind) {
    case FigureKind::reliability: return "reliability";
    case FigureKind::roc: return "roc";
    case FigureKind::histogram: return "histogram";
    case FigureKind::entropy_correctness: return "entropy-correctness";
    case FigureKind::error_roc: return "error-roc";
  }
  return "";
}

void write_figure(const PredictionLog& log, FigureKind kind, const std::string& stem,
                  double threshold, int ece_bins) {
  PredictionLog ready = ensure_probs(log);
  auto probs = probs_of(ready);
  auto labels = labels_of(ready);

  switch (kind) {
    case FigureKind::reliability: {
      auto bins = reliability_bins(probs, labels, ece_bins, EceMode::positive_prob);
      auto out = open_out(stem + ".csv");
      out << "edge_lo,edge_hi,count,mean_prob,pos_rate\n";
      for (const auto& b : bins.bins)
        out << full(b.lo) << "," << full(b.hi) << "," << b.count << "," << full(b.mean_conf)
            << "," << full(b.empirical) << "\n";
      out.close();
      SvgPlot plot;
      plot.polyline({{0, 0}, {1, 1}}, "#bbbbbb");
      long max_count = 1;
      for (const auto& b : bins.bins) max_count = std::max(max_count, b.count);
      for (const auto& b : bins.bins)
        if (b.count > 0)
          plot.bar(b.lo, b.hi, 0.3 * static_cast<double>(b.count) / max_count, "#7799cc", 0.4);
      std::vector<std::pair<double, double>> pts;
      for (const auto& b : bins.bins)
        if (b.count > 0) pts.push_back({b.mean_conf, b.empirical});
      plot.polyline(pts, "#cc3333");
      plot.text(SvgPlot::px(0.05), SvgPlot::py(0.92), "ECE " + fixed6(bins.ece()));
      plot.save(stem + ".svg", "mean predicted probability", "empirical positive rate");
      break;
    }
    case FigureKind::roc:
      figure_roc_like(roc_curve(probs, labels), stem, "#2255aa");
      break;
    case FigureKind::histogram: {
      auto hist = score_histogram(probs, labels, ece_bins);
      int n_bins = static_cast<int>(hist.real_counts.size());
      auto out = open_out(stem + ".csv");
      out << "edge_lo,edge_hi,real_count,fake_count\n";
      for (int b = 0; b < n_bins; ++b)
        out << full(static_cast<double>(b) / n_bins) << ","
            << full(b + 1 == n_bins ? 1.0 : static_cast<double>(b + 1) / n_bins) << ","
            << hist.real_counts[b] << "," << hist.fake_counts[b] << "\n";
      out.close();
      long max_count = 1;
      for (int b = 0; b < n_bins; ++b)
        max_count = std::max({max_count, hist.real_counts[b], hist.fake_counts[b]});
      SvgPlot plot;
      for (int b = 0; b < n_bins; ++b) {
        double lo = static_cast<double>(b) / n_bins, hi = static_cast<double>(b + 1) / n_bins;
        plot.bar(lo, hi, 0.9 * static_cast<double>(hist.real_counts[b]) / max_count, "#33aa55", 0.5);
        plot.bar(lo, hi, 0.9 * static_cast<double>(hist.fake_counts[b]) / max_count, "#aa3355", 0.5);
      }
      plot.save(stem + ".svg", "predicted fake probability", "count (scaled)");
      break;
    }
    case FigureKind::entropy_correctness: {
      auto split = entropy_by_correctness(ready, threshold);
      auto out = open_out(stem + ".csv");
      out << "group,count,mean,median,q1,q3\n";
      auto row = [&](const char* name, const GroupStats& g) {
        out << name << "," << g.count;
        if (g.defined)
          out << "," << full(g.mean) << "," << full(g.median) << "," << full(g.q1) << ","
              << full(g.q3);
        else
          out << ",,,,";
        out << "\n";
      };
      row("correct", split.correct);
      row("incorrect", split.incorrect);
      out.close();
      SvgPlot plot;
      double lim = std::log(2.0);
      auto box = [&](double x0, double x1, const GroupStats& g, const char* color) {
        if (!g.defined) return;
        plot.bar(x0, x1, g.q3 / lim, color, 0.25);
        plot.bar(x0, x1, g.q1 / lim, "#ffffff", 1.0);
        plot.polyline({{x0, g.median / lim}, {x1, g.median / lim}}, color);
      };
      box(0.15, 0.35, split.correct, "#33aa55");
      box(0.65, 0.85, split.incorrect, "#aa3355");
      plot.text(SvgPlot::px(0.2), SvgPlot::py(-0.07), "correct");
      plot.text(SvgPlot::px(0.68), SvgPlot::py(-0.07), "incorrect");
      plot.save(stem + ".svg", "", "predictive entropy / ln 2");
      break;
    }
    case FigureKind::error_roc: {
      std::vector<double> unc;
      unc.reserve(ready.size());
      for (const auto& r : ready.records) {
        if (!r.mc_entropy)
          fail(Errc::missing_fields, "error-roc needs mc_entropy (id=" + r.id + ")");
        unc.push_back(*r.mc_entropy);
      }
      auto errors = error_indicator(ready, threshold);
      long n_err = 0;
      for (int e : errors) n_err += e;
      if (n_err == 0 || n_err == static_cast<long>(errors.size()))
        fail(Errc::degenerate_labels, "error-roc undefined: errors are single-class");
      figure_roc_like(roc_curve(unc, errors), stem, "#aa7722");
      break;
    }
  }
}

// -------------------------------------------------------------- protocol

ProtocolConfig ProtocolConfig::from_json_text(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::parse_error, std::string("protocol config: ") + e.what());
  }
  ProtocolConfig c;
  c.n = j.value("n", c.n);
  c.overlap = j.value("overlap", c.overlap);
  c.ood_shift = j.value("ood_shift", c.ood_shift);
  c.seed = j.value("seed", c.seed);
  c.k = j.value("k", c.k);
  c.t = j.value("t", c.t);
  c.t_max = j.value("t_max", c.t_max);
  if (j.contains("t_values")) c.t_values = j["t_values"].get<std::vector<int>>();
  if (j.contains("dropout_grid")) c.dropout_grid = j["dropout_grid"].get<std::vector<double>>();
  c.dropout_p = j.value("dropout_p", c.dropout_p);
  c.hidden = j.value("hidden", c.hidden);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.bootstrap_b = j.value("bootstrap_b", c.bootstrap_b);
  c.level = j.value("level", c.level);
  c.threshold = j.value("threshold", c.threshold);
  c.ece_bins = j.value("ece_bins", c.ece_bins);
  return c;
}

std::string ProtocolConfig::to_json_text() const {
  ordered_json j;
  j["n"] = n;
  j["overlap"] = overlap;
  j["ood_shift"] = ood_shift;
  j["seed"] = seed;
  j["k"] = k;
  j["t"] = t;
  j["t_max"] = t_max;
  j["t_values"] = t_values;
  j["dropout_grid"] = dropout_grid;
  j["dropout_p"] = dropout_p;
  j["hidden"] = hidden;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["batch_size"] = batch_size;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["bootstrap_b"] = bootstrap_b;
  j["level"] = level;
  j["threshold"] = threshold;
  j["ece_bins"] = ece_bins;
  return j.dump(2);
}

namespace {

struct StageRunner {
  std::ostream* progress;
  template <class F>
  void operator()(const char* name, F&& f) {
    if (progress) *progress << "[protocol] " << name << "\n" << std::flush;
    try {
      f();
    } catch (const Error& e) {
      throw Error(e.code(), std::string("stage '") + name + "' failed: " + e.what());
    }
  }
};

double mean_mc_var(const PredictionLog& log) {
  double sum = 0.0;
  for (const auto& r : log.records) sum += r.mc_var.value_or(0.0);
  return log.empty() ? 0.0 : sum / static_cast<double>(log.size());
}

}  // namespace

void run_protocol(const ProtocolConfig& cfg, const std::string& out_dir,
                  std::ostream* progress) {
  fs::create_directories(out_dir);
  fs::path dir(out_dir);
  StageRunner stage{progress};

  if (cfg.t > cfg.t_max) fail(Errc::out_of_range, "t exceeds t_max");
  for (int tv : cfg.t_values)
    if (tv < 1 || tv > cfg.t_max) fail(Errc::out_of_range, "t_values entry outside [1, t_max]");

  TrainConfig tc;
  tc.lr = cfg.lr;
  tc.weight_decay = cfg.weight_decay;
  tc.batch_size = cfg.batch_size;
  tc.max_epochs = cfg.max_epochs;
  tc.patience = cfg.patience;
  tc.seed = cfg.seed;
  tc.dropout_p = cfg.dropout_p;
  tc.hidden = cfg.hidden;

  SyntheticDataset data;
  stage("simulate", [&] {
    SyntheticConfig sc;
    sc.n = cfg.n;
    sc.seed = cfg.seed;
    sc.overlap = cfg.overlap;
    sc.ood_shift = cfg.ood_shift;
    data = gen_synthetic(sc);
    write_dataset(data, (dir / "dataset.jsonl").string());
  });

  ToyModel model;
  std::vector<ToyModel> members;
  stage("train", [&] {
    model = train(data, tc).model;
    save_model(model, (dir / "model.json").string());
    std::vector<uint64_t> seeds;
    for (int k = 0; k < cfg.k; ++k) seeds.push_back(derive_seed(cfg.seed, 200 + k));
    members = train_ensemble(data, tc, seeds);
    for (int k = 0; k < cfg.k; ++k)
      save_model(members[k], (dir / ("model_member_" + std::to_string(k) + ".json")).string());
  });

  PredictionLog det_all, mc_all, mc_all_ood;
  std::vector<PredictionLog> member_all;
  stage("predict", [&] {
    det_all = predict_log(model, data, PredictMode::deterministic, 0, std::nullopt, cfg.seed);
    mc_all = predict_log(model, data, PredictMode::mc, cfg.t_max, std::nullopt,
                         derive_seed(cfg.seed, 1));
    for (int k = 0; k < cfg.k; ++k)
      member_all.push_back(predict_log(members[k], data, PredictMode::ensemble_member, 0,
                                       std::nullopt, derive_seed(cfg.seed, 300 + k)));
    write_log(det_all, (dir / "logs" / "predictions_det.jsonl").string(), LogFormat::jsonl);
    write_log(mc_all, (dir / "logs" / "predictions_mc.jsonl").string(), LogFormat::jsonl);
    for (int k = 0; k < cfg.k; ++k)
      write_log(member_all[k],
                (dir / "logs" / ("predictions_member_" + std::to_string(k) + ".jsonl")).string(),
                LogFormat::jsonl);
  });

  Temperature temp;
  PredictionLog det_test, det_ood, temp_test, temp_ood, mc50_test, mc50_ood;
  stage("calibrate", [&] {
    det_test = filter_split(det_all, Split::test);
    det_ood = filter_split(det_all, Split::ood);
    mc50_test = filter_split(mc_all, Split::test);
    mc50_ood = filter_split(mc_all, Split::ood);
    temp = fit_temperature(filter_split(det_all, Split::val));
    temp_test = apply_temperature(det_test, temp);
    temp_ood = apply_temperature(det_ood, temp);
    ordered_json tj;
    tj["tau"] = temp.tau;
    tj["alpha"] = temp.alpha;
    tj["val_nll_at_tau"] = temp.val_nll_at_tau;
    tj["at_bound"] = temp.at_bound;
    dump_json(tj, (dir / "tables" / "temperature.json").string());
    write_log(temp_test, (dir / "logs" / "predictions_temp_test.jsonl").string(),
              LogFormat::jsonl);
  });

  std::string t_label = std::to_string(cfg.t);
  std::string mc_mean_name = "MC Dropout T=" + t_label + " mean";
  std::string ens_name = "Ensemble surrogate (K=" + std::to_string(cfg.k) + ")";

  auto method_logs = [&](const PredictionLog& det, const PredictionLog& temp_log,
                         const PredictionLog& mc50,
                         Split split) -> std::vector<std::pair<std::string, PredictionLog>> {
    std::vector<PredictionLog> member_split;
    for (const auto& m : member_all) member_split.push_back(filter_split(m, split));
    return {
        {"Deterministic", det},
        {"TempScaling", temp_log},
        {"MC Dropout T=1", summarize_log(mc50, 1)},
        {mc_mean_name, summarize_log(mc50, cfg.t)},
        {ens_name, ensemble_log(member_split)},
    };
  };

  std::vector<std::pair<std::string, PredictionLog>> test_logs, ood_logs;
  stage("evaluate", [&] {
    test_logs = method_logs(det_test, temp_test, mc50_test, Split::test);
    ood_logs = method_logs(det_ood, temp_ood, mc50_ood, Split::ood);
    std::vector<MethodMetrics> test_rows, ood_rows;
    for (const auto& [name, log] : test_logs)
      test_rows.push_back({name, metric_report(log, cfg.threshold, cfg.ece_bins)});
    for (const auto& [name, log] : ood_logs)
      ood_rows.push_back({name, metric_report(log, cfg.threshold, cfg.ece_bins)});
    write_metrics_csv(test_rows, (dir / "tables" / "metrics_test.csv").string());
    write_metrics_json(test_rows, (dir / "tables" / "metrics_test.json").string());
    write_metrics_csv(ood_rows, (dir / "tables" / "metrics_ood.csv").string());
    write_metrics_json(ood_rows, (dir / "tables" / "metrics_ood.json").string());

    // Generator-analog stratification over the source field, test split.
    std::vector<std::pair<std::string, MethodMetrics>> strat_rows;
    for (const auto& [name, log] : test_logs)
      for (const auto& [value, part] : partition_by_stratum(log, "source"))
        strat_rows.push_back({value, {name, metric_report(part, cfg.threshold, cfg.ece_bins)}});
    write_stratified_metrics_csv("source", strat_rows,
                                 (dir / "tables" / "metrics_test_by_source.csv").string());
  });

  PredictionLog mc_t_test;
  stage("uncertainty-error", [&] {
    mc_t_test = summarize_log(mc50_test, cfg.t);
    auto errors = error_indicator(mc_t_test, cfg.threshold);
    std::vector<double> entropy, variance;
    for (const auto& r : mc_t_test.records) {
      entropy.push_back(*r.mc_entropy);
      variance.push_back(*r.mc_var);
    }
    const auto& ens = test_logs.back().second;
    auto ens_errors = error_indicator(ens, cfg.threshold);
    std::vector<double> ens_var;
    for (const auto& r : ens.records) ens_var.push_back(*r.mc_var);

    std::vector<ErrorAurocRow> rows = {
        {"entropy_T" + t_label, error_auroc(entropy, errors)},
        {"variance_T" + t_label, error_auroc(variance, errors)},
        {"variance_ensemble_surrogate", error_auroc(ens_var, ens_errors)},
    };
    write_error_auroc_csv(rows, (dir / "tables" / "error_auroc.csv").string());
    write_error_auroc_json(rows, (dir / "tables" / "error_auroc.json").string());
  });

  stage("sweep-bands", [&] {
    BandSweepConfig bc = BandSweepConfig::defaults();
    bc.bootstrap_b = cfg.bootstrap_b;
    bc.level = cfg.level;
    bc.seed = derive_seed(cfg.seed, 500);
    bc.threshold = cfg.threshold;
    auto grid = band_sweep(mc_t_test, bc);
    write_band_grid_csv(grid, (dir / "tables" / "band_sweep.csv").string());
    write_band_grid_json(grid, (dir / "tables" / "band_sweep.json").string());
    write_band_plot_csv(grid, (dir / "figures" / "band_effect.csv").string());
  });

  stage("sweep-T", [&] {
    std::vector<TSensitivityRow> rows;
    for (int tv : cfg.t_values) {
      auto log = summarize_log(mc50_test, tv);
      auto rep = metric_report(log, cfg.threshold, cfg.ece_bins);
      rows.push_back({tv, rep.acc, rep.ece, rep.brier});
    }
    write_t_sensitivity_csv(rows, (dir / "tables" / "t_sensitivity.csv").string());
    write_t_sensitivity_json(rows, (dir / "tables" / "t_sensitivity.json").string());
  });

  stage("sweep-dropout", [&] {
    std::vector<DropoutAblationRow> rows;
    uint64_t seed = derive_seed(cfg.seed, 400);  // shared across p values
    for (double p : cfg.dropout_grid) {
      auto log = predict_log(model, data, PredictMode::mc, cfg.t, p, seed);
      auto summarized = summarize_log(filter_split(log, Split::test));
      auto rep = metric_report(summarized, cfg.threshold, cfg.ece_bins);
      rows.push_back({p, rep.acc, rep.ece, rep.brier, mean_mc_var(summarized)});
    }
    write_dropout_ablation_csv(rows, (dir / "tables" / "dropout_ablation.csv").string());
    write_dropout_ablation_json(rows, (dir / "tables" / "dropout_ablation.json").string());
  });

  stage("bootstrap", [&] {
    Statistic acc_stat = [&](const PredictionLog& log) {
      return accuracy(confusion_at_threshold(log, cfg.threshold));
    };
    Statistic ece_stat = [&](const PredictionLog& log) {
      return ece(probs_of(log), labels_of(log), cfg.ece_bins, EceMode::positive_prob);
    };
    Statistic brier_stat = [&](const PredictionLog& log) {
      return brier(probs_of(log), labels_of(log));
    };
    std::vector<BootstrapRow> rows;
    for (size_t i = 0; i < test_logs.size(); ++i) {
      const auto& [name, log] = test_logs[i];
      uint64_t s = derive_seed(cfg.seed, 600 + i);
      rows.push_back({name,
                      bootstrap_ci(acc_stat, log, cfg.bootstrap_b, cfg.level, derive_seed(s, 0)),
                      bootstrap_ci(ece_stat, log, cfg.bootstrap_b, cfg.level, derive_seed(s, 1)),
                      bootstrap_ci(brier_stat, log, cfg.bootstrap_b, cfg.level, derive_seed(s, 2))});
    }
    write_bootstrap_csv(rows, (dir / "tables" / "bootstrap_metrics.csv").string());
    write_bootstrap_json(rows, (dir / "tables" / "bootstrap_metrics.json").string());
  });

  stage("compare", [&] {
    auto labels = labels_of(ood_logs.front().second);
    auto det_scores = probs_of(ood_logs[0].second);
    std::vector<DeLongRow> rows;
    auto add = [&](const std::string& name, const PredictionLog& log) {
      rows.push_back({name + " vs Det", true,
                      delong_test(det_scores, probs_of(log), labels), 0.05});
    };
    add("MC Dropout T=1", ood_logs[2].second);
    add("MC Dropout T=" + t_label + " (mean)", ood_logs[3].second);
    add("Ensemble (K=" + std::to_string(cfg.k) + ")", ood_logs[4].second);
    // Rank-preserving by construction: delta is identically zero.
    DeLongRow temp_row;
    temp_row.comparison = "Temp Scaling vs Det";
    temp_row.applicable = false;
    temp_row.result.auc_a = rows[0].result.auc_a;
    temp_row.result.auc_b = rows[0].result.auc_a;
    temp_row.result.delta = 0.0;
    rows.push_back(temp_row);
    write_delong_csv(rows, (dir / "tables" / "delong_ood.csv").string());
    write_delong_json(rows, (dir / "tables" / "delong_ood.json").string());
  });

  stage("figures", [&] {
    auto fig = [&](const PredictionLog& log, FigureKind kind, const std::string& name) {
      write_figure(log, kind, (dir / "figures" / name).string(), cfg.threshold, cfg.ece_bins);
    };
    fig(det_test, FigureKind::reliability, "reliability_det");
    fig(temp_test, FigureKind::reliability, "reliability_temp");
    fig(mc_t_test, FigureKind::reliability, "reliability_mc");
    fig(det_test, FigureKind::roc, "roc_det");
    fig(det_test, FigureKind::histogram, "score_histogram_det");
    fig(mc_t_test, FigureKind::entropy_correctness, "entropy_correctness_mc");
    try {
      fig(mc_t_test, FigureKind::error_roc, "error_roc_mc");
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_labels) throw;  // zero errors: no curve
    }
  });

  stage("manifest", [&] {
    write_manifest(out_dir, "protocol", cfg.to_json_text(), {});
  });
}

}  // namespace uqeval
