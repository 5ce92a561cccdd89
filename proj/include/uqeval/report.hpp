#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "uqeval/calibrate.hpp"
#include "uqeval/ingest.hpp"
#include "uqeval/metrics.hpp"
#include "uqeval/risk.hpp"
#include "uqeval/stats.hpp"
#include "uqeval/toymodel.hpp"

namespace uqeval {

inline constexpr const char* kToolVersion = "0.1.0";

/// FNV-1a 64 digest of a file's bytes, as 16 hex chars.
std::string file_digest_hex(const std::string& path);

/// manifest.json: command, config snapshot, seeds, input digests, tool
/// version and timestamp. Everything except the timestamp reruns
/// byte-identically under a fixed seed.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_json_text,
                    const std::vector<std::string>& input_paths);

// ---------------------------------------------------------------- tables

struct MethodMetrics {
  std::string method;
  MetricReport report;
};

/// Columns: method,n,Acc,AUC,ECE,Brier,NLL,TP,FP,TN,FN. Undefined AUC
/// serializes as NA (csv) / null (json).
void write_metrics_csv(const std::vector<MethodMetrics>& rows, const std::string& path);
void write_metrics_json(const std::vector<MethodMetrics>& rows, const std::string& path);

/// Stratified layout: method,<key>,n,Acc,... one row per stratum value.
void write_stratified_metrics_csv(const std::string& key,
                                  const std::vector<std::pair<std::string, MethodMetrics>>& rows,
                                  const std::string& path);

struct ErrorAurocRow {
  std::string score_name;
  ErrorAuroc auroc;
};
void write_error_auroc_csv(const std::vector<ErrorAurocRow>& rows, const std::string& path);
void write_error_auroc_json(const std::vector<ErrorAurocRow>& rows, const std::string& path);

/// Grid table shaped like the band sweep: one row per band center, one
/// column per partition, cell "delta [lo, hi]"; summary rows appended.
void write_band_grid_csv(const BandSweepGrid& grid, const std::string& path);
void write_band_grid_json(const BandSweepGrid& grid, const std::string& path);
/// Long form for the effect plot: band_center,partition,n_band,delta_err,
/// ci_low,ci_high,significant,insufficient at full precision.
void write_band_plot_csv(const BandSweepGrid& grid, const std::string& path);

struct TSensitivityRow {
  int t = 0;
  double acc = 0, ece = 0, brier = 0;
};
void write_t_sensitivity_csv(const std::vector<TSensitivityRow>& rows, const std::string& path);
void write_t_sensitivity_json(const std::vector<TSensitivityRow>& rows, const std::string& path);

struct DropoutAblationRow {
  double p = 0;
  double acc = 0, ece = 0, brier = 0, mean_var = 0;
};
void write_dropout_ablation_csv(const std::vector<DropoutAblationRow>& rows,
                                const std::string& path);
void write_dropout_ablation_json(const std::vector<DropoutAblationRow>& rows,
                                 const std::string& path);

struct BootstrapRow {
  std::string method;
  BootstrapResult acc, ece, brier;
};
void write_bootstrap_csv(const std::vector<BootstrapRow>& rows, const std::string& path);
void write_bootstrap_json(const std::vector<BootstrapRow>& rows, const std::string& path);

struct DeLongRow {
  std::string comparison;
  bool applicable = true;  // false for rank-preserving transforms
  DeLongResult result;
  double alpha = 0.05;
};
void write_delong_csv(const std::vector<DeLongRow>& rows, const std::string& path);
void write_delong_json(const std::vector<DeLongRow>& rows, const std::string& path);

// --------------------------------------------------------------- figures

enum class FigureKind { reliability, roc, histogram, entropy_correctness, error_roc };

std::optional<FigureKind> figure_kind_from(std::string_view name);
std::string figure_kind_name(FigureKind kind);

/// Emit <stem>.csv (data sufficient to recompute the depicted metric) and
/// <stem>.svg (static axes + polyline/bars) for one kind.
void write_figure(const PredictionLog& log, FigureKind kind, const std::string& stem,
                  double threshold, int ece_bins);

// -------------------------------------------------------------- protocol

struct ProtocolConfig {
  long n = 4000;
  double overlap = 0.5;
  double ood_shift = 1.0;
  uint64_t seed = 42;
  int k = 5;
  int t = 20;
  int t_max = 50;
  std::vector<int> t_values = {1, 5, 10, 20, 50};
  std::vector<double> dropout_grid = {0.0, 0.1, 0.2, 0.5};
  double dropout_p = 0.1;
  int hidden = 16;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 32;
  int max_epochs = 30;
  int patience = 5;
  int bootstrap_b = 1000;
  double level = 0.95;
  double threshold = 0.5;
  int ece_bins = 15;

  static ProtocolConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

/// End-to-end run: simulate, train (primary + K members), predict under all
/// inference modes, calibrate, evaluate, sweeps, paired tests, figures,
/// manifest. Re-running with the same config reproduces every non-timestamp
/// byte. Stage failures are rethrown with the stage name prefixed.
void run_protocol(const ProtocolConfig& config, const std::string& out_dir,
                  std::ostream* progress = nullptr);

}  // namespace uqeval
