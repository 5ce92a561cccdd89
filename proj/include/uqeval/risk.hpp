#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uqeval/core.hpp"

namespace uqeval {

/// Confidence band over the MC predictive mean. Membership is
/// lower <= mu < upper; closed_upper widens the last band to include upper.
struct BandSpec {
  double lower = 0.0;
  double upper = 1.0;
  bool closed_upper = false;
  double center() const { return (lower + upper) / 2.0; }
};

enum class PartitionScheme { median, top_bottom_q };

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::median;
  double q = 0.0;  // set iff scheme == top_bottom_q, in (0, 0.5]

  static PartitionSpec median_split() { return {PartitionScheme::median, 0.0}; }
  static PartitionSpec top_bottom(double q) { return {PartitionScheme::top_bottom_q, q}; }
  std::string name() const;
};

struct BandCell {
  BandSpec band;
  PartitionSpec partition;
  long n_band = 0;
  double delta_err = 0.0;  // Err(high variance) - Err(low variance)
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool significant = false;   // ci_low > 0, strictly
  bool insufficient = false;  // band population below n_band
  long skipped_resamples = 0;
};

struct BandSweepSummary {
  // Per partition column, computed across bands; insufficient cells excluded.
  std::vector<double> significant_fraction;
  std::vector<double> directional_consistency;  // fraction with delta_err > 0
  // Range of delta_err across partitions, per band: median and max over bands.
  double median_range = 0.0;
  double max_range = 0.0;
};

struct BandSweepGrid {
  std::vector<BandSpec> bands;
  std::vector<PartitionSpec> partitions;
  std::vector<BandCell> cells;  // band-major: cells[b * partitions.size() + p]
  std::vector<std::vector<size_t>> band_members;  // fixed subsample per band
  BandSweepSummary summary;

  const BandCell& cell(size_t band, size_t partition) const {
    return cells[band * partitions.size() + partition];
  }
};

struct BandSweepConfig {
  std::vector<BandSpec> bands;
  std::vector<PartitionSpec> partitions;
  long n_band = 0;  // 0: minimum population over nonempty requested bands
  int bootstrap_b = 1000;
  double level = 0.95;
  uint64_t seed = 42;
  double threshold = 0.5;
  bool symmetric_confidence = false;  // band on max(mu, 1-mu) instead of mu
  bool parallel = false;

  /// Four bands 0.55..0.95 and partitions {median, 40%, 30%, 20%}.
  static BandSweepConfig defaults();
};

/// 1 iff the thresholded prediction disagrees with the label.
std::vector<int> error_indicator(const PredictionLog& log, double threshold);

struct ErrorAuroc {
  bool defined = false;  // false when errors are all 0 or all 1
  double value = 0.0;
};

/// roc_auc of an uncertainty score against error indicators (errors are the
/// positive label); undefined inputs get an explicit marker, never 0.5.
ErrorAuroc error_auroc(std::span<const double> uncertainty, std::span<const int> errors);

struct GroupStats {
  long count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  bool defined = false;  // false when the group is empty
};

struct CorrectnessSplit {
  GroupStats correct;
  GroupStats incorrect;
};

/// Predictive entropy stratified by correctness at the given threshold.
CorrectnessSplit entropy_by_correctness(const PredictionLog& log, double threshold);

long band_population(const PredictionLog& log, const BandSpec& band, bool symmetric = false);

/// Record indices of a fixed uniformly random subsample of exactly n_band
/// band members (all of them when the band has exactly n_band). The same
/// subsample must be reused for every partition scheme of the band.
std::vector<size_t> band_select(const PredictionLog& log, const BandSpec& band, long n_band,
                                uint64_t seed, bool symmetric = false);

/// Split a band subsample into (low, high) variance groups. Ordering is the
/// stable (mc_var, id) sort, so equal variances split by id.
std::pair<std::vector<size_t>, std::vector<size_t>> variance_partition(
    const PredictionLog& log, std::span<const size_t> subsample, const PartitionSpec& partition);

/// Err(high) - Err(low), each an empirical error rate at the threshold.
double band_effect(const PredictionLog& log, std::span<const size_t> low_group,
                   std::span<const size_t> high_group, double threshold);

/// Full confidence-band x variance-partition sweep with per-cell bootstrap
/// CIs. Each cell's resampling stream derives from (seed, band, partition),
/// so serial and parallel execution produce identical grids.
BandSweepGrid band_sweep(const PredictionLog& log, const BandSweepConfig& config);

}  // namespace uqeval
