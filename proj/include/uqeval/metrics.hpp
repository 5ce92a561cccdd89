#pragma once

#include <span>
#include <vector>

#include "uqeval/core.hpp"

namespace uqeval {

/// Binning coordinate for calibration. positive_prob bins s(x) over [0,1]
/// against the empirical positive rate; max_confidence bins max(p, 1-p) over
/// [0.5,1] against accuracy at threshold 0.5.
enum class EceMode { positive_prob, max_confidence };

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;
};

/// Operating points swept over the score, highest threshold first.
/// Endpoints are (0,0) and (1,1); ties collapse into single segments.
struct RocCurve {
  std::vector<RocPoint> points;
  double area = 0.0;  // trapezoidal; equals the Mann-Whitney statistic
};

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  long count = 0;
  double mean_conf = 0.0;  // mean of the binned coordinate
  double empirical = 0.0;  // positive rate or accuracy, by mode
};

struct ReliabilityBins {
  EceMode mode = EceMode::positive_prob;
  long n = 0;
  std::vector<ReliabilityBin> bins;
  /// Bin-weighted mean absolute confidence gap; the ece() entry point below
  /// computes through this, so the two are exactly consistent.
  double ece() const;
};

struct ScoreHistogram {
  std::vector<long> real_counts;  // label 0
  std::vector<long> fake_counts;  // label 1
};

struct MetricReport {
  double acc = 0.0;
  double auc = 0.0;
  bool auc_defined = false;  // false on single-class logs
  double ece = 0.0;
  double brier = 0.0;
  double nll = 0.0;
  ConfusionCounts confusion;
  long n = 0;
  double threshold = 0.5;
  int ece_bins = 15;
};

ConfusionCounts confusion_at_threshold(const PredictionLog& log, double threshold);

double accuracy(const ConfusionCounts& counts);

/// Mann-Whitney AUC with half credit for ties. Throws DegenerateLabels
/// unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

/// Mean negative log-likelihood, natural log, probs clipped to
/// [1e-12, 1-1e-12].
double nll(std::span<const double> probs, std::span<const int> labels);

double brier(std::span<const double> probs, std::span<const int> labels);

double ece(std::span<const double> probs, std::span<const int> labels, int n_bins, EceMode mode);

ReliabilityBins reliability_bins(std::span<const double> probs, std::span<const int> labels,
                                 int n_bins, EceMode mode);

/// Per-class score counts over n_bins equal-width bins tiling [0,1].
ScoreHistogram score_histogram(std::span<const double> probs, std::span<const int> labels,
                               int n_bins);

MetricReport metric_report(const PredictionLog& log, double threshold, int ece_bins);

/// Materialized probability per record; throws MissingScore if one lacks it.
std::vector<double> probs_of(const PredictionLog& log);
std::vector<int> labels_of(const PredictionLog& log);

}  // namespace uqeval
