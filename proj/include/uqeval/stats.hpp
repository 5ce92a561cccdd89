#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "uqeval/core.hpp"

namespace uqeval {

struct BootstrapResult {
  double point = 0.0;   // statistic on the full sample
  double mean = 0.0;    // mean over valid resamples
  double ci_low = 0.0;
  double ci_high = 0.0;
  int b = 0;
  double level = 0.95;
  long skipped = 0;     // resamples where the statistic was undefined
};

using Statistic = std::function<double(const PredictionLog&)>;

/// Percentile bootstrap over B size-n resamples with replacement. Resample r
/// draws from a stream derived from (seed, r), so any evaluation order gives
/// identical output. Statistics that throw on a resample are skipped and
/// counted.
BootstrapResult bootstrap_ci(const Statistic& statistic, const PredictionLog& log, int b,
                             double level, uint64_t seed);

/// 1-based ranks with ties averaged (midranks).
std::vector<double> midranks(std::span<const double> values);

/// Linear-interpolation quantile of a sample (values are copied and sorted).
double quantile(std::vector<double> values, double p);

struct DeLongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double delta = 0.0;            // auc_b - auc_a
  double var_delta = 0.0;
  double z = 0.0;
  double p_two_sided = 1.0;
  bool degenerate = false;       // variance vanished (e.g. identical scores)
};

/// Paired DeLong test for correlated ROC-AUCs on shared labels. AUCs come
/// from the midrank placement formulation and match roc_auc to 1e-12.
DeLongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const int> labels);

}  // namespace uqeval
