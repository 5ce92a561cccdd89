#pragma once

#include <span>
#include <vector>

#include "uqeval/core.hpp"

namespace uqeval {

/// Aggregate of T stochastic forward passes.
struct McSummary {
  double mean = 0.0;
  double variance = 0.0;  // population form, clamped at 0
  double entropy = 0.0;   // of the mean, natural log, in [0, ln 2]
  int t = 0;
};

/// -p ln p - (1-p) ln(1-p) with probability clipping.
double binary_entropy(double p);

/// mean = (1/T) sum p_t; variance = (1/T) sum p_t^2 - mean^2. Samples are
/// summed in sorted order so permutations aggregate bit-identically.
McSummary mc_aggregate(std::span<const double> samples);

struct EnsembleSummary {
  std::vector<double> mean;
  std::vector<double> variance;  // across members, population form
};

/// Per-record mean and across-member variance of K >= 2 aligned prob vectors.
EnsembleSummary ensemble_mean(const std::vector<std::vector<double>>& member_probs);

/// Combine K member logs (deterministic passes, identical id order) into one
/// log with prob = member mean and mc_var = across-member variance.
PredictionLog ensemble_log(const std::vector<PredictionLog>& members);

/// Attach mc_mean / mc_var / mc_entropy and set prob to the MC mean.
/// t_prefix > 0 truncates each sample vector to its first t_prefix draws
/// (the T-sensitivity sweep); 0 keeps all.
PredictionLog summarize_log(const PredictionLog& log, int t_prefix = 0);

}  // namespace uqeval
