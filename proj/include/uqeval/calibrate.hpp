#pragma once

#include "uqeval/core.hpp"

namespace uqeval {

/// Fitted scalar temperature. tau = exp(alpha); bounds [0.01, 100].
struct Temperature {
  double tau = 1.0;
  double alpha = 0.0;
  double val_nll_at_tau = 0.0;
  bool at_bound = false;  // fit ran into a bound (separable or uninformative data)
};

inline constexpr double kTauMin = 0.01;
inline constexpr double kTauMax = 100.0;

/// NLL of sigmoid(logit / tau) against labels; the 1-D objective.
double temperature_nll(const PredictionLog& log, double tau);

/// Minimize validation NLL over alpha in [ln 0.01, ln 100]: 200-point coarse
/// grid, then golden-section refinement to |d alpha| < 1e-6. Deterministic.
/// Requires logits and both classes present.
Temperature fit_temperature(const PredictionLog& val_log);

/// Rescale probs to sigmoid(logit / tau); logits, labels and strata preserved.
PredictionLog apply_temperature(const PredictionLog& log, const Temperature& temp);

}  // namespace uqeval
