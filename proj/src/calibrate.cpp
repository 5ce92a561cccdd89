#include "uqeval/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace uqeval {

namespace {

// Softplus-form NLL of scaled logits; numerically safe for large |z|.
double nll_of_scaled_logits(const std::vector<double>& logits, const std::vector<int>& labels,
                            double tau) {
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    double z = logits[i] / tau;
    // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    double a = labels[i] == 1 ? -z : z;
    sum += a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
  }
  return sum / static_cast<double>(logits.size());
}

void extract(const PredictionLog& log, std::vector<double>& logits, std::vector<int>& labels) {
  if (log.empty()) fail(Errc::empty_log, "temperature fit on empty log");
  logits.reserve(log.size());
  labels.reserve(log.size());
  long pos = 0;
  for (const auto& r : log.records) {
    if (!r.logit) fail(Errc::missing_logits, "record lacks logit (id=" + r.id + ")");
    logits.push_back(*r.logit);
    labels.push_back(r.label);
    pos += (r.label == 1);
  }
  if (pos == 0 || pos == static_cast<long>(log.size()))
    fail(Errc::degenerate_labels, "temperature fit needs both classes");
}

}  // namespace

double temperature_nll(const PredictionLog& log, double tau) {
  std::vector<double> logits;
  std::vector<int> labels;
  extract(log, logits, labels);
  return nll_of_scaled_logits(logits, labels, tau);
}

Temperature fit_temperature(const PredictionLog& val_log) {
  std::vector<double> logits;
  std::vector<int> labels;
  extract(val_log, logits, labels);

  const double alpha_lo = std::log(kTauMin);
  const double alpha_hi = std::log(kTauMax);
  auto objective = [&](double alpha) {
    return nll_of_scaled_logits(logits, labels, std::exp(alpha));
  };

  // Coarse grid locates the basin; golden section refines inside it.
  const int grid = 200;
  int best_i = 0;
  double best_f = objective(alpha_lo);
  for (int i = 1; i < grid; ++i) {
    double a = alpha_lo + (alpha_hi - alpha_lo) * i / (grid - 1);
    double f = objective(a);
    if (f < best_f) {
      best_f = f;
      best_i = i;
    }
  }
  double step = (alpha_hi - alpha_lo) / (grid - 1);
  double lo = std::max(alpha_lo, alpha_lo + (best_i - 1) * step);
  double hi = std::min(alpha_hi, alpha_lo + (best_i + 1) * step);

  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - gr * (hi - lo);
  double d = lo + gr * (hi - lo);
  double fc = objective(c);
  double fd = objective(d);
  while (hi - lo > 1e-6) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - gr * (hi - lo);
      fc = objective(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + gr * (hi - lo);
      fd = objective(d);
    }
  }
  double alpha = (lo + hi) / 2.0;
  double f_mid = objective(alpha);
  // Keep the bound itself when it wins; mid-bracket rounding must not
  // lift the fit off a boundary optimum.
  if (objective(alpha_lo) <= f_mid) {
    alpha = alpha_lo;
    f_mid = objective(alpha_lo);
  }
  if (objective(alpha_hi) < f_mid) {
    alpha = alpha_hi;
    f_mid = objective(alpha_hi);
  }

  Temperature t;
  t.alpha = alpha;
  t.tau = std::exp(alpha);
  t.val_nll_at_tau = f_mid;
  t.at_bound = alpha <= alpha_lo + 1e-12 || alpha >= alpha_hi - 1e-12;
  return t;
}

PredictionLog apply_temperature(const PredictionLog& log, const Temperature& temp) {
  PredictionLog out = log;
  for (auto& r : out.records) {
    if (!r.logit) fail(Errc::missing_logits, "record lacks logit (id=" + r.id + ")");
    r.prob = sigmoid(*r.logit / temp.tau);
  }
  out.meta["calibration"] = "temperature";
  return out;
}

}  // namespace uqeval
