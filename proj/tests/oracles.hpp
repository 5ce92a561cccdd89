#pragma once

// Test-only oracles. Each is an independent computation path for a result the
// library produces; none of them call into the library.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace oracles {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Brute-force Mann-Whitney: mean over all (positive, negative) pairs of
/// win(1) / tie(0.5) / loss(0).
inline double auc_pairs(std::span<const double> scores, std::span<const int> labels) {
  double credit = 0.0;
  long pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        credit += 1.0;
      else if (scores[i] == scores[j])
        credit += 0.5;
    }
  }
  return credit / static_cast<double>(pairs);
}

/// Mean binary NLL of sigmoid(z / tau) without clipping tricks.
inline double scaled_nll(const std::vector<double>& logits, const std::vector<int>& labels,
                         double tau) {
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    double z = logits[i] / tau;
    double a = labels[i] == 1 ? -z : z;
    sum += a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
  }
  return sum / static_cast<double>(logits.size());
}

/// Dense-grid minimizer of the temperature objective over log-spaced tau.
inline double tau_grid(const std::vector<double>& logits, const std::vector<int>& labels,
                       int points = 10000) {
  double alpha_lo = std::log(0.01), alpha_hi = std::log(100.0);
  double best_tau = 0.01;
  double best_f = scaled_nll(logits, labels, 0.01);
  for (int i = 1; i < points; ++i) {
    double tau = std::exp(alpha_lo + (alpha_hi - alpha_lo) * i / (points - 1));
    double f = scaled_nll(logits, labels, tau);
    if (f < best_f) {
      best_f = f;
      best_tau = tau;
    }
  }
  return best_tau;
}

/// Two-sided Monte Carlo p-value for the paired AUC difference under the
/// sign-flip null: each record's (a, b) scores are swapped with probability
/// one half, labels kept. Add-one correction keeps p in (0, 1].
inline double delong_permutation_p(std::span<const double> scores_a,
                                   std::span<const double> scores_b,
                                   std::span<const int> labels, long draws, uint64_t seed) {
  size_t n = scores_a.size();
  double observed = std::fabs(auc_pairs(scores_b, labels) - auc_pairs(scores_a, labels));
  std::mt19937_64 gen(seed);
  std::vector<double> pa(n), pb(n);
  long hits = 0;
  for (long d = 0; d < draws; ++d) {
    for (size_t i = 0; i < n; ++i) {
      bool swap = (gen() & 1) != 0;
      pa[i] = swap ? scores_b[i] : scores_a[i];
      pb[i] = swap ? scores_a[i] : scores_b[i];
    }
    double delta = std::fabs(auc_pairs(pb, labels) - auc_pairs(pa, labels));
    if (delta >= observed - 1e-12) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(draws + 1);
}

/// ReLU MLP loss via plain arithmetic, for finite-difference cross-checks.
inline double mlp_bce(const std::vector<double>& w1, const std::vector<double>& b1,
                      const std::vector<double>& w2, double b2,
                      const std::vector<std::array<double, 2>>& xs,
                      const std::vector<int>& ys) {
  double sum = 0.0;
  size_t hidden = b1.size();
  for (size_t i = 0; i < xs.size(); ++i) {
    double z = b2;
    for (size_t h = 0; h < hidden; ++h) {
      double a = w1[2 * h] * xs[i][0] + w1[2 * h + 1] * xs[i][1] + b1[h];
      z += w2[h] * (a > 0 ? a : 0.0);
    }
    sum += std::max(z, 0.0) - z * ys[i] + std::log1p(std::exp(-std::fabs(z)));
  }
  return sum / static_cast<double>(xs.size());
}

}  // namespace oracles
