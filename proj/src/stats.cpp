#include "uqeval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uqeval/rng.hpp"

namespace uqeval {

double quantile(std::vector<double> values, double p) {
  if (values.empty()) fail(Errc::empty_samples, "quantile of empty sample");
  std::sort(values.begin(), values.end());
  double h = (static_cast<double>(values.size()) - 1.0) * p;
  size_t lo = static_cast<size_t>(std::floor(h));
  size_t hi = static_cast<size_t>(std::ceil(h));
  return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

BootstrapResult bootstrap_ci(const Statistic& statistic, const PredictionLog& log, int b,
                             double level, uint64_t seed) {
  if (log.empty()) fail(Errc::empty_log, "bootstrap on empty log");
  if (b < 1) fail(Errc::out_of_range, "B must be >= 1");
  if (level <= 0.0 || level >= 1.0) fail(Errc::out_of_range, "level must be in (0,1)");

  BootstrapResult out;
  out.b = b;
  out.level = level;
  out.point = statistic(log);

  size_t n = log.size();
  std::vector<double> stats;
  stats.reserve(b);
  PredictionLog resample;
  resample.records.resize(n);
  for (int r = 0; r < b; ++r) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(r)));
    for (size_t i = 0; i < n; ++i)
      resample.records[i] = log.records[rng.bounded(n)];
    try {
      stats.push_back(statistic(resample));
    } catch (const Error&) {
      out.skipped++;
    }
  }
  if (stats.empty())
    fail(Errc::validation_error, "statistic undefined on all " + std::to_string(b) + " resamples");

  out.mean = std::accumulate(stats.begin(), stats.end(), 0.0) / static_cast<double>(stats.size());
  double tail = (1.0 - level) / 2.0;
  out.ci_low = quantile(stats, tail);
  out.ci_high = quantile(stats, 1.0 - tail);
  return out;
}

std::vector<double> midranks(std::span<const double> values) {
  if (values.empty()) fail(Errc::empty_samples, "midranks of empty vector");
  size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    double rank = (static_cast<double>(i + j + 1)) / 2.0;  // average of 1-based i+1..j
    for (size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

namespace {

// Placement values for the fast DeLong computation: V10 over positives,
// V01 over negatives, plus the AUC they integrate to.
struct Placements {
  std::vector<double> v10;
  std::vector<double> v01;
  double auc = 0.0;
};

Placements placements(std::span<const double> scores, const std::vector<size_t>& pos_idx,
                      const std::vector<size_t>& neg_idx) {
  size_t m = pos_idx.size(), n = neg_idx.size();
  std::vector<double> pos_scores(m), neg_scores(n);
  for (size_t i = 0; i < m; ++i) pos_scores[i] = scores[pos_idx[i]];
  for (size_t j = 0; j < n; ++j) neg_scores[j] = scores[neg_idx[j]];

  std::vector<double> all(m + n);
  std::copy(pos_scores.begin(), pos_scores.end(), all.begin());
  std::copy(neg_scores.begin(), neg_scores.end(), all.begin() + m);

  auto rank_all = midranks(all);
  auto rank_pos = midranks(pos_scores);
  auto rank_neg = midranks(neg_scores);

  Placements out;
  out.v10.resize(m);
  out.v01.resize(n);
  double sum = 0.0;
  for (size_t i = 0; i < m; ++i) {
    out.v10[i] = (rank_all[i] - rank_pos[i]) / static_cast<double>(n);
    sum += rank_all[i];
  }
  for (size_t j = 0; j < n; ++j)
    out.v01[j] = 1.0 - (rank_all[m + j] - rank_neg[j]) / static_cast<double>(m);
  out.auc = (sum - static_cast<double>(m) * (m + 1) / 2.0) /
            (static_cast<double>(m) * static_cast<double>(n));
  return out;
}

double covariance(const std::vector<double>& x, const std::vector<double>& y) {
  size_t n = x.size();
  if (n < 2) return 0.0;
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += (x[i] - mx) * (y[i] - my);
  return s / static_cast<double>(n - 1);
}

}  // namespace

DeLongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const int> labels) {
  if (scores_a.size() != scores_b.size() || scores_a.size() != labels.size())
    fail(Errc::length_mismatch, "paired score vectors and labels must align");
  std::vector<size_t> pos_idx, neg_idx;
  for (size_t i = 0; i < labels.size(); ++i)
    (labels[i] == 1 ? pos_idx : neg_idx).push_back(i);
  if (pos_idx.empty() || neg_idx.empty())
    fail(Errc::degenerate_labels, "DeLong needs both classes");

  auto pa = placements(scores_a, pos_idx, neg_idx);
  auto pb = placements(scores_b, pos_idx, neg_idx);

  double s10_aa = covariance(pa.v10, pa.v10);
  double s10_bb = covariance(pb.v10, pb.v10);
  double s10_ab = covariance(pa.v10, pb.v10);
  double s01_aa = covariance(pa.v01, pa.v01);
  double s01_bb = covariance(pb.v01, pb.v01);
  double s01_ab = covariance(pa.v01, pb.v01);

  DeLongResult out;
  out.auc_a = pa.auc;
  out.auc_b = pb.auc;
  out.delta = pb.auc - pa.auc;
  out.var_delta = (s10_aa + s10_bb - 2.0 * s10_ab) / static_cast<double>(pos_idx.size()) +
                  (s01_aa + s01_bb - 2.0 * s01_ab) / static_cast<double>(neg_idx.size());
  if (out.var_delta < 0.0) out.var_delta = 0.0;

  if (out.var_delta <= 1e-15) {
    out.degenerate = true;
    out.z = 0.0;
    out.p_two_sided = out.delta == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.z = out.delta / std::sqrt(out.var_delta);
  out.p_two_sided = std::erfc(std::fabs(out.z) / std::sqrt(2.0));
  return out;
}

}  // namespace uqeval
