#include "uqeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace uqeval {

namespace {

void check_aligned(size_t a, size_t b) {
  if (a != b) fail(Errc::length_mismatch, "scores and labels differ in length");
}

// (#positives, #negatives); throws unless both are present.
std::pair<long, long> class_counts(std::span<const int> labels) {
  long pos = 0;
  for (int y : labels) pos += (y == 1);
  long neg = static_cast<long>(labels.size()) - pos;
  if (pos == 0 || neg == 0)
    fail(Errc::degenerate_labels, "need at least one sample of each class");
  return {pos, neg};
}

int bin_index(double v, double lo, double hi, int n_bins) {
  double t = (v - lo) / (hi - lo);
  int idx = static_cast<int>(t * n_bins);
  if (idx < 0) idx = 0;
  if (idx >= n_bins) idx = n_bins - 1;  // closes the last bin at hi
  return idx;
}

}  // namespace

ConfusionCounts confusion_at_threshold(const PredictionLog& log, double threshold) {
  if (log.empty()) fail(Errc::empty_log, "cannot compute confusion on an empty log");
  ConfusionCounts c;
  for (const auto& r : log.records) {
    if (!r.prob) fail(Errc::missing_score, "record lacks prob (id=" + r.id + ")");
    int yhat = decide(*r.prob, threshold);
    if (r.label == 1)
      (yhat == 1 ? c.tp : c.fn)++;
    else
      (yhat == 1 ? c.fp : c.tn)++;
  }
  return c;
}

double accuracy(const ConfusionCounts& c) {
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_aligned(scores.size(), labels.size());
  auto [pos, neg] = class_counts(labels);
  size_t n = scores.size();

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Sum of positive midranks, doubled so the accumulator stays integral.
  long long pos_rank2 = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    long long rank2 = static_cast<long long>(i + j + 1);  // 2 * midrank, 1-based
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank2 += rank2;
    i = j;
  }
  long long numer2 = pos_rank2 - static_cast<long long>(pos) * (pos + 1);
  return static_cast<double>(numer2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_aligned(scores.size(), labels.size());
  auto [pos, neg] = class_counts(labels);
  size_t n = scores.size();

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  long tp = 0, fp = 0;
  long prev_tp = 0, prev_fp = 0;
  long long area2 = 0;  // 2 * area * pos * neg, exact in integers
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    double s = scores[order[i]];
    while (j < n && scores[order[j]] == s) {
      if (labels[order[j]] == 1)
        ++tp;
      else
        ++fp;
      ++j;
    }
    area2 += static_cast<long long>(fp - prev_fp) * (tp + prev_tp);
    curve.points.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos, s});
    prev_tp = tp;
    prev_fp = fp;
    i = j;
  }
  curve.area = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return curve;
}

double nll(std::span<const double> probs, std::span<const int> labels) {
  check_aligned(probs.size(), labels.size());
  if (probs.empty()) fail(Errc::empty_log, "nll on empty input");
  double sum = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    double p = clip_prob(probs[i]);
    sum -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return sum / static_cast<double>(probs.size());
}

double brier(std::span<const double> probs, std::span<const int> labels) {
  check_aligned(probs.size(), labels.size());
  if (probs.empty()) fail(Errc::empty_log, "brier on empty input");
  double sum = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    double d = probs[i] - labels[i];
    sum += d * d;
  }
  return sum / static_cast<double>(probs.size());
}

ReliabilityBins reliability_bins(std::span<const double> probs, std::span<const int> labels,
                                 int n_bins, EceMode mode) {
  check_aligned(probs.size(), labels.size());
  if (n_bins < 1) fail(Errc::out_of_range, "n_bins must be >= 1");

  double lo = mode == EceMode::positive_prob ? 0.0 : 0.5;
  ReliabilityBins out;
  out.mode = mode;
  out.n = static_cast<long>(probs.size());
  out.bins.resize(static_cast<size_t>(n_bins));
  double width = (1.0 - lo) / n_bins;
  for (int b = 0; b < n_bins; ++b) {
    out.bins[b].lo = lo + b * width;
    out.bins[b].hi = b + 1 == n_bins ? 1.0 : lo + (b + 1) * width;
  }

  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<long> hits(n_bins, 0);
  for (size_t i = 0; i < probs.size(); ++i) {
    double p = probs[i];
    double coord = mode == EceMode::positive_prob ? p : std::max(p, 1.0 - p);
    int b = bin_index(coord, lo, 1.0, n_bins);
    out.bins[b].count++;
    conf_sum[b] += coord;
    if (mode == EceMode::positive_prob)
      hits[b] += (labels[i] == 1);
    else
      hits[b] += (decide(p, 0.5) == labels[i]);
  }
  for (int b = 0; b < n_bins; ++b) {
    if (out.bins[b].count > 0) {
      out.bins[b].mean_conf = conf_sum[b] / out.bins[b].count;
      out.bins[b].empirical = static_cast<double>(hits[b]) / out.bins[b].count;
    }
  }
  return out;
}

double ReliabilityBins::ece() const {
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (const auto& b : bins)
    sum += static_cast<double>(b.count) / n * std::fabs(b.empirical - b.mean_conf);
  return sum;
}

double ece(std::span<const double> probs, std::span<const int> labels, int n_bins, EceMode mode) {
  return reliability_bins(probs, labels, n_bins, mode).ece();
}

ScoreHistogram score_histogram(std::span<const double> probs, std::span<const int> labels,
                               int n_bins) {
  check_aligned(probs.size(), labels.size());
  if (n_bins < 1) fail(Errc::out_of_range, "n_bins must be >= 1");
  ScoreHistogram h;
  h.real_counts.assign(n_bins, 0);
  h.fake_counts.assign(n_bins, 0);
  for (size_t i = 0; i < probs.size(); ++i) {
    int b = bin_index(probs[i], 0.0, 1.0, n_bins);
    (labels[i] == 1 ? h.fake_counts : h.real_counts)[b]++;
  }
  return h;
}

MetricReport metric_report(const PredictionLog& log, double threshold, int ece_bins) {
  auto probs = probs_of(log);
  auto labels = labels_of(log);

  MetricReport rep;
  rep.n = static_cast<long>(log.size());
  rep.threshold = threshold;
  rep.ece_bins = ece_bins;
  rep.confusion = confusion_at_threshold(log, threshold);
  rep.acc = accuracy(rep.confusion);
  try {
    rep.auc = roc_auc(probs, labels);
    rep.auc_defined = true;
  } catch (const Error& e) {
    if (e.code() != Errc::degenerate_labels) throw;
    rep.auc = std::numeric_limits<double>::quiet_NaN();
    rep.auc_defined = false;
  }
  rep.ece = ece(probs, labels, ece_bins, EceMode::positive_prob);
  rep.brier = brier(probs, labels);
  rep.nll = nll(probs, labels);
  return rep;
}

std::vector<double> probs_of(const PredictionLog& log) {
  std::vector<double> out;
  out.reserve(log.size());
  for (const auto& r : log.records) {
    if (!r.prob) fail(Errc::missing_score, "record lacks prob (id=" + r.id + ")");
    out.push_back(*r.prob);
  }
  return out;
}

std::vector<int> labels_of(const PredictionLog& log) {
  std::vector<int> out;
  out.reserve(log.size());
  for (const auto& r : log.records) out.push_back(r.label);
  return out;
}

}  // namespace uqeval
