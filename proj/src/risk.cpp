#include "uqeval/risk.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "uqeval/metrics.hpp"
#include "uqeval/rng.hpp"
#include "uqeval/stats.hpp"

namespace uqeval {

namespace {

double mu_of(const PredictionRecord& r) {
  if (r.mc_mean) return *r.mc_mean;
  if (r.prob) return *r.prob;
  fail(Errc::missing_fields, "record lacks mc_mean and prob (id=" + r.id + ")");
}

double var_of(const PredictionRecord& r) {
  if (!r.mc_var) fail(Errc::missing_fields, "record lacks mc_var (id=" + r.id + ")");
  return *r.mc_var;
}

bool in_band(double v, const BandSpec& band) {
  if (v < band.lower) return false;
  return v < band.upper || (band.closed_upper && v == band.upper);
}

double band_value(const PredictionRecord& r, bool symmetric) {
  double mu = mu_of(r);
  return symmetric ? std::max(mu, 1.0 - mu) : mu;
}

GroupStats group_stats(std::vector<double> values) {
  GroupStats g;
  g.count = static_cast<long>(values.size());
  if (values.empty()) return g;
  g.defined = true;
  double sum = 0.0;
  for (double v : values) sum += v;
  g.mean = sum / static_cast<double>(values.size());
  g.median = quantile(values, 0.5);
  g.q1 = quantile(values, 0.25);
  g.q3 = quantile(values, 0.75);
  return g;
}

}  // namespace

std::string PartitionSpec::name() const {
  if (scheme == PartitionScheme::median) return "median";
  int pct = static_cast<int>(std::lround(q * 100.0));
  return "top_bottom_" + std::to_string(pct);
}

BandSweepConfig BandSweepConfig::defaults() {
  BandSweepConfig cfg;
  cfg.bands = {{0.55, 0.65, false}, {0.65, 0.75, false}, {0.75, 0.85, false}, {0.85, 0.95, true}};
  cfg.partitions = {PartitionSpec::median_split(), PartitionSpec::top_bottom(0.4),
                    PartitionSpec::top_bottom(0.3), PartitionSpec::top_bottom(0.2)};
  return cfg;
}

std::vector<int> error_indicator(const PredictionLog& log, double threshold) {
  std::vector<int> errors;
  errors.reserve(log.size());
  for (const auto& r : log.records) {
    if (!r.prob) fail(Errc::missing_score, "record lacks prob (id=" + r.id + ")");
    errors.push_back(decide(*r.prob, threshold) != r.label ? 1 : 0);
  }
  return errors;
}

ErrorAuroc error_auroc(std::span<const double> uncertainty, std::span<const int> errors) {
  ErrorAuroc out;
  try {
    out.value = roc_auc(uncertainty, errors);
    out.defined = true;
  } catch (const Error& e) {
    if (e.code() != Errc::degenerate_labels) throw;
  }
  return out;
}

CorrectnessSplit entropy_by_correctness(const PredictionLog& log, double threshold) {
  std::vector<double> correct, incorrect;
  for (const auto& r : log.records) {
    if (!r.prob) fail(Errc::missing_score, "record lacks prob (id=" + r.id + ")");
    if (!r.mc_entropy) fail(Errc::missing_fields, "record lacks mc_entropy (id=" + r.id + ")");
    (decide(*r.prob, threshold) == r.label ? correct : incorrect).push_back(*r.mc_entropy);
  }
  CorrectnessSplit split;
  split.correct = group_stats(std::move(correct));
  split.incorrect = group_stats(std::move(incorrect));
  return split;
}

long band_population(const PredictionLog& log, const BandSpec& band, bool symmetric) {
  long n = 0;
  for (const auto& r : log.records) n += in_band(band_value(r, symmetric), band);
  return n;
}

std::vector<size_t> band_select(const PredictionLog& log, const BandSpec& band, long n_band,
                                uint64_t seed, bool symmetric) {
  std::vector<size_t> members;
  for (size_t i = 0; i < log.size(); ++i)
    if (in_band(band_value(log.records[i], symmetric), band)) members.push_back(i);
  if (static_cast<long>(members.size()) < n_band)
    fail(Errc::insufficient_band, "band population " + std::to_string(members.size()) +
                                      " below n_band " + std::to_string(n_band));
  if (static_cast<long>(members.size()) == n_band) return members;
  Rng rng(seed);
  rng.shuffle(members);
  members.resize(static_cast<size_t>(n_band));
  std::sort(members.begin(), members.end());
  return members;
}

std::pair<std::vector<size_t>, std::vector<size_t>> variance_partition(
    const PredictionLog& log, std::span<const size_t> subsample, const PartitionSpec& partition) {
  std::vector<size_t> sorted(subsample.begin(), subsample.end());
  std::sort(sorted.begin(), sorted.end(), [&](size_t a, size_t b) {
    double va = var_of(log.records[a]), vb = var_of(log.records[b]);
    if (va != vb) return va < vb;
    return log.records[a].id < log.records[b].id;
  });
  size_t n = sorted.size();
  size_t k_low = 0, k_high = 0;
  if (partition.scheme == PartitionScheme::median) {
    k_low = n / 2;
    k_high = n - k_low;
  } else {
    if (partition.q <= 0.0 || partition.q > 0.5)
      fail(Errc::out_of_range, "q must be in (0, 0.5]");
    // epsilon guards floor against binary representation of q
    k_low = k_high = static_cast<size_t>(std::floor(partition.q * static_cast<double>(n) + 1e-9));
  }
  if (k_low == 0 || k_high == 0)
    fail(Errc::group_too_small, "partition " + partition.name() + " leaves an empty group");
  std::vector<size_t> low(sorted.begin(), sorted.begin() + k_low);
  std::vector<size_t> high(sorted.end() - k_high, sorted.end());
  return {std::move(low), std::move(high)};
}

double band_effect(const PredictionLog& log, std::span<const size_t> low_group,
                   std::span<const size_t> high_group, double threshold) {
  if (low_group.empty() || high_group.empty())
    fail(Errc::group_too_small, "band effect needs nonempty groups");
  auto err_rate = [&](std::span<const size_t> group) {
    long errors = 0;
    for (size_t i : group) {
      const auto& r = log.records[i];
      errors += decide(mu_of(r), threshold) != r.label;
    }
    return static_cast<double>(errors) / static_cast<double>(group.size());
  };
  return err_rate(high_group) - err_rate(low_group);
}

namespace {

BandCell compute_cell(const PredictionLog& log, const BandSweepConfig& cfg,
                      const std::vector<size_t>& subsample, size_t band_idx, size_t part_idx) {
  BandCell cell;
  cell.band = cfg.bands[band_idx];
  cell.partition = cfg.partitions[part_idx];
  cell.n_band = static_cast<long>(subsample.size());
  try {
    auto [low, high] = variance_partition(log, subsample, cell.partition);
    cell.delta_err = band_effect(log, low, high, cfg.threshold);
  } catch (const Error& e) {
    if (e.code() != Errc::group_too_small) throw;
    cell.insufficient = true;
    return cell;
  }

  uint64_t cell_seed =
      derive_seed(derive_seed(cfg.seed, 0x10000 + band_idx), 0x20000 + part_idx);
  std::vector<double> deltas;
  deltas.reserve(cfg.bootstrap_b);
  std::vector<size_t> resample(subsample.size());
  for (int r = 0; r < cfg.bootstrap_b; ++r) {
    Rng rng(derive_seed(cell_seed, static_cast<uint64_t>(r)));
    for (auto& idx : resample) idx = subsample[rng.bounded(subsample.size())];
    try {
      auto [low, high] = variance_partition(log, resample, cell.partition);
      deltas.push_back(band_effect(log, low, high, cfg.threshold));
    } catch (const Error& e) {
      if (e.code() != Errc::group_too_small) throw;
      cell.skipped_resamples++;
    }
  }
  if (deltas.empty()) {
    cell.insufficient = true;
    return cell;
  }
  double tail = (1.0 - cfg.level) / 2.0;
  cell.ci_low = quantile(deltas, tail);
  cell.ci_high = quantile(deltas, 1.0 - tail);
  cell.significant = cell.ci_low > 0.0;
  return cell;
}

}  // namespace

BandSweepGrid band_sweep(const PredictionLog& log, const BandSweepConfig& config) {
  BandSweepConfig cfg = config;
  if (cfg.bands.empty() || cfg.partitions.empty())
    fail(Errc::out_of_range, "sweep needs at least one band and one partition");

  BandSweepGrid grid;
  grid.bands = cfg.bands;
  grid.partitions = cfg.partitions;

  std::vector<long> populations;
  populations.reserve(cfg.bands.size());
  for (const auto& band : cfg.bands)
    populations.push_back(band_population(log, band, cfg.symmetric_confidence));
  long n_band = cfg.n_band;
  if (n_band <= 0) {
    n_band = 0;
    for (long p : populations)
      if (p > 0) n_band = n_band == 0 ? p : std::min(n_band, p);
  }

  grid.band_members.resize(cfg.bands.size());
  for (size_t b = 0; b < cfg.bands.size(); ++b) {
    if (n_band > 0 && populations[b] >= n_band)
      grid.band_members[b] = band_select(log, cfg.bands[b], n_band,
                                         derive_seed(cfg.seed, b), cfg.symmetric_confidence);
  }

  size_t n_parts = cfg.partitions.size();
  grid.cells.resize(cfg.bands.size() * n_parts);
  auto run_cell = [&](size_t b, size_t p) -> BandCell {
    if (grid.band_members[b].empty()) {
      BandCell cell;
      cell.band = cfg.bands[b];
      cell.partition = cfg.partitions[p];
      cell.n_band = populations[b];
      cell.insufficient = true;
      return cell;
    }
    return compute_cell(log, cfg, grid.band_members[b], b, p);
  };

  if (cfg.parallel) {
    std::vector<std::future<BandCell>> futures;
    futures.reserve(grid.cells.size());
    for (size_t b = 0; b < cfg.bands.size(); ++b)
      for (size_t p = 0; p < n_parts; ++p)
        futures.push_back(std::async(std::launch::async, run_cell, b, p));
    for (size_t i = 0; i < futures.size(); ++i) grid.cells[i] = futures[i].get();
  } else {
    for (size_t b = 0; b < cfg.bands.size(); ++b)
      for (size_t p = 0; p < n_parts; ++p) grid.cells[b * n_parts + p] = run_cell(b, p);
  }

  // Column summaries across bands, then per-band delta ranges across columns.
  auto& summary = grid.summary;
  summary.significant_fraction.assign(n_parts, 0.0);
  summary.directional_consistency.assign(n_parts, 0.0);
  for (size_t p = 0; p < n_parts; ++p) {
    long valid = 0, sig = 0, positive = 0;
    for (size_t b = 0; b < cfg.bands.size(); ++b) {
      const auto& cell = grid.cell(b, p);
      if (cell.insufficient) continue;
      ++valid;
      sig += cell.significant;
      positive += cell.delta_err > 0.0;
    }
    if (valid > 0) {
      summary.significant_fraction[p] = static_cast<double>(sig) / valid;
      summary.directional_consistency[p] = static_cast<double>(positive) / valid;
    }
  }
  std::vector<double> ranges;
  for (size_t b = 0; b < cfg.bands.size(); ++b) {
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (size_t p = 0; p < n_parts; ++p) {
      const auto& cell = grid.cell(b, p);
      if (cell.insufficient) continue;
      if (!any) {
        lo = hi = cell.delta_err;
        any = true;
      } else {
        lo = std::min(lo, cell.delta_err);
        hi = std::max(hi, cell.delta_err);
      }
    }
    if (any) ranges.push_back(hi - lo);
  }
  if (!ranges.empty()) {
    summary.median_range = quantile(ranges, 0.5);
    summary.max_range = *std::max_element(ranges.begin(), ranges.end());
  }
  return grid;
}

}  // namespace uqeval
