#include "uqeval/stochastic.hpp"

#include <algorithm>
#include <cmath>

namespace uqeval {

double binary_entropy(double p) {
  double q = clip_prob(p);
  return -q * std::log(q) - (1.0 - q) * std::log(1.0 - q);
}

McSummary mc_aggregate(std::span<const double> samples) {
  if (samples.empty()) fail(Errc::empty_samples, "mc_aggregate needs T >= 1 samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  double s1 = 0.0, s2 = 0.0;
  for (double p : sorted) {
    s1 += p;
    s2 += p * p;
  }
  double t = static_cast<double>(sorted.size());
  McSummary out;
  out.t = static_cast<int>(sorted.size());
  out.mean = s1 / t;
  out.variance = std::max(0.0, s2 / t - out.mean * out.mean);
  if (out.t == 1) out.variance = 0.0;
  out.entropy = binary_entropy(out.mean);
  return out;
}

EnsembleSummary ensemble_mean(const std::vector<std::vector<double>>& member_probs) {
  if (member_probs.size() < 2)
    fail(Errc::misaligned_members, "ensemble needs K >= 2 members");
  size_t n = member_probs.front().size();
  for (const auto& m : member_probs)
    if (m.size() != n) fail(Errc::misaligned_members, "member prob vectors differ in length");

  EnsembleSummary out;
  out.mean.resize(n);
  out.variance.resize(n);
  std::vector<double> column(member_probs.size());
  for (size_t i = 0; i < n; ++i) {
    for (size_t k = 0; k < member_probs.size(); ++k) column[k] = member_probs[k][i];
    auto agg = mc_aggregate(column);
    out.mean[i] = agg.mean;
    out.variance[i] = agg.variance;
  }
  return out;
}

PredictionLog ensemble_log(const std::vector<PredictionLog>& members) {
  if (members.size() < 2) fail(Errc::misaligned_members, "ensemble needs K >= 2 members");
  size_t n = members.front().size();
  for (const auto& m : members) {
    if (m.size() != n) fail(Errc::misaligned_members, "member logs differ in length");
    for (size_t i = 0; i < n; ++i)
      if (m.records[i].id != members.front().records[i].id)
        fail(Errc::misaligned_members, "member logs disagree on id order at index " + std::to_string(i));
  }

  std::vector<std::vector<double>> probs(members.size());
  for (size_t k = 0; k < members.size(); ++k) {
    probs[k].reserve(n);
    for (const auto& r : members[k].records) {
      if (!r.prob) fail(Errc::missing_score, "member record lacks prob (id=" + r.id + ")");
      probs[k].push_back(*r.prob);
    }
  }
  auto agg = ensemble_mean(probs);

  PredictionLog out;
  out.meta = members.front().meta;
  out.meta["inference"] = "ensemble";
  out.meta["k"] = std::to_string(members.size());
  out.records = members.front().records;
  for (size_t i = 0; i < n; ++i) {
    auto& r = out.records[i];
    r.logit.reset();  // mean of probs has no single generating logit
    r.prob = agg.mean[i];
    r.mc_mean = agg.mean[i];
    r.mc_var = agg.variance[i];
    r.mc_entropy = binary_entropy(agg.mean[i]);
  }
  return out;
}

PredictionLog summarize_log(const PredictionLog& log, int t_prefix) {
  if (!log.has_mc()) fail(Errc::mixed_mc_presence, "summarize_log needs mc_probs on every record");
  PredictionLog out = log;
  for (auto& r : out.records) {
    if (!r.mc_probs)
      fail(Errc::mixed_mc_presence, "record " + r.id + " lacks mc_probs");
    std::span<const double> samples(*r.mc_probs);
    if (t_prefix > 0) {
      if (static_cast<size_t>(t_prefix) > samples.size())
        fail(Errc::out_of_range, "t_prefix exceeds stored T (id=" + r.id + ")");
      samples = samples.subspan(0, static_cast<size_t>(t_prefix));
    }
    auto agg = mc_aggregate(samples);
    r.prob = agg.mean;
    r.mc_mean = agg.mean;
    r.mc_var = agg.variance;
    r.mc_entropy = agg.entropy;
  }
  if (t_prefix > 0) out.meta["t_effective"] = std::to_string(t_prefix);
  return out;
}

}  // namespace uqeval
