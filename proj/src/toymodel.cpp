#include "uqeval/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "uqeval/metrics.hpp"

namespace uqeval {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string point_id(const char* prefix, long i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%s%06ld", prefix, i);
  return buf;
}

std::string format_level(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

SyntheticDataset gen_synthetic(const SyntheticConfig& config) {
  if (config.n <= 0 || config.n % 2 != 0)
    fail(Errc::out_of_range, "n must be positive and even");
  if (config.overlap <= 0.0) fail(Errc::out_of_range, "overlap must be > 0");

  SyntheticDataset data;
  data.n = config.n;
  data.overlap = config.overlap;
  data.ood_shift = config.ood_shift;
  data.seed = config.seed;

  double sigma = std::sqrt(config.overlap);
  std::string noise = format_level(config.overlap);

  long n_train = static_cast<long>(config.train_frac * config.n);
  long n_val = static_cast<long>(config.val_frac * config.n);
  long n_test = config.n - n_train - n_val;
  data.n_ood = config.n_ood >= 0 ? config.n_ood : n_test;

  // Alternating labels keep the classes exactly balanced for even n.
  Rng sample_rng(derive_seed(config.seed, 0));
  for (long i = 0; i < config.n; ++i) {
    DataPoint pt;
    pt.id = point_id("p", i);
    pt.label = static_cast<int>(i % 2);
    double mx = pt.label == 1 ? 1.0 : -1.0;
    pt.x = {mx + sigma * sample_rng.normal(), sigma * sample_rng.normal()};
    pt.strata["source"] = sample_rng.uniform() < 0.5 ? "A" : "B";
    pt.strata["noise_level"] = noise;
    data.points.push_back(std::move(pt));
  }

  std::vector<size_t> order(config.n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng split_rng(derive_seed(config.seed, 1));
  split_rng.shuffle(order);
  for (long i = 0; i < config.n; ++i) {
    Split s = i < n_train ? Split::train : i < n_train + n_val ? Split::val : Split::test;
    data.points[order[i]].split = s;
  }

  Rng ood_rng(derive_seed(config.seed, 2));
  for (long i = 0; i < data.n_ood; ++i) {
    DataPoint pt;
    pt.id = point_id("o", i);
    pt.label = static_cast<int>(i % 2);
    pt.split = Split::ood;
    double mx = pt.label == 1 ? 1.0 : -1.0;
    pt.x = {mx + sigma * ood_rng.normal(), config.ood_shift + sigma * ood_rng.normal()};
    pt.strata["source"] = "C";
    pt.strata["noise_level"] = noise;
    data.points.push_back(std::move(pt));
  }
  return data;
}

void write_dataset(const SyntheticDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path);
  for (const auto& pt : data.points) {
    ordered_json j;
    j["id"] = pt.id;
    j["split"] = split_name(pt.split);
    j["label"] = pt.label;
    j["x"] = std::vector<double>{pt.x[0], pt.x[1]};
    if (!pt.strata.empty()) j["strata"] = pt.strata;
    out << j.dump() << "\n";
  }
  ordered_json meta;
  meta["n"] = data.n;
  meta["n_ood"] = data.n_ood;
  meta["overlap"] = data.overlap;
  meta["ood_shift"] = data.ood_shift;
  meta["seed"] = data.seed;
  std::ofstream mout(path + ".meta.json");
  if (!mout) fail(Errc::io_error, "cannot write " + path + ".meta.json");
  mout << meta.dump(2) << "\n";
}

SyntheticDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path);
  SyntheticDataset data;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(Errc::parse_error, std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
    }
    DataPoint pt;
    pt.id = j.at("id").get<std::string>();
    auto s = split_from(j.at("split").get<std::string>());
    if (!s) fail(Errc::parse_error, "unknown split (line " + std::to_string(line_no) + ")");
    pt.split = *s;
    pt.label = j.at("label").get<int>();
    auto x = j.at("x").get<std::vector<double>>();
    if (x.size() != 2) fail(Errc::parse_error, "x must have 2 entries (line " + std::to_string(line_no) + ")");
    pt.x = {x[0], x[1]};
    if (j.contains("strata"))
      for (auto it = j["strata"].begin(); it != j["strata"].end(); ++it)
        pt.strata[it.key()] = it.value().get<std::string>();
    data.points.push_back(std::move(pt));
  }
  std::ifstream min(path + ".meta.json");
  if (min) {
    ordered_json meta;
    min >> meta;
    data.n = meta.value("n", 0L);
    data.n_ood = meta.value("n_ood", 0L);
    data.overlap = meta.value("overlap", 0.0);
    data.ood_shift = meta.value("ood_shift", 0.0);
    data.seed = meta.value("seed", uint64_t{0});
  }
  return data;
}

double forward(const ToyModel& model, const std::array<double, 2>& x, ForwardMode mode, Rng* rng,
               std::optional<double> dropout_override) {
  double p = dropout_override.value_or(model.dropout_p);
  bool drop = mode == ForwardMode::stochastic && p > 0.0;
  double keep_scale = drop ? 1.0 / (1.0 - p) : 1.0;
  double z = model.b2;
  for (int h = 0; h < model.hidden; ++h) {
    double a = model.w1[2 * h] * x[0] + model.w1[2 * h + 1] * x[1] + model.b1[h];
    double r = a > 0.0 ? a : 0.0;
    if (drop) {
      if (rng->uniform() < p) continue;  // mask drawn for every unit
      r *= keep_scale;
    }
    z += model.w2[h] * r;
  }
  return z;
}

double bce_loss(std::span<const double> logits, std::span<const int> labels) {
  if (logits.size() != labels.size()) fail(Errc::length_mismatch, "logits/labels misaligned");
  if (logits.empty()) fail(Errc::empty_log, "bce_loss on empty batch");
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    double z = logits[i];
    sum += std::max(z, 0.0) - z * labels[i] + std::log1p(std::exp(-std::fabs(z)));
  }
  return sum / static_cast<double>(logits.size());
}

namespace {

struct ModelGrads {
  std::vector<double> w1, b1, w2;
  double b2 = 0.0;
};

ModelGrads zero_grads(const ToyModel& m) {
  ModelGrads g;
  g.w1.assign(m.w1.size(), 0.0);
  g.b1.assign(m.b1.size(), 0.0);
  g.w2.assign(m.w2.size(), 0.0);
  return g;
}

// Forward + backward for one sample; mask[h] is the dropout multiplier
// (1 everywhere for deterministic passes). Returns the logit.
double backprop_sample(const ToyModel& m, const std::array<double, 2>& x, int y,
                       std::span<const double> mask, double inv_batch, ModelGrads& g) {
  int H = m.hidden;
  std::vector<double> act(H);
  double z = m.b2;
  for (int h = 0; h < H; ++h) {
    double a = m.w1[2 * h] * x[0] + m.w1[2 * h + 1] * x[1] + m.b1[h];
    act[h] = a;
    double r = a > 0.0 ? a : 0.0;
    z += m.w2[h] * r * mask[h];
  }
  double gz = (sigmoid(z) - y) * inv_batch;
  g.b2 += gz;
  for (int h = 0; h < H; ++h) {
    double r = act[h] > 0.0 ? act[h] : 0.0;
    g.w2[h] += gz * r * mask[h];
    if (act[h] > 0.0) {
      double ga = gz * m.w2[h] * mask[h];
      g.w1[2 * h] += ga * x[0];
      g.w1[2 * h + 1] += ga * x[1];
      g.b1[h] += ga;
    }
  }
  return z;
}

struct AdamState {
  std::vector<double> m, v;
  long t = 0;
};

void adam_step(std::vector<double*> params, const std::vector<const double*>& grads, size_t count,
               AdamState& state, const TrainConfig& cfg) {
  state.t++;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < count; ++i) {
    double grad = *grads[i] + cfg.weight_decay * *params[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad * grad;
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    *params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

std::vector<double*> param_ptrs(ToyModel& m) {
  std::vector<double*> ptrs;
  for (auto& w : m.w1) ptrs.push_back(&w);
  for (auto& b : m.b1) ptrs.push_back(&b);
  for (auto& w : m.w2) ptrs.push_back(&w);
  ptrs.push_back(&m.b2);
  return ptrs;
}

std::vector<const double*> grad_ptrs(const ModelGrads& g) {
  std::vector<const double*> ptrs;
  for (auto& w : g.w1) ptrs.push_back(&w);
  for (auto& b : g.b1) ptrs.push_back(&b);
  for (auto& w : g.w2) ptrs.push_back(&w);
  ptrs.push_back(&g.b2);
  return ptrs;
}

double val_nll(const ToyModel& m, std::span<const DataPoint> val_points) {
  std::vector<double> probs;
  std::vector<int> labels;
  probs.reserve(val_points.size());
  labels.reserve(val_points.size());
  for (const auto& pt : val_points) {
    probs.push_back(sigmoid(forward(m, pt.x, ForwardMode::deterministic, nullptr)));
    labels.push_back(pt.label);
  }
  return nll(probs, labels);
}

}  // namespace

TrainResult train(const SyntheticDataset& data, const TrainConfig& config) {
  std::vector<const DataPoint*> train_pts;
  std::vector<DataPoint> val_pts;
  for (const auto& pt : data.points) {
    if (pt.split == Split::train) train_pts.push_back(&pt);
    if (pt.split == Split::val) val_pts.push_back(pt);
  }
  if (train_pts.empty() || val_pts.empty())
    fail(Errc::empty_log, "train and val splits must be nonempty");
  if (config.patience > config.max_epochs)
    fail(Errc::out_of_range, "patience exceeds max_epochs");

  ToyModel model;
  model.hidden = config.hidden;
  model.dropout_p = config.dropout_p;
  model.w1.resize(2 * config.hidden);
  model.b1.assign(config.hidden, 0.0);
  model.w2.resize(config.hidden);

  Rng init_rng(derive_seed(config.seed, 10));
  double bound1 = 1.0 / std::sqrt(2.0);
  for (auto& w : model.w1) w = (2.0 * init_rng.uniform() - 1.0) * bound1;
  double bound2 = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  for (auto& w : model.w2) w = (2.0 * init_rng.uniform() - 1.0) * bound2;

  auto params = param_ptrs(model);
  AdamState adam;
  adam.m.assign(params.size(), 0.0);
  adam.v.assign(params.size(), 0.0);

  Rng mask_rng(derive_seed(config.seed, 11));
  double p = config.dropout_p;
  double keep_scale = p > 0.0 ? 1.0 / (1.0 - p) : 1.0;
  std::vector<double> mask(config.hidden, 1.0);
  std::vector<size_t> order(train_pts.size());
  std::iota(order.begin(), order.end(), size_t{0});

  TrainResult result;
  double best_nll = std::numeric_limits<double>::infinity();
  ToyModel best_model = model;
  int best_epoch = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, 100 + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      size_t end = std::min(order.size(), start + config.batch_size);
      double inv_batch = 1.0 / static_cast<double>(end - start);
      ModelGrads grads = zero_grads(model);
      double batch_loss = 0.0;
      for (size_t i = start; i < end; ++i) {
        const DataPoint& pt = *train_pts[order[i]];
        if (p > 0.0)
          for (int h = 0; h < config.hidden; ++h)
            mask[h] = mask_rng.uniform() < p ? 0.0 : keep_scale;
        double z = backprop_sample(model, pt.x, pt.label, mask, inv_batch, grads);
        batch_loss +=
            (std::max(z, 0.0) - z * pt.label + std::log1p(std::exp(-std::fabs(z)))) * inv_batch;
      }
      if (!std::isfinite(batch_loss))
        fail(Errc::diverged_loss, "non-finite loss at epoch " + std::to_string(epoch));
      loss_sum += batch_loss * static_cast<double>(end - start);
      adam_step(params, grad_ptrs(grads), params.size(), adam, config);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_pts.size());
    stats.val_nll = val_nll(model, val_pts);
    result.trace.push_back(stats);
    result.stopped_epoch = epoch;

    if (stats.val_nll < best_nll) {
      best_nll = stats.val_nll;
      best_model = model;
      best_epoch = epoch;
    } else if (epoch - best_epoch >= config.patience) {
      break;
    }
  }
  result.model = best_model;
  result.best_epoch = best_epoch;
  return result;
}

double gradient_check(const ToyModel& model, std::span<const DataPoint> batch, double epsilon,
                      double kink_tol) {
  if (batch.empty()) fail(Errc::empty_log, "gradient_check on empty batch");
  if (epsilon < 1e-6 || epsilon > 1e-4)
    fail(Errc::out_of_range, "epsilon must be in [1e-6, 1e-4]");

  ToyModel m = model;  // local copy; perturbed in place
  int H = m.hidden;

  // Units whose pre-activation sits near the ReLU kink on this batch are
  // excluded on the input side: the loss is not differentiable there.
  std::vector<bool> kinked(H, false);
  for (const auto& pt : batch)
    for (int h = 0; h < H; ++h) {
      double a = m.w1[2 * h] * pt.x[0] + m.w1[2 * h + 1] * pt.x[1] + m.b1[h];
      if (std::fabs(a) < kink_tol) kinked[h] = true;
    }

  ModelGrads grads = zero_grads(m);
  std::vector<double> mask(H, 1.0);
  double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (const auto& pt : batch) backprop_sample(m, pt.x, pt.label, mask, inv_batch, grads);

  auto loss_at = [&]() {
    std::vector<double> logits;
    std::vector<int> labels;
    logits.reserve(batch.size());
    labels.reserve(batch.size());
    for (const auto& pt : batch) {
      logits.push_back(forward(m, pt.x, ForwardMode::deterministic, nullptr));
      labels.push_back(pt.label);
    }
    return bce_loss(logits, labels);
  };

  auto params = param_ptrs(m);
  auto gptrs = grad_ptrs(grads);
  size_t n_w1 = m.w1.size(), n_b1 = m.b1.size();
  double max_rel = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    if (i < n_w1 + n_b1) {
      int unit = i < n_w1 ? static_cast<int>(i / 2) : static_cast<int>(i - n_w1);
      if (kinked[unit]) continue;
    }
    double saved = *params[i];
    *params[i] = saved + epsilon;
    double f_plus = loss_at();
    *params[i] = saved - epsilon;
    double f_minus = loss_at();
    *params[i] = saved;
    double numeric = (f_plus - f_minus) / (2.0 * epsilon);
    double analytic = *gptrs[i];
    double rel = std::fabs(numeric - analytic) /
                 std::max(std::fabs(numeric) + std::fabs(analytic), 1e-8);
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

PredictionLog predict_log(const ToyModel& model, const SyntheticDataset& data, PredictMode mode,
                          int t, std::optional<double> dropout_override, uint64_t seed) {
  if (mode == PredictMode::mc && t < 1) fail(Errc::out_of_range, "mc mode needs T >= 1");
  PredictionLog log;
  log.meta["model"] = "toy-mlp-h" + std::to_string(model.hidden);
  log.meta["inference"] = mode == PredictMode::deterministic ? "deterministic"
                          : mode == PredictMode::mc          ? "mc"
                                                             : "ensemble-member";
  log.meta["seed"] = std::to_string(seed);
  log.meta["dropout_p"] = format_level(dropout_override.value_or(model.dropout_p));
  if (mode == PredictMode::mc) log.meta["t"] = std::to_string(t);

  log.records.reserve(data.points.size());
  for (size_t i = 0; i < data.points.size(); ++i) {
    const auto& pt = data.points[i];
    PredictionRecord r;
    r.id = pt.id;
    r.split = pt.split;
    r.label = pt.label;
    r.strata = pt.strata;
    if (mode == PredictMode::mc) {
      Rng rng(derive_seed(seed, i));
      std::vector<double> samples(static_cast<size_t>(t));
      for (int k = 0; k < t; ++k)
        samples[k] = sigmoid(forward(model, pt.x, ForwardMode::stochastic, &rng, dropout_override));
      r.mc_probs = std::move(samples);
    } else {
      double z = forward(model, pt.x, ForwardMode::deterministic, nullptr);
      r.logit = z;
      r.prob = sigmoid(z);
    }
    log.records.push_back(std::move(r));
  }
  return log;
}

std::vector<ToyModel> train_ensemble(const SyntheticDataset& data, const TrainConfig& config,
                                     std::span<const uint64_t> seeds) {
  if (seeds.size() < 1) fail(Errc::out_of_range, "ensemble needs at least one seed");
  for (size_t i = 0; i < seeds.size(); ++i)
    for (size_t j = i + 1; j < seeds.size(); ++j)
      if (seeds[i] == seeds[j]) fail(Errc::validation_error, "ensemble seeds must be distinct");
  std::vector<ToyModel> models;
  models.reserve(seeds.size());
  for (uint64_t seed : seeds) {
    TrainConfig cfg = config;
    cfg.seed = seed;
    models.push_back(train(data, cfg).model);
  }
  return models;
}

void save_model(const ToyModel& model, const std::string& path) {
  ordered_json j;
  j["hidden"] = model.hidden;
  j["dropout_p"] = model.dropout_p;
  j["w1"] = model.w1;
  j["b1"] = model.b1;
  j["w2"] = model.w2;
  j["b2"] = model.b2;
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path);
  out << j.dump(2) << "\n";
}

ToyModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::parse_error, std::string(e.what()) + " in " + path);
  }
  ToyModel m;
  m.hidden = j.at("hidden").get<int>();
  m.dropout_p = j.at("dropout_p").get<double>();
  m.w1 = j.at("w1").get<std::vector<double>>();
  m.b1 = j.at("b1").get<std::vector<double>>();
  m.w2 = j.at("w2").get<std::vector<double>>();
  m.b2 = j.at("b2").get<double>();
  if (m.w1.size() != static_cast<size_t>(2 * m.hidden) ||
      m.b1.size() != static_cast<size_t>(m.hidden) || m.w2.size() != static_cast<size_t>(m.hidden))
    fail(Errc::validation_error, "model parameter shapes disagree with hidden width");
  return m;
}

}  // namespace uqeval
