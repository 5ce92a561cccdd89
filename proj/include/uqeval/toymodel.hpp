#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uqeval/core.hpp"
#include "uqeval/rng.hpp"

namespace uqeval {

struct DataPoint {
  std::string id;
  std::array<double, 2> x{0.0, 0.0};
  int label = 0;
  Split split = Split::train;
  std::map<std::string, std::string> strata;

  bool operator==(const DataPoint&) const = default;
};

struct SyntheticDataset {
  std::vector<DataPoint> points;
  long n = 0;       // in-distribution points (train+val+test)
  long n_ood = 0;
  double overlap = 0.0;
  double ood_shift = 0.0;
  uint64_t seed = 0;

  bool operator==(const SyntheticDataset&) const = default;
};

struct SyntheticConfig {
  long n = 4000;          // must be even; classes are balanced exactly
  uint64_t seed = 42;
  double overlap = 0.5;   // per-class isotropic variance
  double ood_shift = 0.0; // y-offset of the OOD cluster means
  long n_ood = -1;        // -1: same size as the test split
  double train_frac = 0.70;
  double val_frac = 0.15;
};

/// Two isotropic Gaussians at (-1,0) and (+1,0) with variance `overlap`,
/// class-balanced, split train/val/test by a seeded shuffle. The OOD split is
/// drawn with both means shifted by ood_shift and tagged with a source
/// stratum unseen in distribution ("C").
SyntheticDataset gen_synthetic(const SyntheticConfig& config);

void write_dataset(const SyntheticDataset& data, const std::string& path);
SyntheticDataset load_dataset(const std::string& path);

/// 2-H-1 MLP with one inverted-dropout site after the ReLU hidden layer.
struct ToyModel {
  int hidden = 16;
  double dropout_p = 0.1;
  std::vector<double> w1;  // hidden x 2, row h = weights into unit h
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;

  bool operator==(const ToyModel&) const = default;
};

enum class ForwardMode { deterministic, stochastic };

/// Single forward pass. Stochastic mode samples an inverted dropout mask
/// (zero with prob p, survivors scaled by 1/(1-p)); rng may be null in
/// deterministic mode. dropout_p <= 0 makes the two modes bit-equal.
double forward(const ToyModel& model, const std::array<double, 2>& x, ForwardMode mode,
               Rng* rng, std::optional<double> dropout_override = std::nullopt);

/// Mean softplus-stabilized BCE: max(z,0) - z*y + log(1 + exp(-|z|)).
double bce_loss(std::span<const double> logits, std::span<const int> labels);

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 32;
  int max_epochs = 30;
  int patience = 5;
  uint64_t seed = 42;
  double dropout_p = 0.1;
  int hidden = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_nll = 0.0;
};

struct TrainResult {
  ToyModel model;          // checkpoint with the best validation NLL
  std::vector<EpochStats> trace;
  int best_epoch = 0;
  int stopped_epoch = 0;
};

/// Mini-batch Adam on BCE with dropout active; early stopping on validation
/// NLL (deterministic passes) with the configured patience. Deterministic
/// per (dataset, config seed). Throws DivergedLoss on non-finite loss.
TrainResult train(const SyntheticDataset& data, const TrainConfig& config);

/// Max relative error of analytic gradients against central finite
/// differences over all parameters, dropout disabled. Hidden units whose
/// pre-activation sits within kink_tol of the ReLU kink on this batch are
/// excluded (their input-side parameters are not differentiable there).
double gradient_check(const ToyModel& model, std::span<const DataPoint> batch, double epsilon,
                      double kink_tol = 1e-3);

enum class PredictMode { deterministic, mc, ensemble_member };

/// Emit a prediction log over all dataset points (order preserved, strata and
/// split copied). deterministic/ensemble_member: logit + prob. mc: mc_probs
/// of length t from per-record streams derived from (seed, record index).
PredictionLog predict_log(const ToyModel& model, const SyntheticDataset& data, PredictMode mode,
                          int t, std::optional<double> dropout_override, uint64_t seed);

/// K independently trained models, identical config except the seed.
std::vector<ToyModel> train_ensemble(const SyntheticDataset& data, const TrainConfig& config,
                                     std::span<const uint64_t> seeds);

void save_model(const ToyModel& model, const std::string& path);
ToyModel load_model(const std::string& path);

}  // namespace uqeval
