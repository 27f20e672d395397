#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "poisonlab/error.hpp"
#include "poisonlab/model.hpp"

namespace poisonlab {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Seeds the per-epoch shuffles.
  std::uint64_t seed = 0;
  bool shuffle = true;

  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
  /// epochs >= 1, batch_size >= 1, learning_rate > 0.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  /// NaN when no validation set was given.
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

struct MetricsLog {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  std::vector<double> params;
  MetricsLog log;
};

/// Raised when a batch produces a non-finite loss or gradient.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t batch, double param_norm, MetricsLog partial);

  std::size_t epoch;
  std::size_t batch;
  double param_norm;
  MetricsLog partial;
};

/// Mini-batch Adam on mean BCE. The order of epoch e is a Fisher-Yates
/// shuffle seeded by hash(config.seed, e); the last short batch is kept.
/// Metrics are evaluated on the full sets after every epoch. Zero epochs
/// returns the initial parameters and an empty log.
TrainResult train(const Model& model, const LabeledDataset& train_set,
                  const LabeledDataset* validation, const TrainConfig& config,
                  std::vector<double> initial_params);

/// Batch order for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch,
                                     bool shuffle);

double l2_norm(std::span<const double> v) noexcept;

}  // namespace poisonlab
