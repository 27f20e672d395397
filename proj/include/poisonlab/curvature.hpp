#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "poisonlab/model.hpp"

namespace poisonlab {

/// Writes the loss gradient at the given parameters into the output span.
using GradientFn = std::function<void(std::span<const double>, std::span<double>)>;

/// H_kk = (g_k(theta + h e_k) - g_k(theta - h e_k)) / (2h) for every k.
/// Throws NumericalError naming the first non-finite entry.
std::vector<double> hessian_diagonal(const GradientFn& gradient, std::span<const double> params,
                                     double h, std::size_t jobs = 1);

/// Diagonal of the mean-BCE Hessian over the given rows of a split.
std::vector<double> hessian_diagonal(const Model& model, std::span<const double> params,
                                     const EncodedSplit& split, std::span<const std::size_t> rows,
                                     double h, std::size_t jobs = 1);

/// Seeded subset of min(count, n) row positions, sorted.
std::vector<std::size_t> hessian_subset(std::size_t n, std::size_t count, std::uint64_t seed);

struct HessianOptions {
  std::size_t subset_size = 100;
  std::uint64_t subset_seed = 0;
  double step = 1e-3;
  /// Second step used for the consistency check; <= 0 disables it.
  double check_step = 1e-4;
  /// Entries whose two estimates differ by more than this relative amount
  /// are flagged.
  double flag_threshold = 0.05;
  std::size_t jobs = 1;
};

struct HessianReport {
  ModelKind model_kind = ModelKind::Qnn;
  std::string model_shape;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> hessian_diagonal;
  double trace = 0.0;
  std::size_t n_samples_used = 0;
  double step_size = 0.0;
  double check_step = 0.0;
  double check_trace = 0.0;
  std::vector<std::size_t> flagged;
  std::vector<std::int64_t> subset_ids;
};

HessianReport hessian_report(const Model& model, std::span<const double> params,
                             const LabeledDataset& train_set, double alpha, std::uint64_t seed,
                             const HessianOptions& options);

/// trace_noisy / trace_clean. Throws NumericalError when |trace_clean| <
/// 1e-12.
double lrr(double trace_noisy, double trace_clean);

enum class MinimalModel { SingleNeuron, SingleQubit };

/// One scalar sample for the one-parameter models: logit theta*x for the
/// neuron, cos(pi x + theta) for the qubit.
struct MinimalModelPoint {
  double x = 0.0;
  int y = 0;
  double theta = 0.0;
  MinimalModel model = MinimalModel::SingleNeuron;
};

double minimal_loss(const MinimalModelPoint& point);
/// dL/dtheta = (p - y) dz/dtheta.
double minimal_gradient(const MinimalModelPoint& point);

/// x^2 p (1 - p), p = sigmoid(theta x).
double minimal_mlp_hessian(const MinimalModelPoint& point);

struct MinimalQnnHessian {
  double term_a;  // p(1-p) sin^2(pi x + theta), never negative
  double term_b;  // (p - y) cos(pi x + theta)
  double total;   // term_a - term_b
};

MinimalQnnHessian minimal_qnn_hessian(const MinimalModelPoint& point);

}  // namespace poisonlab
