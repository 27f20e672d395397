#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "poisonlab/corruption.hpp"
#include "poisonlab/model.hpp"
#include "poisonlab/optimizer.hpp"

namespace poisonlab {

enum class UnlearnMethod { Retrain, Finetune, Scrub, GradAsc };

std::string to_string(UnlearnMethod m);
/// Accepts retrain, finetune, scrub, grad_asc; the error lists them.
UnlearnMethod parse_unlearn_method(const std::string& name);
const std::vector<UnlearnMethod>& all_unlearn_methods();

inline constexpr double kKlProbabilityFloor = 1e-7;
inline constexpr double kForgetKlCap = 10.0;

struct UnlearnConfig {
  UnlearnMethod method = UnlearnMethod::Finetune;
  std::size_t steps = 50;
  double learning_rate = 0.01;
  double lambda_ce = 1.0;
  double lambda_kl = 0.0;
  double lambda_fo = 0.2;
  double beta = 0.2;
  /// Seeds the fresh initialization used by Retrain.
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct UnlearnStep {
  std::size_t step = 0;
  double val_accuracy = 0.0;
  double forgetting_accuracy = 0.0;
  double retain_loss = 0.0;
  double forget_loss = 0.0;
};

struct UnlearnTrace {
  /// State before the first update, logged as step 0.
  UnlearnStep baseline;
  /// Exactly config.steps records, steps 1..N, measured after each update.
  std::vector<UnlearnStep> steps;
};

struct UnlearnResult {
  std::vector<double> params;
  UnlearnTrace trace;
};

/// KL(Bern(p_teacher) || Bern(p_student)) with both clamped to
/// [1e-7, 1 - 1e-7].
double bernoulli_kl(double p_teacher, double p_student) noexcept;

/// Accuracy against the polluted forget labels. Throws UsageError when empty.
double forgetting_accuracy(const Model& model, std::span<const double> params,
                           const LabeledDataset& forget_polluted);

/// Each step is one full-batch Adam update over the retain set (plus the
/// forget set for Scrub and GradAsc). Adam state starts fresh. Retrain
/// ignores `poisoned` and starts from initial_parameters(hash(seed)).
/// Throws TrainingDiverged on a non-finite objective; the partial trace is
/// not returned in that case.
UnlearnResult unlearn(const Model& model, const UnlearnConfig& config,
                      std::span<const double> poisoned, const PartitionedData& partition,
                      const LabeledDataset& validation);

}  // namespace poisonlab
