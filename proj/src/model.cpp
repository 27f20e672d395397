#include "poisonlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "poisonlab/error.hpp"
#include "poisonlab/parallel.hpp"

namespace poisonlab {

std::string to_string(ModelKind kind) { return kind == ModelKind::Qnn ? "qnn" : "mlp"; }

ModelKind parse_model_kind(const std::string& name) {
  if (name == "qnn") return ModelKind::Qnn;
  if (name == "mlp") return ModelKind::Mlp;
  throw UsageError("unknown model '" + name + "' (expected qnn or mlp)");
}

double sigmoid(double u) noexcept {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double binary_cross_entropy(double p, int label) noexcept {
  const double q = std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
  return label == 1 ? -std::log(q) : -std::log1p(-q);
}

void Model::logits_and_gradient(std::span<const double> params, const EncodedFeatures& inputs,
                                std::span<const std::size_t> rows, const LogitWeight& weight,
                                std::span<double> out, std::span<double> grad) const {
  logits(params, inputs, rows, out);
  std::vector<double> w(rows.size());
  bool any = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    w[i] = weight(i, out[i]);
    any = any || w[i] != 0.0;
  }
  if (any) accumulate_logit_gradient(params, inputs, rows, w, grad);
}

void Model::coordinate_slices(std::span<const double> params, const EncodedFeatures& inputs,
                              std::span<const std::size_t> rows,
                              std::span<const double> offsets, const LogitWeight& weight,
                              std::size_t jobs, std::span<double> out) const {
  const std::size_t n = params.size();
  const std::size_t m = offsets.size();
  if (out.size() != n * m) throw StructuralError("coordinate slice buffer has the wrong size");
  const std::size_t chunks = std::max<std::size_t>(1, std::min(n, jobs == 0 ? default_jobs() : jobs));
  parallel_for(chunks, chunks, [&](std::size_t c) {
    std::vector<double> theta(params.begin(), params.end());
    std::vector<double> grad(n);
    std::vector<double> u(rows.size());
    for (std::size_t k = c; k < n; k += chunks) {
      for (std::size_t j = 0; j < m; ++j) {
        theta[k] = params[k] + offsets[j];
        std::fill(grad.begin(), grad.end(), 0.0);
        logits_and_gradient(theta, inputs, rows, weight, u, grad);
        out[k * m + j] = grad[k];
      }
      theta[k] = params[k];
    }
  });
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

std::vector<double> predict(const Model& model, std::span<const double> params,
                            const EncodedSplit& split) {
  const auto rows = all_rows(split.size());
  std::vector<double> u(rows.size());
  model.logits(params, *split.features, rows, u);
  for (auto& v : u) v = sigmoid(v);
  return u;
}

double mean_bce(const Model& model, std::span<const double> params, const EncodedSplit& split,
                std::span<const std::size_t> rows) {
  if (rows.empty()) throw UsageError("loss over an empty batch");
  std::vector<double> u(rows.size());
  model.logits(params, *split.features, rows, u);
  double acc = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    acc += binary_cross_entropy(sigmoid(u[i]), split.data->labels[rows[i]]);
  }
  return acc / static_cast<double>(rows.size());
}

double mean_bce_gradient(const Model& model, std::span<const double> params,
                         const EncodedSplit& split, std::span<const std::size_t> rows,
                         std::span<double> grad) {
  if (rows.empty()) throw UsageError("loss over an empty batch");
  std::vector<double> u(rows.size());
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  const auto& labels = split.data->labels;
  model.logits_and_gradient(
      params, *split.features, rows,
      [&](std::size_t i, double ui) { return (sigmoid(ui) - labels[rows[i]]) * inv_n; }, u,
      grad);
  double acc = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    acc += binary_cross_entropy(sigmoid(u[i]), labels[rows[i]]);
  }
  return acc * inv_n;
}

double accuracy_from_probabilities(std::span<const double> probs, std::span<const int> labels) {
  if (probs.empty()) throw UsageError("accuracy of an empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const int predicted = probs[i] > 0.5 ? 1 : 0;
    hits += predicted == labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

double accuracy(const Model& model, std::span<const double> params, const EncodedSplit& split) {
  if (split.size() == 0) throw UsageError("accuracy of an empty dataset");
  const auto probs = predict(model, params, split);
  return accuracy_from_probabilities(probs, split.data->labels);
}

}  // namespace poisonlab
