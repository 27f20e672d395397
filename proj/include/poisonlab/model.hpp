#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "poisonlab/dataset.hpp"

namespace poisonlab {

enum class ModelKind : std::uint8_t { Qnn = 0, Mlp = 1 };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

inline constexpr double kProbabilityFloor = 1e-12;

double sigmoid(double u) noexcept;

/// Binary cross-entropy with p clamped to [1e-12, 1 - 1e-12].
double binary_cross_entropy(double p, int label) noexcept;

/// Model-specific representation of a dataset's features, built once per
/// dataset by Model::encode.
class EncodedFeatures {
 public:
  virtual ~EncodedFeatures() = default;
  virtual std::size_t rows() const noexcept = 0;
};

/// A binary classifier p = sigmoid(u(theta, x)) over a flat parameter
/// vector. The training, unlearning and curvature code only sees this
/// interface.
class Model {
 public:
  virtual ~Model() = default;

  virtual ModelKind kind() const noexcept = 0;
  virtual std::size_t parameter_count() const noexcept = 0;
  virtual std::vector<double> initial_parameters(std::uint64_t seed) const = 0;

  virtual std::unique_ptr<EncodedFeatures> encode(const LabeledDataset& data) const = 0;

  /// Pre-sigmoid outputs u for the selected rows.
  virtual void logits(std::span<const double> params, const EncodedFeatures& inputs,
                      std::span<const std::size_t> rows, std::span<double> out) const = 0;

  /// grad += sum_i weights[i] * du_i/dtheta over the selected rows.
  virtual void accumulate_logit_gradient(std::span<const double> params,
                                         const EncodedFeatures& inputs,
                                         std::span<const std::size_t> rows,
                                         std::span<const double> weights,
                                         std::span<double> grad) const = 0;

  /// Weight of row i given its logit u_i.
  using LogitWeight = std::function<double(std::size_t, double)>;

  /// Writes the logits into `out` and adds sum_i weight(i, u_i) du_i/dtheta
  /// into grad. The default calls logits() and then
  /// accumulate_logit_gradient(); per-sample models override it to share the
  /// forward pass.
  virtual void logits_and_gradient(std::span<const double> params, const EncodedFeatures& inputs,
                                   std::span<const std::size_t> rows, const LogitWeight& weight,
                                   std::span<double> out, std::span<double> grad) const;

  /// One-coordinate slices of the weighted gradient. For every parameter k
  /// and offset d_j, out[k * offsets.size() + j] = sum_i weight(i, u_i) du_i/dtheta_k
  /// with theta_k moved by d_j and every other parameter left alone. The
  /// default recomputes the full gradient for each (k, d_j); models with
  /// cheap exact single-coordinate updates override it. Results do not
  /// depend on `jobs`.
  virtual void coordinate_slices(std::span<const double> params, const EncodedFeatures& inputs,
                                 std::span<const std::size_t> rows,
                                 std::span<const double> offsets, const LogitWeight& weight,
                                 std::size_t jobs, std::span<double> out) const;

  /// Short human-readable shape, e.g. "qnn(n=12,D=4,k=5)".
  virtual std::string describe() const = 0;
};

/// A dataset paired with its encoding for one model.
struct EncodedSplit {
  const LabeledDataset* data = nullptr;
  std::unique_ptr<EncodedFeatures> features;

  EncodedSplit() = default;
  EncodedSplit(const Model& model, const LabeledDataset& d)
      : data(&d), features(model.encode(d)) {}

  std::size_t size() const noexcept { return data ? data->size() : 0; }
};

std::vector<std::size_t> all_rows(std::size_t n);

/// Probabilities for every row of the split.
std::vector<double> predict(const Model& model, std::span<const double> params,
                            const EncodedSplit& split);

/// Mean clamped BCE over the given rows; throws UsageError when empty.
double mean_bce(const Model& model, std::span<const double> params, const EncodedSplit& split,
                std::span<const std::size_t> rows);

/// Mean BCE and its gradient over the rows. The gradient uses
/// dBCE/du = sigmoid(u) - y.
double mean_bce_gradient(const Model& model, std::span<const double> params,
                         const EncodedSplit& split, std::span<const std::size_t> rows,
                         std::span<double> grad);

/// Fraction of rows where (p > 0.5) equals the label; p = 0.5 predicts 0.
/// Throws UsageError on an empty dataset.
double accuracy(const Model& model, std::span<const double> params, const EncodedSplit& split);

/// Same rule applied to precomputed probabilities.
double accuracy_from_probabilities(std::span<const double> probs, std::span<const int> labels);

}  // namespace poisonlab
