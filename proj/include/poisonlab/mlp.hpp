#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "poisonlab/dataset.hpp"
#include "poisonlab/model.hpp"

namespace poisonlab {

/// input -> ReLU(h1) -> ReLU(h2) -> sigmoid(1).
struct MlpConfig {
  std::size_t input_dim = 1;
  std::array<std::size_t, 2> hidden{64, 16};

  std::size_t parameter_count() const noexcept;
  void validate() const;
};

/// Flat parameter vector. Layout: W1 (h1 x in, row-major), b1, W2 (h2 x h1),
/// b2, w3 (h2), b3.
using MlpParams = std::vector<double>;

/// Offsets of each block inside MlpParams.
struct MlpLayout {
  std::size_t w1, b1, w2, b2, w3, b3, total;
  explicit MlpLayout(const MlpConfig& c);
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-layer copies of a flat parameter vector. Copying into Eigen-owned
/// (aligned) storage keeps vectorized reductions independent of where the
/// caller's buffer happens to sit in memory, so results are bit-reproducible.
struct MlpView {
  RowMatrix w1;
  Eigen::VectorXd b1;
  RowMatrix w2;
  Eigen::VectorXd b2;
  Eigen::VectorXd w3;
  double b3;
  MlpView(const MlpConfig& c, std::span<const double> params);
};

/// Glorot-uniform weights, zero biases.
MlpParams mlp_initial_params(const MlpConfig& config, std::uint64_t seed);

/// (Re x, Im x) concatenated; the MLP's view of a complex feature vector.
std::vector<double> complexify_split(std::span<const Complex> features);

/// The real input vector the MLP consumes for one stored sample.
std::vector<double> mlp_input(const LabeledDataset& data, std::size_t row);

/// Single-sample probability, clamped to [1e-12, 1 - 1e-12]. Sums over
/// hidden units are accumulated in value order, so permuting hidden units
/// does not change the result in any bit.
double mlp_forward(const MlpConfig& config, std::span<const double> params,
                   std::span<const double> features);

double mlp_loss(const MlpConfig& config, std::span<const double> params,
                const LabeledDataset& batch);

std::vector<double> mlp_loss_gradient(const MlpConfig& config, std::span<const double> params,
                                      const LabeledDataset& batch);

class MlpModel final : public Model {
 public:
  explicit MlpModel(MlpConfig config);

  const MlpConfig& config() const noexcept { return config_; }

  ModelKind kind() const noexcept override { return ModelKind::Mlp; }
  std::size_t parameter_count() const noexcept override { return config_.parameter_count(); }
  std::vector<double> initial_parameters(std::uint64_t seed) const override;
  std::unique_ptr<EncodedFeatures> encode(const LabeledDataset& data) const override;
  void logits(std::span<const double> params, const EncodedFeatures& inputs,
              std::span<const std::size_t> rows, std::span<double> out) const override;
  void accumulate_logit_gradient(std::span<const double> params, const EncodedFeatures& inputs,
                                 std::span<const std::size_t> rows,
                                 std::span<const double> weights,
                                 std::span<double> grad) const override;
  void coordinate_slices(std::span<const double> params, const EncodedFeatures& inputs,
                         std::span<const std::size_t> rows, std::span<const double> offsets,
                         const LogitWeight& weight, std::size_t jobs,
                         std::span<double> out) const override;
  std::string describe() const override;

 private:
  MlpConfig config_;
};

}  // namespace poisonlab
