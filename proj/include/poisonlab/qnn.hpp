#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "poisonlab/dataset.hpp"
#include "poisonlab/model.hpp"
#include "poisonlab/quantum_sim.hpp"

namespace poisonlab {

/// Layered ansatz: per layer RX, RY, RX on every qubit, then RZZ on chain
/// neighbours. Readout is <Z> on one qubit, mapped to p = sigmoid(k <Z>).
struct QnnConfig {
  std::size_t n_qubits = 1;
  std::size_t depth = 1;
  double sigmoid_scale = 5.0;
  /// Defaults to the last qubit when unset.
  std::int64_t readout_qubit = -1;
  /// Adds the (n-1, 0) entangler that closes the chain into a ring.
  bool periodic_entanglers = false;

  std::size_t readout() const;
  std::size_t entanglers_per_layer() const noexcept;
  std::size_t parameters_per_layer() const noexcept;
  std::size_t parameter_count() const noexcept;

  /// Throws UsageError on an invalid combination.
  void validate() const;
};

/// Flat angle vector with layout [RX row, RY row, RX row, RZZ row] per layer.
using QnnParams = std::vector<double>;

/// Angles drawn uniformly from [-0.1, 0.1].
QnnParams qnn_initial_params(const QnnConfig& config, std::uint64_t seed);

/// The ansatz as an explicit gate list, one gate per parameter in parameter
/// order.
std::vector<GateOp> build_ansatz(const QnnConfig& config, std::span<const double> params);

/// Fused evaluation of the ansatz: the three rotations on a qubit are merged
/// into one 2x2 update and each entangler layer into one diagonal phase, and
/// the reverse sweep recovers all per-angle derivatives from the fused blocks.
/// Produces the same numbers as adjoint_gradient on build_ansatz().
class AnsatzProgram {
 public:
  AnsatzProgram(const QnnConfig& config, std::span<const double> params);

  /// <Z_readout> after the circuit, for an already-normalized input.
  double expectation(std::span<const Complex> input) const;

  /// Returns <Z_readout> and adds weight * d<Z>/dtheta into grad.
  double expectation_and_gradient(std::span<const Complex> input, double weight,
                                  std::span<double> grad) const;

  /// Same, with the weight chosen from <Z> after the forward pass.
  double expectation_and_gradient(std::span<const Complex> input,
                                  const std::function<double(double)>& weight_of,
                                  std::span<double> grad) const;

  /// Returns E = <Z_readout> and, for every angle k, half_turn[k] =
  /// E(theta + pi e_k) and grad[k] = dE/dtheta_k. Each angle enters through
  /// a single exp(-+i t P / 2), so along one angle
  /// E(theta + d e_k) = a + b cos d + grad[k] sin d with
  /// a = (E + half_turn[k]) / 2 and b = (E - half_turn[k]) / 2.
  double angle_slices(std::span<const Complex> input, std::span<double> half_turn,
                      std::span<double> grad) const;

 private:
  struct Layer {
    // Fused RX(c) RY(b) RX(a) per qubit, row-major 2x2.
    std::vector<std::array<Complex, 4>> fused;
    // exp(+i/2 sum_j t_j Z_j Z_j+1) per basis index; empty without bonds.
    std::vector<Complex> phases;
  };

  QnnConfig config_;
  std::vector<double> angles_;
  std::vector<std::pair<std::size_t, std::size_t>> bonds_;
  std::vector<Layer> layers_;

  void run_layers(std::vector<Complex>& phi, std::size_t from) const;
  double readout(std::span<const Complex> phi) const;
};

/// p = sigmoid(k <Z_readout>) for one feature vector of length 2^n.
double qnn_forward(const QnnConfig& config, std::span<const double> params,
                   std::span<const Complex> features);

/// Mean clamped BCE over the batch. Throws UsageError on an empty batch.
double qnn_loss(const QnnConfig& config, std::span<const double> params,
                const LabeledDataset& batch);

/// dL/dtheta = mean_i (p_i - y_i) k d<Z>_i/dtheta.
std::vector<double> qnn_loss_gradient(const QnnConfig& config, std::span<const double> params,
                                      const LabeledDataset& batch);

class QnnModel final : public Model {
 public:
  explicit QnnModel(QnnConfig config);

  const QnnConfig& config() const noexcept { return config_; }

  ModelKind kind() const noexcept override { return ModelKind::Qnn; }
  std::size_t parameter_count() const noexcept override { return config_.parameter_count(); }
  std::vector<double> initial_parameters(std::uint64_t seed) const override;
  std::unique_ptr<EncodedFeatures> encode(const LabeledDataset& data) const override;
  void logits(std::span<const double> params, const EncodedFeatures& inputs,
              std::span<const std::size_t> rows, std::span<double> out) const override;
  void accumulate_logit_gradient(std::span<const double> params, const EncodedFeatures& inputs,
                                 std::span<const std::size_t> rows,
                                 std::span<const double> weights,
                                 std::span<double> grad) const override;
  void logits_and_gradient(std::span<const double> params, const EncodedFeatures& inputs,
                           std::span<const std::size_t> rows, const LogitWeight& weight,
                           std::span<double> out, std::span<double> grad) const override;
  void coordinate_slices(std::span<const double> params, const EncodedFeatures& inputs,
                         std::span<const std::size_t> rows, std::span<const double> offsets,
                         const LogitWeight& weight, std::size_t jobs,
                         std::span<double> out) const override;
  std::string describe() const override;

 private:
  QnnConfig config_;
};

}  // namespace poisonlab
