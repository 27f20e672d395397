#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace poisonlab {

using Complex = std::complex<double>;

/// Largest register the dense simulator accepts.
inline constexpr std::size_t kMaxQubits = 16;

/// Dense n-qubit state. Qubit 0 is the least-significant bit of the basis
/// index.
class StateVector {
 public:
  /// |0...0> on n qubits.
  explicit StateVector(std::size_t n_qubits);

  /// Takes ownership of raw amplitudes; the length must be a power of two.
  /// No normalization is applied.
  static StateVector from_amplitudes(std::vector<Complex> amplitudes);

  std::size_t n_qubits() const noexcept { return n_qubits_; }
  std::size_t dim() const noexcept { return amps_.size(); }

  std::span<const Complex> amplitudes() const noexcept { return amps_; }
  std::span<Complex> amplitudes() noexcept { return amps_; }

  Complex operator[](std::size_t i) const { return amps_[i]; }
  Complex& operator[](std::size_t i) { return amps_[i]; }

  double norm() const noexcept;

 private:
  StateVector(std::size_t n_qubits, std::vector<Complex> amps)
      : n_qubits_(n_qubits), amps_(std::move(amps)) {}

  std::size_t n_qubits_;
  std::vector<Complex> amps_;
};

enum class GateKind { RX, RY, RZ, RZZ };

/// A parameterized rotation. Conventions:
///   RX(t) = exp(-i t X / 2), RY(t) = exp(-i t Y / 2), RZ(t) = exp(-i t Z / 2),
///   RZZ(t) = exp(+i t/2 Z_a Z_b).
/// Every gate is therefore exp(-i t G / 2) with G = X, Y, Z or -Z_a Z_b.
struct GateOp {
  GateKind kind;
  std::size_t target;
  std::size_t partner = 0;  // second qubit, RZZ only
  double angle = 0.0;

  static GateOp rx(std::size_t q, double t) { return {GateKind::RX, q, 0, t}; }
  static GateOp ry(std::size_t q, double t) { return {GateKind::RY, q, 0, t}; }
  static GateOp rz(std::size_t q, double t) { return {GateKind::RZ, q, 0, t}; }
  static GateOp rzz(std::size_t a, std::size_t b, double t) {
    return {GateKind::RZZ, a, b, t};
  }
};

/// Throws StructuralError when the gate does not fit the register. RZZ
/// partners must be chain neighbours (|a-b| = 1, or the ring closure
/// {0, n-1}).
void validate_gate(const GateOp& gate, std::size_t n_qubits);

/// Applies the gate in place.
void apply_gate(StateVector& state, const GateOp& gate);

/// Applies the inverse of the gate in place.
void apply_gate_inverse(StateVector& state, const GateOp& gate);

/// Runs the circuit on a copy of the input.
StateVector run_circuit(StateVector state, std::span<const GateOp> circuit);

/// Normalizes a power-of-two length vector into a state.
/// Throws EncodingError on bad length or zero norm.
StateVector amplitude_encode(std::span<const Complex> features);
StateVector amplitude_encode(std::span<const double> features);

/// <Z_qubit>.
double expect_z(const StateVector& state, std::size_t qubit);

/// d<Z_readout>/d(angle_k) for every gate, by one forward and one reverse
/// sweep.
std::vector<double> adjoint_gradient(const StateVector& state0,
                                     std::span<const GateOp> circuit,
                                     std::size_t readout_qubit);

/// Same quantity by the two-term shift rule; two circuit runs per gate.
std::vector<double> parameter_shift_gradient(const StateVector& state0,
                                             std::span<const GateOp> circuit,
                                             std::size_t readout_qubit);

}  // namespace poisonlab
