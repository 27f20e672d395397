#include "poisonlab/quantum_sim.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "poisonlab/error.hpp"
#include "sim_kernels.hpp"

namespace poisonlab {

namespace kernels {

Mat2 rx_matrix(double theta) {
  const double c = std::cos(theta / 2);
  const double s = std::sin(theta / 2);
  return {{c, 0}, {0, -s}, {0, -s}, {c, 0}};
}

Mat2 ry_matrix(double theta) {
  const double c = std::cos(theta / 2);
  const double s = std::sin(theta / 2);
  return {{c, 0}, {-s, 0}, {s, 0}, {c, 0}};
}

Mat2 rz_matrix(double theta) {
  return {std::polar(1.0, -theta / 2), {0, 0}, {0, 0}, std::polar(1.0, theta / 2)};
}

}  // namespace kernels

namespace {

using kernels::Mat2;

std::size_t checked_qubits(std::size_t dim) {
  if (dim == 0 || !std::has_single_bit(dim)) {
    throw EncodingError("amplitude vector length " + std::to_string(dim) +
                        " is not a power of two");
  }
  const auto n = static_cast<std::size_t>(std::countr_zero(dim));
  if (n > kMaxQubits) {
    throw EncodingError("register of " + std::to_string(n) + " qubits exceeds the " +
                        std::to_string(kMaxQubits) + "-qubit limit");
  }
  return n;
}

Mat2 single_qubit_matrix(const GateOp& gate, double angle) {
  switch (gate.kind) {
    case GateKind::RX: return kernels::rx_matrix(angle);
    case GateKind::RY: return kernels::ry_matrix(angle);
    case GateKind::RZ: return kernels::rz_matrix(angle);
    case GateKind::RZZ: break;
  }
  throw StructuralError("not a single-qubit gate");
}

void apply_rotation(StateVector& state, const GateOp& gate, double angle) {
  validate_gate(gate, state.n_qubits());
  auto amps = state.amplitudes();
  if (gate.kind == GateKind::RZZ) {
    const Complex same = std::polar(1.0, angle / 2);
    const Complex diff = std::conj(same);
    for (std::size_t i = 0; i < amps.size(); ++i) {
      amps[i] *= kernels::zz_sign(i, gate.target, gate.partner) > 0 ? same : diff;
    }
    return;
  }
  kernels::apply_1q(amps, gate.target, single_qubit_matrix(gate, angle));
}

// <lhs| G |rhs> for the gate's generator G.
Complex generator_element(const StateVector& lhs, const StateVector& rhs,
                          const GateOp& gate) {
  const auto l = lhs.amplitudes();
  const auto r = rhs.amplitudes();
  Complex acc{0, 0};
  switch (gate.kind) {
    case GateKind::RX:
      kernels::for_each_pair(l.size(), gate.target, [&](std::size_t i0, std::size_t i1) {
        acc += std::conj(l[i0]) * r[i1] + std::conj(l[i1]) * r[i0];
      });
      break;
    case GateKind::RY: {
      const Complex i{0, 1};
      kernels::for_each_pair(l.size(), gate.target, [&](std::size_t i0, std::size_t i1) {
        acc += std::conj(l[i0]) * (-i * r[i1]) + std::conj(l[i1]) * (i * r[i0]);
      });
      break;
    }
    case GateKind::RZ:
      kernels::for_each_pair(l.size(), gate.target, [&](std::size_t i0, std::size_t i1) {
        acc += std::conj(l[i0]) * r[i0] - std::conj(l[i1]) * r[i1];
      });
      break;
    case GateKind::RZZ:
      for (std::size_t b = 0; b < l.size(); ++b) {
        acc -= kernels::zz_sign(b, gate.target, gate.partner) * std::conj(l[b]) * r[b];
      }
      break;
  }
  return acc;
}

void apply_z(StateVector& state, std::size_t qubit) {
  auto amps = state.amplitudes();
  const std::size_t mask = std::size_t{1} << qubit;
  for (std::size_t b = 0; b < amps.size(); ++b) {
    if (b & mask) amps[b] = -amps[b];
  }
}

void check_readout(std::size_t qubit, std::size_t n_qubits) {
  if (qubit >= n_qubits) {
    throw StructuralError("readout qubit " + std::to_string(qubit) +
                          " out of range for " + std::to_string(n_qubits) + " qubits");
  }
}

}  // namespace

StateVector::StateVector(std::size_t n_qubits)
    : n_qubits_(n_qubits), amps_(std::size_t{1} << n_qubits, Complex{0, 0}) {
  if (n_qubits > kMaxQubits) {
    throw StructuralError("register of " + std::to_string(n_qubits) +
                          " qubits exceeds the simulator limit");
  }
  amps_[0] = 1.0;
}

StateVector StateVector::from_amplitudes(std::vector<Complex> amplitudes) {
  const std::size_t n = checked_qubits(amplitudes.size());
  return StateVector(n, std::move(amplitudes));
}

double StateVector::norm() const noexcept {
  double s = 0.0;
  for (const auto& a : amps_) s += std::norm(a);
  return std::sqrt(s);
}

void validate_gate(const GateOp& gate, std::size_t n_qubits) {
  if (gate.target >= n_qubits) {
    throw StructuralError("gate target " + std::to_string(gate.target) +
                          " out of range for " + std::to_string(n_qubits) + " qubits");
  }
  if (gate.kind != GateKind::RZZ) return;
  if (gate.partner >= n_qubits) {
    throw StructuralError("RZZ partner " + std::to_string(gate.partner) +
                          " out of range for " + std::to_string(n_qubits) + " qubits");
  }
  const std::size_t lo = std::min(gate.target, gate.partner);
  const std::size_t hi = std::max(gate.target, gate.partner);
  const bool neighbours = hi - lo == 1 || (lo == 0 && hi == n_qubits - 1 && n_qubits > 2);
  if (lo == hi || !neighbours) {
    throw StructuralError("RZZ on (" + std::to_string(gate.target) + ", " +
                          std::to_string(gate.partner) +
                          ") is not a pair of distinct chain neighbours");
  }
}

void apply_gate(StateVector& state, const GateOp& gate) {
  apply_rotation(state, gate, gate.angle);
}

void apply_gate_inverse(StateVector& state, const GateOp& gate) {
  apply_rotation(state, gate, -gate.angle);
}

StateVector run_circuit(StateVector state, std::span<const GateOp> circuit) {
  for (const auto& g : circuit) apply_gate(state, g);
  return state;
}

StateVector amplitude_encode(std::span<const Complex> features) {
  checked_qubits(features.size());
  double sq = 0.0;
  for (const auto& f : features) sq += std::norm(f);
  if (!(sq > 0.0) || !std::isfinite(sq)) {
    throw EncodingError("cannot amplitude-encode a vector with zero or non-finite norm");
  }
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<Complex> amps(features.begin(), features.end());
  for (auto& a : amps) a *= inv;
  return StateVector::from_amplitudes(std::move(amps));
}

StateVector amplitude_encode(std::span<const double> features) {
  std::vector<Complex> promoted(features.begin(), features.end());
  return amplitude_encode(std::span<const Complex>(promoted));
}

double expect_z(const StateVector& state, std::size_t qubit) {
  check_readout(qubit, state.n_qubits());
  const auto amps = state.amplitudes();
  const std::size_t mask = std::size_t{1} << qubit;
  double acc = 0.0;
  for (std::size_t b = 0; b < amps.size(); ++b) {
    acc += (b & mask) ? -std::norm(amps[b]) : std::norm(amps[b]);
  }
  return acc;
}

std::vector<double> adjoint_gradient(const StateVector& state0,
                                     std::span<const GateOp> circuit,
                                     std::size_t readout_qubit) {
  check_readout(readout_qubit, state0.n_qubits());
  StateVector phi = run_circuit(state0, circuit);
  StateVector lambda = phi;
  apply_z(lambda, readout_qubit);

  // Walking backwards, phi is the state right after gate k and lambda is the
  // back-propagated observable; dE/dt_k = Im <lambda| G_k |phi>.
  std::vector<double> grad(circuit.size());
  for (std::size_t k = circuit.size(); k-- > 0;) {
    grad[k] = generator_element(lambda, phi, circuit[k]).imag();
    apply_gate_inverse(phi, circuit[k]);
    apply_gate_inverse(lambda, circuit[k]);
  }
  return grad;
}

std::vector<double> parameter_shift_gradient(const StateVector& state0,
                                             std::span<const GateOp> circuit,
                                             std::size_t readout_qubit) {
  check_readout(readout_qubit, state0.n_qubits());
  std::vector<GateOp> shifted(circuit.begin(), circuit.end());
  std::vector<double> grad(circuit.size());
  constexpr double kShift = std::numbers::pi / 2;
  for (std::size_t k = 0; k < shifted.size(); ++k) {
    const double base = shifted[k].angle;
    shifted[k].angle = base + kShift;
    const double plus = expect_z(run_circuit(state0, shifted), readout_qubit);
    shifted[k].angle = base - kShift;
    const double minus = expect_z(run_circuit(state0, shifted), readout_qubit);
    shifted[k].angle = base;
    grad[k] = 0.5 * (plus - minus);
  }
  return grad;
}

}  // namespace poisonlab
