#include "poisonlab/qnn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "poisonlab/error.hpp"
#include "poisonlab/parallel.hpp"
#include "poisonlab/rng.hpp"
#include "sim_kernels.hpp"

namespace poisonlab {

namespace {

using kernels::Mat2;

Mat2 to_mat(const std::array<Complex, 4>& m) { return {m[0], m[1], m[2], m[3]}; }

// sum_ij A_ij C_ij with C_ij = sum_rest conj(lambda_i) phi_j.
Complex contract(const Mat2& a, const Mat2& c) {
  return a.a00 * c.a00 + a.a01 * c.a01 + a.a10 * c.a10 + a.a11 * c.a11;
}

const Mat2 kPauliX{{0, 0}, {1, 0}, {1, 0}, {0, 0}};
const Mat2 kPauliY{{0, 0}, {0, -1}, {0, 1}, {0, 0}};

class QnnInputs final : public EncodedFeatures {
 public:
  std::vector<StateVector> states;
  std::size_t rows() const noexcept override { return states.size(); }
};

void check_params(const QnnConfig& config, std::span<const double> params) {
  if (params.size() != config.parameter_count()) {
    throw StructuralError("QNN expects " + std::to_string(config.parameter_count()) +
                          " parameters, got " + std::to_string(params.size()));
  }
}

void check_features(const QnnConfig& config, std::size_t len) {
  if (len != (std::size_t{1} << config.n_qubits)) {
    throw StructuralError("QNN on " + std::to_string(config.n_qubits) +
                          " qubits expects feature length " +
                          std::to_string(std::size_t{1} << config.n_qubits) + ", got " +
                          std::to_string(len));
  }
}

std::vector<std::pair<std::size_t, std::size_t>> chain_bonds(const QnnConfig& c) {
  std::vector<std::pair<std::size_t, std::size_t>> bonds;
  for (std::size_t q = 0; q + 1 < c.n_qubits; ++q) bonds.emplace_back(q, q + 1);
  if (c.periodic_entanglers && c.n_qubits > 2) bonds.emplace_back(c.n_qubits - 1, 0);
  return bonds;
}

}  // namespace

std::size_t QnnConfig::readout() const {
  return readout_qubit < 0 ? n_qubits - 1 : static_cast<std::size_t>(readout_qubit);
}

std::size_t QnnConfig::entanglers_per_layer() const noexcept {
  if (n_qubits < 2) return 0;
  return (periodic_entanglers && n_qubits > 2) ? n_qubits : n_qubits - 1;
}

std::size_t QnnConfig::parameters_per_layer() const noexcept {
  return 3 * n_qubits + entanglers_per_layer();
}

std::size_t QnnConfig::parameter_count() const noexcept {
  return depth * parameters_per_layer();
}

void QnnConfig::validate() const {
  if (n_qubits < 1 || n_qubits > kMaxQubits) {
    throw UsageError("QNN qubit count must be in [1, " + std::to_string(kMaxQubits) + "]");
  }
  if (!(sigmoid_scale > 0.0) || !std::isfinite(sigmoid_scale)) {
    throw UsageError("QNN sigmoid scale must be positive and finite");
  }
  if (readout_qubit >= static_cast<std::int64_t>(n_qubits)) {
    throw UsageError("QNN readout qubit out of range");
  }
}

QnnParams qnn_initial_params(const QnnConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  QnnParams p(config.parameter_count());
  for (auto& t : p) t = rng.uniform(-0.1, 0.1);
  return p;
}

std::vector<GateOp> build_ansatz(const QnnConfig& config, std::span<const double> params) {
  config.validate();
  check_params(config, params);
  const std::size_t n = config.n_qubits;
  const auto bonds = chain_bonds(config);
  std::vector<GateOp> gates;
  gates.reserve(params.size());
  std::size_t k = 0;
  for (std::size_t layer = 0; layer < config.depth; ++layer) {
    for (std::size_t q = 0; q < n; ++q) gates.push_back(GateOp::rx(q, params[k++]));
    for (std::size_t q = 0; q < n; ++q) gates.push_back(GateOp::ry(q, params[k++]));
    for (std::size_t q = 0; q < n; ++q) gates.push_back(GateOp::rx(q, params[k++]));
    for (const auto& [a, b] : bonds) gates.push_back(GateOp::rzz(a, b, params[k++]));
  }
  return gates;
}

AnsatzProgram::AnsatzProgram(const QnnConfig& config, std::span<const double> params)
    : config_(config), angles_(params.begin(), params.end()), bonds_(chain_bonds(config)) {
  config_.validate();
  check_params(config_, params);
  const std::size_t n = config_.n_qubits;
  const std::size_t dim = std::size_t{1} << n;
  const std::size_t per_layer = config_.parameters_per_layer();
  layers_.resize(config_.depth);
  for (std::size_t l = 0; l < config_.depth; ++l) {
    const double* t = angles_.data() + l * per_layer;
    auto& layer = layers_[l];
    layer.fused.resize(n);
    for (std::size_t q = 0; q < n; ++q) {
      const Mat2 m = kernels::rx_matrix(t[2 * n + q]) * kernels::ry_matrix(t[n + q]) *
                     kernels::rx_matrix(t[q]);
      layer.fused[q] = {m.a00, m.a01, m.a10, m.a11};
    }
    if (!bonds_.empty()) {
      const double* zz = t + 3 * n;
      layer.phases.resize(dim);
      for (std::size_t b = 0; b < dim; ++b) {
        double s = 0.0;
        for (std::size_t j = 0; j < bonds_.size(); ++j) {
          s += zz[j] * kernels::zz_sign(b, bonds_[j].first, bonds_[j].second);
        }
        layer.phases[b] = std::polar(1.0, 0.5 * s);
      }
    }
  }
}

void AnsatzProgram::run_layers(std::vector<Complex>& phi, std::size_t from) const {
  for (std::size_t l = from; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    for (std::size_t q = 0; q < config_.n_qubits; ++q) {
      kernels::apply_1q(phi, q, to_mat(layer.fused[q]));
    }
    for (std::size_t b = 0; b < layer.phases.size(); ++b) phi[b] *= layer.phases[b];
  }
}

double AnsatzProgram::readout(std::span<const Complex> phi) const {
  const std::size_t mask = std::size_t{1} << config_.readout();
  double z = 0.0;
  for (std::size_t b = 0; b < phi.size(); ++b) {
    z += (b & mask) ? -std::norm(phi[b]) : std::norm(phi[b]);
  }
  return z;
}

double AnsatzProgram::expectation(std::span<const Complex> input) const {
  check_features(config_, input.size());
  std::vector<Complex> phi(input.begin(), input.end());
  run_layers(phi, 0);
  return readout(phi);
}

double AnsatzProgram::expectation_and_gradient(std::span<const Complex> input, double weight,
                                               std::span<double> grad) const {
  return expectation_and_gradient(input, [weight](double) { return weight; }, grad);
}

double AnsatzProgram::expectation_and_gradient(std::span<const Complex> input,
                                               const std::function<double(double)>& weight_of,
                                               std::span<double> grad) const {
  check_features(config_, input.size());
  if (grad.size() != angles_.size()) {
    throw StructuralError("gradient buffer does not match the QNN parameter count");
  }
  const std::size_t n = config_.n_qubits;
  const std::size_t dim = input.size();
  const std::size_t per_layer = config_.parameters_per_layer();

  std::vector<Complex> phi(input.begin(), input.end());
  for (const auto& layer : layers_) {
    for (std::size_t q = 0; q < n; ++q) kernels::apply_1q(phi, q, to_mat(layer.fused[q]));
    for (std::size_t b = 0; b < layer.phases.size(); ++b) phi[b] *= layer.phases[b];
  }

  const std::size_t mask = std::size_t{1} << config_.readout();
  std::vector<Complex> lambda(dim);
  double z = 0.0;
  for (std::size_t b = 0; b < dim; ++b) {
    const bool one = (b & mask) != 0;
    z += one ? -std::norm(phi[b]) : std::norm(phi[b]);
    lambda[b] = one ? -phi[b] : phi[b];
  }
  const double weight = weight_of(z);
  if (weight == 0.0) return z;

  std::vector<double> bond_acc(bonds_.size());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const double* t = angles_.data() + l * per_layer;
    double* g = grad.data() + l * per_layer;

    // Entangler layer: dE/dt_j = -sum_b zz_j(b) Im(conj(lambda_b) phi_b).
    if (!layer.phases.empty()) {
      std::fill(bond_acc.begin(), bond_acc.end(), 0.0);
      for (std::size_t b = 0; b < dim; ++b) {
        const double w = (std::conj(lambda[b]) * phi[b]).imag();
        for (std::size_t j = 0; j < bonds_.size(); ++j) {
          bond_acc[j] += w * kernels::zz_sign(b, bonds_[j].first, bonds_[j].second);
        }
        const Complex undo = std::conj(layer.phases[b]);
        phi[b] *= undo;
        lambda[b] *= undo;
      }
      for (std::size_t j = 0; j < bonds_.size(); ++j) g[3 * n + j] -= weight * bond_acc[j];
    }

    // Rotation blocks: one pass per qubit gathers the 2x2 overlap matrix and
    // undoes the fused block on both states.
    for (std::size_t q = 0; q < n; ++q) {
      const Mat2 undo = to_mat(layer.fused[q]).adjoint();
      Mat2 c{{0, 0}, {0, 0}, {0, 0}, {0, 0}};
      kernels::for_each_pair(dim, q, [&](std::size_t i0, std::size_t i1) {
        const Complex p0 = phi[i0], p1 = phi[i1];
        const Complex l0 = std::conj(lambda[i0]), l1 = std::conj(lambda[i1]);
        c.a00 += l0 * p0;
        c.a01 += l0 * p1;
        c.a10 += l1 * p0;
        c.a11 += l1 * p1;
        phi[i0] = undo.a00 * p0 + undo.a01 * p1;
        phi[i1] = undo.a10 * p0 + undo.a11 * p1;
        const Complex m0 = lambda[i0], m1 = lambda[i1];
        lambda[i0] = undo.a00 * m0 + undo.a01 * m1;
        lambda[i1] = undo.a10 * m0 + undo.a11 * m1;
      });
      const Mat2 last = kernels::rx_matrix(t[2 * n + q]);
      const Mat2 mid = kernels::ry_matrix(t[n + q]);
      const Mat2 gen_mid = last * kPauliY * last.adjoint();
      const Mat2 gen_first = (last * mid) * kPauliX * (last * mid).adjoint();
      g[2 * n + q] += weight * contract(kPauliX, c).imag();
      g[n + q] += weight * contract(gen_mid, c).imag();
      g[q] += weight * contract(gen_first, c).imag();
    }
  }
  return z;
}

double AnsatzProgram::angle_slices(std::span<const Complex> input, std::span<double> half_turn,
                                   std::span<double> grad) const {
  if (half_turn.size() != angles_.size()) {
    throw StructuralError("half-turn buffer does not match the QNN parameter count");
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  const double z = expectation_and_gradient(input, 1.0, grad);
  const std::size_t n = config_.n_qubits;
  const std::size_t per_layer = config_.parameters_per_layer();

  // State after the rotation blocks of each layer, and after its phases.
  std::vector<std::vector<Complex>> rotated(layers_.size()), finished(layers_.size());
  std::vector<Complex> phi(input.begin(), input.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (std::size_t q = 0; q < n; ++q) kernels::apply_1q(phi, q, to_mat(layers_[l].fused[q]));
    rotated[l] = phi;
    for (std::size_t b = 0; b < layers_[l].phases.size(); ++b) phi[b] *= layers_[l].phases[b];
    finished[l] = phi;
  }

  // A half turn multiplies the gate by its Pauli up to a phase. Behind the
  // fused block that is the generator the reverse sweep uses; an entangler
  // half turn is a ZZ sign flip.
  std::vector<Complex> work;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const double* t = angles_.data() + l * per_layer;
    double* out = half_turn.data() + l * per_layer;
    const auto finish_from_rotated = [&](std::size_t q, const Mat2& generator) {
      work = rotated[l];
      kernels::apply_1q(work, q, generator);
      for (std::size_t b = 0; b < layer.phases.size(); ++b) work[b] *= layer.phases[b];
      run_layers(work, l + 1);
      return readout(work);
    };
    for (std::size_t q = 0; q < n; ++q) {
      const Mat2 last = kernels::rx_matrix(t[2 * n + q]);
      const Mat2 mid = kernels::ry_matrix(t[n + q]);
      out[2 * n + q] = finish_from_rotated(q, kPauliX);
      out[n + q] = finish_from_rotated(q, last * kPauliY * last.adjoint());
      out[q] = finish_from_rotated(q, (last * mid) * kPauliX * (last * mid).adjoint());
    }
    for (std::size_t j = 0; j < bonds_.size(); ++j) {
      work = finished[l];
      for (std::size_t b = 0; b < work.size(); ++b) {
        work[b] *= kernels::zz_sign(b, bonds_[j].first, bonds_[j].second);
      }
      run_layers(work, l + 1);
      out[3 * n + j] = readout(work);
    }
  }
  return z;
}

double qnn_forward(const QnnConfig& config, std::span<const double> params,
                   std::span<const Complex> features) {
  check_features(config, features.size());
  const StateVector input = amplitude_encode(features);
  const AnsatzProgram program(config, params);
  return sigmoid(config.sigmoid_scale * program.expectation(input.amplitudes()));
}

double qnn_loss(const QnnConfig& config, std::span<const double> params,
                const LabeledDataset& batch) {
  const QnnModel model(config);
  const EncodedSplit split(model, batch);
  return mean_bce(model, params, split, all_rows(batch.size()));
}

std::vector<double> qnn_loss_gradient(const QnnConfig& config, std::span<const double> params,
                                      const LabeledDataset& batch) {
  const QnnModel model(config);
  check_params(config, params);
  const EncodedSplit split(model, batch);
  std::vector<double> grad(params.size(), 0.0);
  mean_bce_gradient(model, params, split, all_rows(batch.size()), grad);
  return grad;
}

QnnModel::QnnModel(QnnConfig config) : config_(config) { config_.validate(); }

std::vector<double> QnnModel::initial_parameters(std::uint64_t seed) const {
  return qnn_initial_params(config_, seed);
}

std::unique_ptr<EncodedFeatures> QnnModel::encode(const LabeledDataset& data) const {
  auto out = std::make_unique<QnnInputs>();
  out->states.reserve(data.size());
  for (const auto& f : data.features) {
    check_features(config_, f.size());
    out->states.push_back(amplitude_encode(f));
  }
  return out;
}

void QnnModel::logits(std::span<const double> params, const EncodedFeatures& inputs,
                      std::span<const std::size_t> rows, std::span<double> out) const {
  const auto& in = dynamic_cast<const QnnInputs&>(inputs);
  const AnsatzProgram program(config_, params);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[i] = config_.sigmoid_scale * program.expectation(in.states.at(rows[i]).amplitudes());
  }
}

void QnnModel::accumulate_logit_gradient(std::span<const double> params,
                                         const EncodedFeatures& inputs,
                                         std::span<const std::size_t> rows,
                                         std::span<const double> weights,
                                         std::span<double> grad) const {
  const auto& in = dynamic_cast<const QnnInputs&>(inputs);
  const AnsatzProgram program(config_, params);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (weights[i] == 0.0) continue;
    program.expectation_and_gradient(in.states.at(rows[i]).amplitudes(),
                                     weights[i] * config_.sigmoid_scale, grad);
  }
}

void QnnModel::logits_and_gradient(std::span<const double> params, const EncodedFeatures& inputs,
                                   std::span<const std::size_t> rows, const LogitWeight& weight,
                                   std::span<double> out, std::span<double> grad) const {
  const auto& in = dynamic_cast<const QnnInputs&>(inputs);
  const AnsatzProgram program(config_, params);
  const double k = config_.sigmoid_scale;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto weight_of = [&](double z) { return weight(i, k * z) * k; };
    out[i] = k * program.expectation_and_gradient(in.states.at(rows[i]).amplitudes(), weight_of,
                                                  grad);
  }
}

void QnnModel::coordinate_slices(std::span<const double> params, const EncodedFeatures& inputs,
                                 std::span<const std::size_t> rows,
                                 std::span<const double> offsets, const LogitWeight& weight,
                                 std::size_t jobs, std::span<double> out) const {
  const auto& in = dynamic_cast<const QnnInputs&>(inputs);
  const AnsatzProgram program(config_, params);
  const std::size_t n = params.size();
  const std::size_t m = offsets.size();
  if (out.size() != n * m) throw StructuralError("coordinate slice buffer has the wrong size");
  const double k = config_.sigmoid_scale;
  std::vector<double> cos_d(m), sin_d(m);
  for (std::size_t j = 0; j < m; ++j) {
    cos_d[j] = std::cos(offsets[j]);
    sin_d[j] = std::sin(offsets[j]);
  }
  // Per-row terms are summed in row order afterwards, independent of jobs.
  std::vector<double> terms(rows.size() * n * m);
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    std::vector<double> half(n), slope(n);
    const double e = program.angle_slices(in.states.at(rows[i]).amplitudes(), half, slope);
    double* dst = terms.data() + i * n * m;
    for (std::size_t p = 0; p < n; ++p) {
      const double a = 0.5 * (e + half[p]);
      const double b = 0.5 * (e - half[p]);
      for (std::size_t j = 0; j < m; ++j) {
        const double u = k * (a + b * cos_d[j] + slope[p] * sin_d[j]);
        const double du = k * (slope[p] * cos_d[j] - b * sin_d[j]);
        dst[p * m + j] = weight(i, u) * du;
      }
    }
  });
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* src = terms.data() + i * n * m;
    for (std::size_t x = 0; x < n * m; ++x) out[x] += src[x];
  }
}

std::string QnnModel::describe() const {
  std::ostringstream os;
  os << "qnn(n=" << config_.n_qubits << ",D=" << config_.depth
     << ",k=" << config_.sigmoid_scale << (config_.periodic_entanglers ? ",ring" : "") << ")";
  return os.str();
}

}  // namespace poisonlab
