#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "poisonlab/dataset.hpp"

namespace poisonlab {

/// H = sum_i (X_i X_i+1 + Y_i Y_i+1 + delta Z_i Z_i+1) with Pauli matrices.
struct XxzSpec {
  std::size_t sites = 12;
  double delta = 1.0;
  /// Closes the chain (site L+1 == site 1). Open chains are test-only.
  bool periodic = true;

  /// L even, 2 <= L <= 14.
  void validate() const;
};

/// out = H in, matrix-free. H is real symmetric in the computational basis.
void xxz_apply(const XxzSpec& spec, std::span<const double> in, std::span<double> out);

/// Dense 2^L x 2^L Hamiltonian; meant for L <= 8.
Eigen::MatrixXd xxz_dense_hamiltonian(const XxzSpec& spec);

struct GroundState {
  double energy = 0.0;
  std::vector<Complex> state;
  /// ||H psi - E psi||.
  double residual = 0.0;
  /// Distance to the next level seen by the solver. For Lanczos this is the
  /// gap inside the symmetry sector of the start vector.
  double gap = 0.0;
  std::size_t iterations = 0;
};

struct LanczosOptions {
  std::size_t max_krylov = 300;
  std::size_t max_restarts = 30;
  double tolerance = 1e-10;
};

/// Lanczos with full reorthogonalization. For delta > -1 the start vector
/// is the Marshall-signed uniform state of the S^z = 0 sector, which has
/// positive overlap with the ground state and excludes its finite-size
/// partner of opposite momentum. The phase is fixed so the largest-magnitude
/// amplitude is real and positive.
/// Throws NumericalError when the residual does not reach the tolerance.
GroundState xxz_ground_state(const XxzSpec& spec, const LanczosOptions& options = {});

/// Full dense diagonalization; the oracle for small chains.
GroundState xxz_ground_state_dense(const XxzSpec& spec);

/// Anisotropy grids in hundredths: training class 0, training class 1,
/// validation.
std::vector<int> xxz_train_grid_class0();
std::vector<int> xxz_train_grid_class1();
std::vector<int> xxz_validation_grid();

/// Ground-state datasets for the phase-classification task. Sample ids are
/// 1000 + round(100 delta), so training (even hundredths) and validation (odd
/// hundredths) ids never collide. Validation labels are 1 iff delta > 1.
std::pair<LabeledDataset, LabeledDataset> build_xxz_dataset(std::size_t sites = 12,
                                                            std::size_t jobs = 0);

}  // namespace poisonlab
