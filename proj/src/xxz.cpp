#include "poisonlab/xxz.hpp"

#include <bit>
#include <cmath>
#include <sstream>

#include "poisonlab/error.hpp"
#include "poisonlab/parallel.hpp"
#include "poisonlab/rng.hpp"

namespace poisonlab {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<std::pair<std::size_t, std::size_t>> bonds(const XxzSpec& s) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i + 1 < s.sites; ++i) out.emplace_back(i, i + 1);
  if (s.periodic) out.emplace_back(s.sites - 1, 0);
  return out;
}

VectorXd start_vector(const XxzSpec& spec) {
  const std::size_t dim = std::size_t{1} << spec.sites;
  VectorXd v = VectorXd::Zero(static_cast<Index>(dim));
  if (spec.delta > -1.0) {
    std::size_t even_mask = 0;
    for (std::size_t i = 0; i < spec.sites; i += 2) even_mask |= std::size_t{1} << i;
    for (std::size_t b = 0; b < dim; ++b) {
      if (static_cast<std::size_t>(std::popcount(b)) * 2 != spec.sites) continue;
      v[static_cast<Index>(b)] = (std::popcount(b & even_mask) % 2) ? -1.0 : 1.0;
    }
  } else {
    Rng rng(derive_seed({spec.sites, std::bit_cast<std::uint64_t>(spec.delta)}));
    for (Index b = 0; b < v.size(); ++b) v[b] = rng.normal();
  }
  return v / v.norm();
}

void apply(const XxzSpec& spec, const VectorXd& in, VectorXd& out) {
  xxz_apply(spec, std::span<const double>(in.data(), static_cast<std::size_t>(in.size())),
            std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
}

double residual_of(const XxzSpec& spec, const VectorXd& x, double energy) {
  VectorXd hx(x.size());
  apply(spec, x, hx);
  return (hx - energy * x).norm();
}

GroundState finish(const VectorXd& x_in, double energy, double residual, double gap,
                   std::size_t iterations) {
  VectorXd x = x_in;
  Index best = 0;
  for (Index i = 1; i < x.size(); ++i) {
    if (std::abs(x[i]) > std::abs(x[best])) best = i;
  }
  if (x[best] < 0) x = -x;
  GroundState g;
  g.energy = energy;
  g.residual = residual;
  g.gap = gap;
  g.iterations = iterations;
  g.state.resize(static_cast<std::size_t>(x.size()));
  for (Index i = 0; i < x.size(); ++i) g.state[static_cast<std::size_t>(i)] = {x[i], 0.0};
  return g;
}

struct LanczosRun {
  VectorXd ritz;
  double energy = 0.0;
  double gap = 0.0;
  std::size_t steps = 0;
};

LanczosRun lanczos_pass(const XxzSpec& spec, const VectorXd& v0, std::size_t max_krylov,
                        double tolerance) {
  const Index dim = v0.size();
  const auto m_max = static_cast<Index>(std::min<std::size_t>(max_krylov,
                                                              static_cast<std::size_t>(dim)));
  MatrixXd basis(dim, m_max);
  std::vector<double> alpha;
  std::vector<double> beta;
  basis.col(0) = v0;
  VectorXd w(dim);
  LanczosRun run;
  Eigen::SelfAdjointEigenSolver<MatrixXd> tri;

  for (Index j = 0; j < m_max; ++j) {
    apply(spec, basis.col(j), w);
    alpha.push_back(basis.col(j).dot(w));
    // Two rounds of classical Gram-Schmidt against the whole basis.
    for (int round = 0; round < 2; ++round) {
      const VectorXd coeff = basis.leftCols(j + 1).transpose() * w;
      w.noalias() -= basis.leftCols(j + 1) * coeff;
    }
    const double b = w.norm();
    const Index m = j + 1;
    const bool exhausted = b < 1e-13 || m == m_max;
    if (m % 10 != 0 && !exhausted) {
      beta.push_back(b);
      basis.col(j + 1) = w / b;
      continue;
    }
    MatrixXd t = MatrixXd::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
      t(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    tri.compute(t);
    const double bound = std::abs(b * tri.eigenvectors()(m - 1, 0));
    if (bound < 0.1 * tolerance || exhausted) {
      run.ritz = basis.leftCols(m) * tri.eigenvectors().col(0);
      run.ritz.normalize();
      run.energy = tri.eigenvalues()[0];
      run.gap = m > 1 ? tri.eigenvalues()[1] - tri.eigenvalues()[0] : 0.0;
      run.steps = static_cast<std::size_t>(m);
      return run;
    }
    beta.push_back(b);
    basis.col(j + 1) = w / b;
  }
  return run;
}

}  // namespace

void XxzSpec::validate() const {
  if (sites < 2 || sites > 14 || sites % 2 != 0) {
    throw UsageError("XXZ chain length must be even and within [2, 14], got " +
                     std::to_string(sites));
  }
  if (!std::isfinite(delta)) throw UsageError("XXZ anisotropy must be finite");
}

void xxz_apply(const XxzSpec& spec, std::span<const double> in, std::span<double> out) {
  const std::size_t dim = std::size_t{1} << spec.sites;
  if (in.size() != dim || out.size() != dim) {
    throw StructuralError("XXZ vector length does not match 2^L");
  }
  const auto bs = bonds(spec);
  for (std::size_t b = 0; b < dim; ++b) {
    double diag = 0.0;
    double acc = 0.0;
    for (const auto& [i, j] : bs) {
      const std::size_t flip = (std::size_t{1} << i) | (std::size_t{1} << j);
      const bool anti = (((b >> i) ^ (b >> j)) & 1U) != 0;
      if (anti) {
        diag -= spec.delta;
        // (XX + YY) maps |01> <-> |10> with amplitude 2.
        acc += 2.0 * in[b ^ flip];
      } else {
        diag += spec.delta;
      }
    }
    out[b] = diag * in[b] + acc;
  }
}

MatrixXd xxz_dense_hamiltonian(const XxzSpec& spec) {
  spec.validate();
  const std::size_t dim = std::size_t{1} << spec.sites;
  MatrixXd h(static_cast<Index>(dim), static_cast<Index>(dim));
  std::vector<double> e(dim, 0.0);
  std::vector<double> col(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    e[c] = 1.0;
    xxz_apply(spec, e, col);
    e[c] = 0.0;
    for (std::size_t r = 0; r < dim; ++r) h(static_cast<Index>(r), static_cast<Index>(c)) = col[r];
  }
  return h;
}

GroundState xxz_ground_state(const XxzSpec& spec, const LanczosOptions& options) {
  spec.validate();
  VectorXd v = start_vector(spec);
  std::size_t total = 0;
  double last_residual = 0.0;
  for (std::size_t pass = 0; pass <= options.max_restarts; ++pass) {
    const LanczosRun run = lanczos_pass(spec, v, options.max_krylov, options.tolerance);
    total += run.steps;
    last_residual = residual_of(spec, run.ritz, run.energy);
    if (last_residual < options.tolerance) {
      return finish(run.ritz, run.energy, last_residual, run.gap, total);
    }
    v = run.ritz;
  }
  std::ostringstream os;
  os << "Lanczos did not converge for L=" << spec.sites << ", delta=" << spec.delta
     << ": residual " << last_residual << " after " << total << " iterations ("
     << options.max_restarts << " restarts)";
  throw NumericalError(os.str());
}

GroundState xxz_ground_state_dense(const XxzSpec& spec) {
  const MatrixXd h = xxz_dense_hamiltonian(spec);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(h);
  const VectorXd x = eig.eigenvectors().col(0);
  const double e0 = eig.eigenvalues()[0];
  const double gap = h.rows() > 1 ? eig.eigenvalues()[1] - e0 : 0.0;
  return finish(x, e0, (h * x - e0 * x).norm(), gap, 0);
}

std::vector<int> xxz_train_grid_class0() {
  std::vector<int> g;
  for (int m = -96; m <= 96; m += 2) g.push_back(m);
  return g;
}

std::vector<int> xxz_train_grid_class1() {
  std::vector<int> g;
  for (int m = 102; m <= 300; m += 2) g.push_back(m);
  return g;
}

std::vector<int> xxz_validation_grid() {
  std::vector<int> g;
  for (int m = -97; m <= 299; m += 2) g.push_back(m);
  return g;
}

std::pair<LabeledDataset, LabeledDataset> build_xxz_dataset(std::size_t sites,
                                                            std::size_t jobs) {
  struct Item {
    int hundredths;
    int label;
    bool validation;
  };
  std::vector<Item> items;
  for (const int m : xxz_train_grid_class0()) items.push_back({m, 0, false});
  for (const int m : xxz_train_grid_class1()) items.push_back({m, 1, false});
  for (const int m : xxz_validation_grid()) items.push_back({m, m > 100 ? 1 : 0, true});

  std::vector<GroundState> states(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    states[i] = xxz_ground_state({sites, items[i].hundredths / 100.0, true});
  });

  LabeledDataset train;
  LabeledDataset val;
  train.kind = val.kind = FeatureKind::Complex;
  train.partition = Partition::Train;
  val.partition = Partition::Validation;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& target = items[i].validation ? val : train;
    target.push_back(std::move(states[i].state), items[i].label, 1000 + items[i].hundredths,
                     items[i].hundredths / 100.0);
  }
  return {std::move(train), std::move(val)};
}

}  // namespace poisonlab
