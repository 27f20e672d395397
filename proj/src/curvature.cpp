#include "poisonlab/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "poisonlab/error.hpp"
#include "poisonlab/parallel.hpp"
#include "poisonlab/rng.hpp"

namespace poisonlab {

namespace {

void require_finite(std::span<const double> diag) {
  for (std::size_t k = 0; k < diag.size(); ++k) {
    if (!std::isfinite(diag[k])) {
      throw NumericalError("non-finite Hessian diagonal entry at parameter " + std::to_string(k));
    }
  }
}

}  // namespace

std::vector<double> hessian_diagonal(const GradientFn& gradient, std::span<const double> params,
                                     double h, std::size_t jobs) {
  if (!(h > 0.0)) throw UsageError("Hessian step size must be positive");
  const std::size_t n = params.size();
  std::vector<double> diag(n);
  const std::size_t chunks = std::max<std::size_t>(1, std::min(n, jobs == 0 ? default_jobs() : jobs));
  parallel_for(chunks, chunks, [&](std::size_t c) {
    std::vector<double> theta(params.begin(), params.end());
    std::vector<double> g_plus(n);
    std::vector<double> g_minus(n);
    for (std::size_t k = c; k < n; k += chunks) {
      const double base = theta[k];
      theta[k] = base + h;
      gradient(theta, g_plus);
      theta[k] = base - h;
      gradient(theta, g_minus);
      theta[k] = base;
      diag[k] = (g_plus[k] - g_minus[k]) / (2.0 * h);
    }
  });
  require_finite(diag);
  return diag;
}

namespace {

// One diagonal per step size, all from a single pass over the coordinate
// slices at offsets +h, -h for each step.
std::vector<std::vector<double>> model_diagonals(const Model& model, std::span<const double> params,
                                                 const EncodedSplit& split,
                                                 std::span<const std::size_t> rows,
                                                 std::span<const double> steps, std::size_t jobs) {
  if (rows.empty()) throw UsageError("loss over an empty batch");
  std::vector<double> offsets;
  for (const double h : steps) {
    if (!(h > 0.0)) throw UsageError("Hessian step size must be positive");
    offsets.push_back(h);
    offsets.push_back(-h);
  }
  const std::size_t n = params.size();
  const std::size_t m = offsets.size();
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  const auto& labels = split.data->labels;
  std::vector<double> slices(n * m);
  model.coordinate_slices(
      params, *split.features, rows, offsets,
      [&](std::size_t i, double ui) { return (sigmoid(ui) - labels[rows[i]]) * inv_n; }, jobs,
      slices);
  std::vector<std::vector<double>> diags(steps.size(), std::vector<double>(n));
  for (std::size_t s = 0; s < steps.size(); ++s) {
    for (std::size_t k = 0; k < n; ++k) {
      diags[s][k] = (slices[k * m + 2 * s] - slices[k * m + 2 * s + 1]) / (2.0 * steps[s]);
    }
    require_finite(diags[s]);
  }
  return diags;
}

}  // namespace

std::vector<double> hessian_diagonal(const Model& model, std::span<const double> params,
                                     const EncodedSplit& split, std::span<const std::size_t> rows,
                                     double h, std::size_t jobs) {
  const double steps[] = {h};
  return std::move(model_diagonals(model, params, split, rows, steps, jobs).front());
}

std::vector<std::size_t> hessian_subset(std::size_t n, std::size_t count, std::uint64_t seed) {
  auto rows = all_rows(n);
  Rng rng(derive_seed({seed, tag_hash("hessian-subset")}));
  rng.shuffle(rows);
  rows.resize(std::min(count, n));
  std::sort(rows.begin(), rows.end());
  return rows;
}

HessianReport hessian_report(const Model& model, std::span<const double> params,
                             const LabeledDataset& train_set, double alpha, std::uint64_t seed,
                             const HessianOptions& options) {
  if (train_set.empty()) throw UsageError("Hessian subset drawn from an empty training set");
  const auto rows = hessian_subset(train_set.size(), options.subset_size, options.subset_seed);
  const EncodedSplit split(model, train_set);

  HessianReport r;
  r.model_kind = model.kind();
  r.model_shape = model.describe();
  r.alpha = alpha;
  r.seed = seed;
  r.n_samples_used = rows.size();
  r.step_size = options.step;
  for (const auto row : rows) r.subset_ids.push_back(train_set.sample_ids[row]);
  std::vector<double> steps{options.step};
  if (options.check_step > 0.0) steps.push_back(options.check_step);
  auto diags = model_diagonals(model, params, split, rows, steps, options.jobs);
  r.hessian_diagonal = std::move(diags[0]);
  r.trace = 0.0;
  for (const double d : r.hessian_diagonal) r.trace += d;

  if (options.check_step > 0.0) {
    r.check_step = options.check_step;
    const auto& other = diags[1];
    r.check_trace = 0.0;
    for (std::size_t k = 0; k < other.size(); ++k) {
      r.check_trace += other[k];
      const double a = r.hessian_diagonal[k];
      const double b = other[k];
      const double scale = std::max(std::abs(a), std::abs(b));
      if (scale > 1e-12 && std::abs(a - b) > options.flag_threshold * scale) r.flagged.push_back(k);
    }
  }
  return r;
}

double lrr(double trace_noisy, double trace_clean) {
  if (std::abs(trace_clean) < 1e-12) {
    std::ostringstream os;
    os << "degenerate clean landscape: Hessian trace " << trace_clean << " is below 1e-12";
    throw NumericalError(os.str());
  }
  return trace_noisy / trace_clean;
}

namespace {

double minimal_logit(const MinimalModelPoint& p) {
  return p.model == MinimalModel::SingleNeuron ? p.theta * p.x
                                               : std::cos(std::numbers::pi * p.x + p.theta);
}

void require(const MinimalModelPoint& p, MinimalModel m) {
  if (p.model != m) throw UsageError("closed form requested for the wrong minimal model");
}

}  // namespace

double minimal_loss(const MinimalModelPoint& point) {
  return binary_cross_entropy(sigmoid(minimal_logit(point)), point.y);
}

double minimal_gradient(const MinimalModelPoint& point) {
  const double p = sigmoid(minimal_logit(point));
  const double dz = point.model == MinimalModel::SingleNeuron
                        ? point.x
                        : -std::sin(std::numbers::pi * point.x + point.theta);
  return (p - point.y) * dz;
}

double minimal_mlp_hessian(const MinimalModelPoint& point) {
  require(point, MinimalModel::SingleNeuron);
  const double p = sigmoid(point.theta * point.x);
  return point.x * point.x * p * (1.0 - p);
}

MinimalQnnHessian minimal_qnn_hessian(const MinimalModelPoint& point) {
  require(point, MinimalModel::SingleQubit);
  const double phase = std::numbers::pi * point.x + point.theta;
  const double p = sigmoid(std::cos(phase));
  const double s = std::sin(phase);
  MinimalQnnHessian h{};
  h.term_a = p * (1.0 - p) * s * s;
  h.term_b = (p - point.y) * std::cos(phase);
  h.total = h.term_a - h.term_b;
  return h;
}

}  // namespace poisonlab
