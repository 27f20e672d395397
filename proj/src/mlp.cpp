#include "poisonlab/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "poisonlab/error.hpp"
#include "poisonlab/parallel.hpp"
#include "poisonlab/rng.hpp"

namespace poisonlab {

namespace {

class MlpInputs final : public EncodedFeatures {
 public:
  RowMatrix x;
  std::size_t rows() const noexcept override { return static_cast<std::size_t>(x.rows()); }
};

void check_params(const MlpConfig& config, std::span<const double> params) {
  if (params.size() != config.parameter_count()) {
    throw StructuralError("MLP expects " + std::to_string(config.parameter_count()) +
                          " parameters, got " + std::to_string(params.size()));
  }
}

void check_input(const MlpConfig& config, std::size_t len) {
  if (len != config.input_dim) {
    throw StructuralError("MLP expects input length " + std::to_string(config.input_dim) +
                          ", got " + std::to_string(len));
  }
}

double sorted_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (const double t : terms) s += t;
  return s;
}

RowMatrix gather(const RowMatrix& x, std::span<const std::size_t> rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

bool is_identity(std::span<const std::size_t> rows, std::size_t n) {
  if (rows.size() != n) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i] != i) return false;
  }
  return true;
}

}  // namespace

std::size_t MlpConfig::parameter_count() const noexcept {
  const auto [h1, h2] = hidden;
  return h1 * input_dim + h1 + h2 * h1 + h2 + h2 + 1;
}

void MlpConfig::validate() const {
  if (input_dim < 1 || hidden[0] < 1 || hidden[1] < 1) {
    throw UsageError("MLP dimensions must all be at least 1");
  }
}

MlpLayout::MlpLayout(const MlpConfig& c) {
  const auto [h1, h2] = c.hidden;
  w1 = 0;
  b1 = w1 + h1 * c.input_dim;
  w2 = b1 + h1;
  b2 = w2 + h2 * h1;
  w3 = b2 + h2;
  b3 = w3 + h2;
  total = b3 + 1;
}

namespace {

RowMatrix copy_block(std::span<const double> p, std::size_t offset, std::size_t rows,
                     std::size_t cols) {
  return Eigen::Map<const RowMatrix>(p.data() + offset, static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(cols));
}

Eigen::VectorXd copy_vector(std::span<const double> p, std::size_t offset, std::size_t n) {
  return Eigen::Map<const Eigen::VectorXd>(p.data() + offset, static_cast<Eigen::Index>(n));
}

// grad[offset + i] += m(i) in storage order; elementwise, so order-free.
template <typename M>
void add_into(std::span<double> grad, std::size_t offset, const M& m) {
  const double* src = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) grad[offset + static_cast<std::size_t>(i)] += src[i];
}

}  // namespace

MlpView::MlpView(const MlpConfig& c, std::span<const double> params)
    : b3((check_params(c, params), params[MlpLayout(c).b3])) {
  const MlpLayout at(c);
  const auto [h1, h2] = c.hidden;
  w1 = copy_block(params, at.w1, h1, c.input_dim);
  b1 = copy_vector(params, at.b1, h1);
  w2 = copy_block(params, at.w2, h2, h1);
  b2 = copy_vector(params, at.b2, h2);
  w3 = copy_vector(params, at.w3, h2);
}

MlpParams mlp_initial_params(const MlpConfig& config, std::uint64_t seed) {
  config.validate();
  const MlpLayout at(config);
  MlpParams p(at.total, 0.0);
  Rng rng(seed);
  const auto fill = [&](std::size_t offset, std::size_t fan_out, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < fan_out * fan_in; ++i) p[offset + i] = rng.uniform(-limit, limit);
  };
  fill(at.w1, config.hidden[0], config.input_dim);
  fill(at.w2, config.hidden[1], config.hidden[0]);
  fill(at.w3, 1, config.hidden[1]);
  return p;
}

std::vector<double> complexify_split(std::span<const Complex> features) {
  std::vector<double> out(2 * features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    out[i] = features[i].real();
    out[features.size() + i] = features[i].imag();
  }
  return out;
}

std::vector<double> mlp_input(const LabeledDataset& data, std::size_t row) {
  const auto& f = data.features.at(row);
  if (data.kind == FeatureKind::Complex) return complexify_split(f);
  std::vector<double> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i].real();
  return out;
}

double mlp_forward(const MlpConfig& config, std::span<const double> params,
                   std::span<const double> features) {
  config.validate();
  check_input(config, features.size());
  const MlpView v(config, params);
  const auto [h1, h2] = config.hidden;
  const std::size_t d = config.input_dim;

  std::vector<double> a1(h1);
  for (std::size_t j = 0; j < h1; ++j) {
    const double* row = params.data() + MlpLayout(config).w1 + j * d;
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += row[i] * features[i];
    a1[j] = std::max(0.0, s + v.b1[static_cast<Eigen::Index>(j)]);
  }
  std::vector<double> terms;
  std::vector<double> a2(h2);
  for (std::size_t k = 0; k < h2; ++k) {
    terms.resize(h1);
    for (std::size_t j = 0; j < h1; ++j) {
      terms[j] = v.w2(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) * a1[j];
    }
    a2[k] = std::max(0.0, sorted_sum(terms) + v.b2[static_cast<Eigen::Index>(k)]);
  }
  terms.resize(h2);
  for (std::size_t k = 0; k < h2; ++k) terms[k] = v.w3[static_cast<Eigen::Index>(k)] * a2[k];
  const double u = sorted_sum(terms) + v.b3;
  return std::clamp(sigmoid(u), kProbabilityFloor, 1.0 - kProbabilityFloor);
}

double mlp_loss(const MlpConfig& config, std::span<const double> params,
                const LabeledDataset& batch) {
  const MlpModel model(config);
  const EncodedSplit split(model, batch);
  return mean_bce(model, params, split, all_rows(batch.size()));
}

std::vector<double> mlp_loss_gradient(const MlpConfig& config, std::span<const double> params,
                                      const LabeledDataset& batch) {
  const MlpModel model(config);
  check_params(config, params);
  const EncodedSplit split(model, batch);
  std::vector<double> grad(params.size(), 0.0);
  mean_bce_gradient(model, params, split, all_rows(batch.size()), grad);
  return grad;
}

MlpModel::MlpModel(MlpConfig config) : config_(config) { config_.validate(); }

std::vector<double> MlpModel::initial_parameters(std::uint64_t seed) const {
  return mlp_initial_params(config_, seed);
}

std::unique_ptr<EncodedFeatures> MlpModel::encode(const LabeledDataset& data) const {
  auto out = std::make_unique<MlpInputs>();
  out->x.resize(static_cast<Eigen::Index>(data.size()),
                static_cast<Eigen::Index>(config_.input_dim));
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto row = mlp_input(data, r);
    check_input(config_, row.size());
    out->x.row(static_cast<Eigen::Index>(r)) =
        Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
  }
  return out;
}

void MlpModel::logits(std::span<const double> params, const EncodedFeatures& inputs,
                      std::span<const std::size_t> rows, std::span<double> out) const {
  const auto& in = dynamic_cast<const MlpInputs&>(inputs);
  const MlpView v(config_, params);
  const auto compute = [&](const auto& x) {
    RowMatrix a1 = ((x * v.w1.transpose()).rowwise() + v.b1.transpose()).cwiseMax(0.0);
    RowMatrix a2 = ((a1 * v.w2.transpose()).rowwise() + v.b2.transpose()).cwiseMax(0.0);
    Eigen::VectorXd u = (a2 * v.w3).array() + v.b3;
    std::copy(u.data(), u.data() + u.size(), out.begin());
  };
  if (is_identity(rows, in.rows())) {
    compute(in.x);
  } else {
    compute(gather(in.x, rows));
  }
}

void MlpModel::accumulate_logit_gradient(std::span<const double> params,
                                         const EncodedFeatures& inputs,
                                         std::span<const std::size_t> rows,
                                         std::span<const double> weights,
                                         std::span<double> grad) const {
  const auto& in = dynamic_cast<const MlpInputs&>(inputs);
  const MlpView v(config_, params);
  if (grad.size() != params.size()) {
    throw StructuralError("gradient buffer does not match the MLP parameter count");
  }
  const MlpLayout at(config_);
  const Eigen::VectorXd delta = Eigen::Map<const Eigen::VectorXd>(
      weights.data(), static_cast<Eigen::Index>(weights.size()));

  const auto backprop = [&](const auto& x) {
    const RowMatrix z1 = (x * v.w1.transpose()).rowwise() + v.b1.transpose();
    const RowMatrix a1 = z1.cwiseMax(0.0);
    const RowMatrix z2 = (a1 * v.w2.transpose()).rowwise() + v.b2.transpose();
    const RowMatrix a2 = z2.cwiseMax(0.0);

    const Eigen::VectorXd g3 = a2.transpose() * delta;
    add_into(grad, at.w3, g3);
    grad[at.b3] += delta.sum();

    // ReLU derivative is 0 at exactly 0.
    const RowMatrix d2 =
        ((delta * v.w3.transpose()).array() * (z2.array() > 0.0).cast<double>()).matrix();
    const RowMatrix g2 = d2.transpose() * a1;
    add_into(grad, at.w2, g2);
    const Eigen::VectorXd gb2 = d2.colwise().sum().transpose();
    add_into(grad, at.b2, gb2);

    const RowMatrix d1 = ((d2 * v.w2).array() * (z1.array() > 0.0).cast<double>()).matrix();
    const RowMatrix g1 = d1.transpose() * x;
    add_into(grad, at.w1, g1);
    const Eigen::VectorXd gb1 = d1.colwise().sum().transpose();
    add_into(grad, at.b1, gb1);
  };
  if (is_identity(rows, in.rows())) {
    backprop(in.x);
  } else {
    backprop(gather(in.x, rows));
  }
}

void MlpModel::coordinate_slices(std::span<const double> params, const EncodedFeatures& inputs,
                                 std::span<const std::size_t> rows,
                                 std::span<const double> offsets, const LogitWeight& weight,
                                 std::size_t jobs, std::span<double> out) const {
  const auto& in = dynamic_cast<const MlpInputs&>(inputs);
  const MlpView v(config_, params);
  const MlpLayout at(config_);
  const auto [h1, h2] = config_.hidden;
  const std::size_t d = config_.input_dim;
  const std::size_t m = offsets.size();
  if (out.size() != at.total * m) {
    throw StructuralError("coordinate slice buffer has the wrong size");
  }
  const RowMatrix x = gather(in.x, rows);
  const RowMatrix z1 = (x * v.w1.transpose()).rowwise() + v.b1.transpose();
  const RowMatrix a1 = z1.cwiseMax(0.0);
  const RowMatrix z2 = (a1 * v.w2.transpose()).rowwise() + v.b2.transpose();
  const RowMatrix a2 = z2.cwiseMax(0.0);
  const Eigen::VectorXd u = (a2 * v.w3).array() + v.b3;
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  using Idx = Eigen::Index;

  // Writes out[k, j] = sum_i weight(i, u') du'/dtheta_k, where slice(i, d)
  // returns (u', du') for row i with theta_k moved by d.
  const auto reduce = [&](std::size_t k, const auto& slice) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (Idx i = 0; i < n_rows; ++i) {
        const auto [ui, dui] = slice(i, offsets[j]);
        if (dui != 0.0) acc += weight(static_cast<std::size_t>(i), ui) * dui;
      }
      out[k * m + j] = acc;
    }
  };

  // Moving the pre-activation of output unit q by s.
  const auto second_layer = [&](Idx i, Idx q, double s) -> std::pair<double, double> {
    const double z = z2(i, q) + s;
    const double w = v.w3[q];
    return {u[i] + w * (std::max(0.0, z) - a2(i, q)), z > 0.0 ? w : 0.0};
  };
  // Moving the pre-activation of first-layer unit q by s; the whole second
  // layer is recomputed for that one change.
  const auto first_layer = [&](Idx i, Idx q, double s) -> std::pair<double, double> {
    const double z = z1(i, q) + s;
    const double change = std::max(0.0, z) - a1(i, q);
    if (change == 0.0 && !(z > 0.0)) return {u[i], 0.0};
    double ui = v.b3;
    double back = 0.0;
    for (Idx r = 0; r < static_cast<Idx>(h2); ++r) {
      const double zr = z2(i, r) + v.w2(r, q) * change;
      ui += v.w3[r] * std::max(0.0, zr);
      if (zr > 0.0) back += v.w3[r] * v.w2(r, q);
    }
    return {ui, z > 0.0 ? back : 0.0};
  };

  parallel_for(at.total, jobs, [&](std::size_t k) {
    if (k == at.b3) {
      reduce(k, [&](Idx i, double s) { return std::pair{u[i] + s, 1.0}; });
    } else if (k >= at.w3) {
      const auto q = static_cast<Idx>(k - at.w3);
      reduce(k, [&](Idx i, double s) { return std::pair{u[i] + s * a2(i, q), a2(i, q)}; });
    } else if (k >= at.b2) {
      const auto q = static_cast<Idx>(k - at.b2);
      reduce(k, [&](Idx i, double s) { return second_layer(i, q, s); });
    } else if (k >= at.w2) {
      const auto q = static_cast<Idx>((k - at.w2) / h1);
      const auto c = static_cast<Idx>((k - at.w2) % h1);
      reduce(k, [&](Idx i, double s) {
        const auto [ui, g] = second_layer(i, q, s * a1(i, c));
        return std::pair{ui, g * a1(i, c)};
      });
    } else if (k >= at.b1) {
      const auto q = static_cast<Idx>(k - at.b1);
      reduce(k, [&](Idx i, double s) { return first_layer(i, q, s); });
    } else {
      const auto q = static_cast<Idx>(k / d);
      const auto c = static_cast<Idx>(k % d);
      reduce(k, [&](Idx i, double s) {
        const double xc = x(i, c);
        if (xc == 0.0) return std::pair{u[i], 0.0};
        const auto [ui, g] = first_layer(i, q, s * xc);
        return std::pair{ui, g * xc};
      });
    }
  });
}

std::string MlpModel::describe() const {
  std::ostringstream os;
  os << "mlp(in=" << config_.input_dim << ",h=[" << config_.hidden[0] << ","
     << config_.hidden[1] << "])";
  return os.str();
}

}  // namespace poisonlab
