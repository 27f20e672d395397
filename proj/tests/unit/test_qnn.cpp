#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "poisonlab/error.hpp"
#include "poisonlab/qnn.hpp"
#include "test_util.hpp"

using namespace poisonlab;

namespace {

constexpr double kPi = std::numbers::pi;

// RY(pi x)|0>, the angle encoding of the one-qubit reduced model.
std::vector<Complex> angle_encoded(double x) {
  return {std::cos(kPi * x / 2), std::sin(kPi * x / 2)};
}

LabeledDataset one_sample(std::vector<Complex> f, int y) {
  LabeledDataset d;
  d.kind = FeatureKind::Complex;
  d.push_back(std::move(f), y, 0, 0.0);
  return d;
}

std::vector<double> random_params(std::size_t n, Rng& rng, double scale = 1.5) {
  std::vector<double> p(n);
  for (auto& v : p) v = rng.uniform(-scale, scale);
  return p;
}

}  // namespace

TEST(QnnConfig, ParameterLayout) {
  QnnConfig c{12, 4};
  EXPECT_EQ(c.entanglers_per_layer(), 11u);
  EXPECT_EQ(c.parameter_count(), 4u * (36 + 11));
  c.periodic_entanglers = true;
  EXPECT_EQ(c.parameter_count(), 4u * 48);
  EXPECT_EQ(c.readout(), 11u);
  QnnConfig two{2, 3, 5.0, -1, true};
  EXPECT_EQ(two.entanglers_per_layer(), 1u);  // no duplicate bond on two qubits
  QnnConfig zero{3, 0};
  EXPECT_EQ(zero.parameter_count(), 0u);
}

TEST(QnnConfig, ValidationErrors) {
  EXPECT_THROW((QnnConfig{0, 1}.validate()), UsageError);
  EXPECT_THROW((QnnConfig{17, 1}.validate()), UsageError);
  EXPECT_THROW((QnnConfig{2, 1, 0.0}.validate()), UsageError);
  EXPECT_THROW((QnnConfig{2, 1, 5.0, 2}.validate()), UsageError);
  EXPECT_THROW(QnnModel(QnnConfig{2, 1, -1.0}), UsageError);
}

TEST(QnnForward, IdentityCircuitExamples) {
  QnnConfig c{3, 2, 1.0};
  const std::vector<double> zeros(c.parameter_count(), 0.0);
  std::vector<Complex> basis(8, 0.0);
  basis[0] = 1.0;
  EXPECT_NEAR(qnn_forward(c, zeros, basis), 0.7310585786300049, 1e-15);
  const std::vector<Complex> uniform(8, 1.0);
  for (double k : {1.0, 5.0, 17.0}) {
    c.sigmoid_scale = k;
    EXPECT_NEAR(qnn_forward(c, zeros, uniform), 0.5, 1e-15);
  }
}

TEST(QnnForward, ZeroAnglesEqualRawReadout) {
  Rng rng(5);
  QnnConfig c{4, 3, 5.0};
  const std::vector<double> zeros(c.parameter_count(), 0.0);
  for (int t = 0; t < 10; ++t) {
    const auto f = testutil::random_state(16, rng);
    const double z = expect_z(amplitude_encode(f), 3);
    EXPECT_NEAR(qnn_forward(c, zeros, f), sigmoid(5.0 * z), 1e-14);
  }
}

TEST(QnnForward, ReducedOneQubitModel) {
  QnnConfig c{1, 0, 1.0};
  EXPECT_NEAR(qnn_forward(c, {}, angle_encoded(0.5)), 0.5, 1e-15);
  EXPECT_NEAR(qnn_forward(c, {}, angle_encoded(0.0)), sigmoid(1.0), 1e-15);
}

TEST(QnnForward, ShapeErrors) {
  QnnConfig c{2, 1};
  const std::vector<double> p(c.parameter_count(), 0.0);
  EXPECT_THROW(qnn_forward(c, p, std::vector<Complex>(8, 1.0)), StructuralError);
  EXPECT_THROW(qnn_forward(c, std::vector<double>(3, 0.0), std::vector<Complex>(4, 1.0)),
               StructuralError);
}

TEST(QnnForward, DeterministicAndStrictlyInside) {
  Rng rng(6);
  QnnConfig c{3, 2, 50.0};
  const auto p = random_params(c.parameter_count(), rng);
  const auto f = testutil::random_state(8, rng);
  const double a = qnn_forward(c, p, f), b = qnn_forward(c, p, f);
  EXPECT_EQ(a, b);
  // large k pushes towards saturation; the output stays inside (0, 1)
  std::vector<Complex> basis(8, 0.0);
  basis[0] = 1.0;
  c.sigmoid_scale = 1e3;
  const double s = qnn_forward(c, std::vector<double>(c.parameter_count(), 0.0), basis);
  EXPECT_GT(s, 0.0);
  EXPECT_LE(s, 1.0);
  EXPECT_GT(qnn_loss(c, std::vector<double>(c.parameter_count(), 0.0), one_sample(basis, 0)), 20.0);
}

TEST(QnnLoss, Examples) {
  QnnConfig c{2, 1, 1.0};
  const std::vector<double> zeros(c.parameter_count(), 0.0);
  const std::vector<Complex> uniform(4, 0.5);
  EXPECT_NEAR(qnn_loss(c, zeros, one_sample(uniform, 1)), std::log(2.0), 1e-15);

  Rng rng(7);
  const auto p = random_params(c.parameter_count(), rng);
  const auto a = testutil::random_state(4, rng), b = testutil::random_state(4, rng);
  LabeledDataset both;
  both.kind = FeatureKind::Complex;
  both.push_back(a, 1, 0, 0);
  both.push_back(b, 0, 1, 0);
  const double l1 = qnn_loss(c, p, one_sample(a, 1)), l2 = qnn_loss(c, p, one_sample(b, 0));
  EXPECT_NEAR(qnn_loss(c, p, both), 0.5 * (l1 + l2), 1e-15);

  EXPECT_THROW(qnn_loss(c, p, LabeledDataset{}), UsageError);
  EXPECT_THROW(qnn_loss_gradient(c, p, LabeledDataset{}), UsageError);
}

TEST(QnnLoss, PerfectPredictionLimit) {
  // k large and |0..0> input: p -> 1 so a label-1 loss approaches 0.
  QnnConfig c{2, 1, 60.0};
  std::vector<Complex> basis(4, 0.0);
  basis[0] = 1.0;
  EXPECT_LT(qnn_loss(c, std::vector<double>(c.parameter_count(), 0.0), one_sample(basis, 1)), 1e-12);
}

TEST(QnnGradient, ZeroDepthIsEmpty) {
  QnnConfig c{2, 0};
  EXPECT_TRUE(qnn_loss_gradient(c, {}, one_sample(std::vector<Complex>(4, 0.5), 1)).empty());
}

TEST(QnnGradient, ReducedOneQubitModel) {
  // n=1, D=1 with both RX angles zero leaves RY(theta) after RY(pi x):
  // z = cos(pi x + theta), dL/dtheta = (p - y)(-sin(pi x + theta)).
  QnnConfig c{1, 1, 1.0};
  const std::vector<double> params{0.0, 0.0, 0.0};
  const auto g = qnn_loss_gradient(c, params, one_sample(angle_encoded(0.5), 0));
  ASSERT_EQ(g.size(), 3u);
  EXPECT_NEAR(g[1], -0.5, 1e-14);
}

TEST(QnnGradient, MatchesFiniteDifferences) {
  Rng rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    QnnConfig c;
    c.n_qubits = 1 + rng.below(5);
    c.depth = 1 + rng.below(3);
    c.sigmoid_scale = rng.uniform(0.5, 6.0);
    c.periodic_entanglers = rng.below(2) == 1;
    c.readout_qubit = static_cast<std::int64_t>(rng.below(c.n_qubits));
    const auto batch = testutil::random_dataset(1 + rng.below(4), std::size_t{1} << c.n_qubits,
                                                true, rng.next_u64());
    const auto p = random_params(c.parameter_count(), rng);
    const auto g = qnn_loss_gradient(c, p, batch);
    const auto fd = testutil::finite_difference(
        [&](std::span<const double> x) { return qnn_loss(c, x, batch); }, p, 1e-5);
    for (std::size_t k = 0; k < g.size(); ++k) {
      EXPECT_LE(std::abs(g[k] - fd[k]), std::max(1e-6, 1e-5 * std::abs(fd[k])))
          << "trial " << trial << " param " << k;
    }
  }
}

TEST(AnsatzProgram, MatchesGateLevelSimulator) {
  Rng rng(123);
  for (int trial = 0; trial < 30; ++trial) {
    QnnConfig c;
    c.n_qubits = 1 + rng.below(6);
    c.depth = rng.below(4);
    c.periodic_entanglers = rng.below(2) == 1;
    c.readout_qubit = static_cast<std::int64_t>(rng.below(c.n_qubits));
    const auto p = random_params(c.parameter_count(), rng, kPi);
    const auto s0 = StateVector::from_amplitudes(testutil::random_state(std::size_t{1} << c.n_qubits, rng));
    const auto gates = build_ansatz(c, p);
    ASSERT_EQ(gates.size(), p.size());
    const AnsatzProgram prog(c, p);
    const double z_ref = expect_z(run_circuit(s0, gates), c.readout());
    EXPECT_NEAR(prog.expectation(s0.amplitudes()), z_ref, 1e-12);
    const auto g_ref = adjoint_gradient(s0, gates, c.readout());
    std::vector<double> g(p.size(), 0.0);
    EXPECT_NEAR(prog.expectation_and_gradient(s0.amplitudes(), 1.0, g), z_ref, 1e-12);
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(g[k], g_ref[k], 1e-10);
  }
}

TEST(AnsatzProgram, AngleSlicesAreExactSinusoids) {
  Rng rng(321);
  for (int trial = 0; trial < 10; ++trial) {
    QnnConfig c;
    c.n_qubits = 1 + rng.below(4);
    c.depth = 1 + rng.below(3);
    c.periodic_entanglers = rng.below(2) == 1;
    c.readout_qubit = static_cast<std::int64_t>(rng.below(c.n_qubits));
    const auto p = random_params(c.parameter_count(), rng, kPi);
    const auto input = amplitude_encode(testutil::random_state(std::size_t{1} << c.n_qubits, rng));
    const AnsatzProgram prog(c, p);
    std::vector<double> half(p.size()), slope(p.size()), g(p.size(), 0.0);
    const double e = prog.angle_slices(input.amplitudes(), half, slope);
    EXPECT_NEAR(e, prog.expectation(input.amplitudes()), 1e-14);
    prog.expectation_and_gradient(input.amplitudes(), 1.0, g);
    EXPECT_EQ(slope, g);
    for (std::size_t k = 0; k < p.size(); ++k) {
      auto shifted = p;
      shifted[k] += kPi;
      EXPECT_NEAR(half[k], AnsatzProgram(c, shifted).expectation(input.amplitudes()), 1e-12);
      const double delta = rng.uniform(-3.0, 3.0);
      shifted[k] = p[k] + delta;
      const double a = 0.5 * (e + half[k]), b = 0.5 * (e - half[k]);
      EXPECT_NEAR(a + b * std::cos(delta) + slope[k] * std::sin(delta),
                  AnsatzProgram(c, shifted).expectation(input.amplitudes()), 1e-12)
          << "trial " << trial << " angle " << k;
    }
  }
}

TEST(QnnModel, FusedPathMatchesTwoPassPath) {
  Rng rng(8);
  const QnnModel model(QnnConfig{3, 2, 5.0});
  const auto data = testutil::random_dataset(7, 8, true, 3);
  const EncodedSplit split(model, data);
  const auto p = model.initial_parameters(4);
  const auto rows = all_rows(data.size());
  std::vector<double> u(rows.size()), w(rows.size()), g1(p.size(), 0.0), g2(p.size(), 0.0);
  const auto weight = [](std::size_t i, double ui) { return std::tanh(ui) + 0.1 * double(i); };
  model.logits_and_gradient(p, *split.features, rows, weight, u, g1);
  std::vector<double> u2(rows.size());
  model.logits(p, *split.features, rows, u2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_NEAR(u[i], u2[i], 1e-13);
    w[i] = weight(i, u2[i]);
  }
  model.accumulate_logit_gradient(p, *split.features, rows, w, g2);
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(g1[k], g2[k], 1e-13);
}

TEST(QnnModel, InitialisationRangeAndSeeding) {
  const QnnModel model(QnnConfig{4, 3});
  const auto a = model.initial_parameters(1), b = model.initial_parameters(1),
             c = model.initial_parameters(2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (double v : a) {
    EXPECT_GE(v, -0.1);
    EXPECT_LE(v, 0.1);
  }
  EXPECT_EQ(model.describe(), "qnn(n=4,D=3,k=5)");
}
