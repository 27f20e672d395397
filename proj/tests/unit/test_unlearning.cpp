#include <gtest/gtest.h>

#include <cmath>

#include "poisonlab/corruption.hpp"
#include "poisonlab/error.hpp"
#include "poisonlab/optimizer.hpp"
#include "poisonlab/unlearning.hpp"
#include "test_util.hpp"

using namespace poisonlab;

namespace {

struct Fixture {
  testutil::LinearProbe model{4};
  LabeledDataset train = testutil::separable_dataset(80, 4, 1);
  LabeledDataset val = testutil::separable_dataset(40, 4, 2);
  PartitionedData part;
  std::vector<double> poisoned;

  explicit Fixture(double alpha = 0.3) {
    CorruptionPlan plan{Protocol::LabelFlip, alpha, 7, {}};
    part = corrupt(train, plan);
    TrainConfig c;
    c.epochs = 20;
    c.batch_size = 16;
    c.learning_rate = 0.05;
    poisoned = poisonlab::train(model, part.polluted, nullptr, c, model.initial_parameters(3)).params;
  }

  UnlearnResult run(UnlearnConfig cfg) const { return unlearn(model, cfg, poisoned, part, val); }
};

}  // namespace

TEST(BernoulliKl, Examples) {
  EXPECT_NEAR(bernoulli_kl(0.5, 0.25), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(bernoulli_kl(0.5, 0.25), 0.143841, 1e-6);
  EXPECT_EQ(bernoulli_kl(0.3, 0.3), 0.0);
  // both arguments are clamped, so saturated inputs stay finite
  EXPECT_TRUE(std::isfinite(bernoulli_kl(1.0, 0.0)));
  EXPECT_NEAR(bernoulli_kl(1.0, 0.0), bernoulli_kl(1 - 1e-7, 1e-7), 1e-12);
}

TEST(BernoulliKl, NonNegativeEverywhere) {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double t = rng.uniform(), s = rng.uniform();
    EXPECT_GE(bernoulli_kl(t, s), 0.0) << t << " " << s;
  }
}

TEST(UnlearnMethodNames, RoundTripAndError) {
  for (auto m : all_unlearn_methods()) EXPECT_EQ(parse_unlearn_method(to_string(m)), m);
  try {
    parse_unlearn_method("amnesia");
    FAIL();
  } catch (const UsageError& e) {
    const std::string what = e.what();
    for (const char* name : {"retrain", "finetune", "scrub", "grad_asc"}) {
      EXPECT_NE(what.find(name), std::string::npos);
    }
  }
}

TEST(Unlearn, TraceShape) {
  const Fixture f;
  UnlearnConfig cfg;
  cfg.steps = 7;
  for (auto m : all_unlearn_methods()) {
    cfg.method = m;
    const auto r = f.run(cfg);
    ASSERT_EQ(r.trace.steps.size(), 7u);
    EXPECT_EQ(r.trace.baseline.step, 0u);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(r.trace.steps[i].step, i + 1);
    EXPECT_EQ(r.params.size(), f.model.parameter_count());
  }
}

TEST(Unlearn, GradAscWithoutAscentIsFinetune) {
  const Fixture f;
  UnlearnConfig ft;
  ft.method = UnlearnMethod::Finetune;
  ft.steps = 10;
  UnlearnConfig ga = ft;
  ga.method = UnlearnMethod::GradAsc;
  ga.beta = 0.0;
  const auto a = f.run(ft), b = f.run(ga);
  for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_NEAR(a.params[i], b.params[i], 1e-12);
}

TEST(Unlearn, ScrubWithOnlyCrossEntropyIsFinetune) {
  const Fixture f;
  UnlearnConfig ft;
  ft.method = UnlearnMethod::Finetune;
  ft.steps = 10;
  UnlearnConfig sc = ft;
  sc.method = UnlearnMethod::Scrub;
  sc.lambda_ce = 1.0;
  sc.lambda_kl = 0.0;
  sc.lambda_fo = 0.0;
  const auto a = f.run(ft), b = f.run(sc);
  for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_NEAR(a.params[i], b.params[i], 1e-12);
}

TEST(Unlearn, ZeroLearningRateFreezesTrace) {
  const Fixture f;
  UnlearnConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.steps = 5;
  for (auto m : {UnlearnMethod::Finetune, UnlearnMethod::Scrub, UnlearnMethod::GradAsc}) {
    cfg.method = m;
    const auto r = f.run(cfg);
    EXPECT_EQ(r.params, f.poisoned);
    for (const auto& s : r.trace.steps) {
      EXPECT_EQ(s.val_accuracy, r.trace.baseline.val_accuracy);
      EXPECT_EQ(s.forgetting_accuracy, r.trace.baseline.forgetting_accuracy);
      EXPECT_EQ(s.retain_loss, r.trace.baseline.retain_loss);
    }
  }
}

TEST(Unlearn, RetrainIgnoresPoisonedParameters) {
  const Fixture f;
  UnlearnConfig cfg;
  cfg.method = UnlearnMethod::Retrain;
  cfg.steps = 5;
  cfg.seed = 42;
  const auto a = f.run(cfg);
  std::vector<double> other(f.poisoned.size(), 3.0);
  const auto b = unlearn(f.model, cfg, other, f.part, f.val);
  EXPECT_EQ(a.params, b.params);
  cfg.seed = 43;
  EXPECT_NE(a.params, f.run(cfg).params);
}

TEST(Unlearn, StepsMatchAdamOnFiniteDifferenceGradient) {
  // Replays two Adam steps on finite-difference gradients of the objective.
  // The second step starts away from the teacher, so the KL terms count.
  const Fixture f;
  const EncodedSplit retain(f.model, f.part.retain), forget(f.model, f.part.forget_polluted);
  const auto t_retain = predict(f.model, f.poisoned, retain);
  const auto t_forget = predict(f.model, f.poisoned, forget);
  const auto mean_kl = [&](const EncodedSplit& s, const std::vector<double>& teacher,
                           std::span<const double> p, bool cap) {
    const auto q = predict(f.model, p, s);
    double acc = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double kl = bernoulli_kl(teacher[i], q[i]);
      acc += cap ? std::min(kl, kForgetKlCap) : kl;
    }
    return acc / static_cast<double>(q.size());
  };
  const auto ce = [&](const EncodedSplit& s, std::span<const double> p) {
    return mean_bce(f.model, p, s, all_rows(s.size()));
  };

  struct Case {
    UnlearnMethod method;
    std::function<double(std::span<const double>)> objective;
  };
  const std::vector<Case> cases{
      {UnlearnMethod::GradAsc,
       [&](std::span<const double> p) { return ce(retain, p) - 0.2 * ce(forget, p); }},
      {UnlearnMethod::Scrub, [&](std::span<const double> p) {
         return ce(retain, p) + 0.5 * mean_kl(retain, t_retain, p, false) -
                0.2 * mean_kl(forget, t_forget, p, true);
       }}};

  for (const auto& c : cases) {
    UnlearnConfig cfg;
    cfg.method = c.method;
    cfg.steps = 2;
    cfg.learning_rate = 0.05;
    cfg.lambda_kl = 0.5;
    const auto r = unlearn(f.model, cfg, f.poisoned, f.part, f.val);

    std::vector<double> replay = f.poisoned;
    AdamState adam(replay.size());
    const AdamConfig acfg{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
    for (int step = 0; step < 2; ++step) {
      const auto g = testutil::finite_difference(c.objective, replay, 1e-6);
      adam_step(replay, g, adam, acfg);
    }
    for (std::size_t k = 0; k < replay.size(); ++k) {
      EXPECT_NEAR(r.params[k], replay[k], 1e-7) << to_string(c.method) << " k=" << k;
    }
  }
}

TEST(Unlearn, FinetuneLowersRetainLoss) {
  const Fixture f;
  UnlearnConfig cfg;
  cfg.method = UnlearnMethod::Finetune;
  cfg.steps = 30;
  const auto r = f.run(cfg);
  EXPECT_LT(r.trace.steps.back().retain_loss, r.trace.baseline.retain_loss);
}

TEST(ForgettingAccuracy, CleanAndPollutedAreComplementary) {
  const Fixture f(0.4);
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = f.model.initial_parameters(rng.next_u64());
    const double a = forgetting_accuracy(f.model, p, f.part.forget_polluted);
    const double b = forgetting_accuracy(f.model, p, f.part.forget_clean);
    EXPECT_NEAR(a + b, 1.0, 1e-15);
  }
}

TEST(ForgettingAccuracy, MemorizedAndForgotten) {
  testutil::LinearProbe model(1);
  LabeledDataset forget;
  forget.push_back({Complex(1.0)}, 1, 0, 0);
  forget.push_back({Complex(2.0)}, 1, 1, 0);
  EXPECT_EQ(forgetting_accuracy(model, std::vector<double>{5.0, 0.0}, forget), 1.0);
  EXPECT_EQ(forgetting_accuracy(model, std::vector<double>{-5.0, 0.0}, forget), 0.0);
  EXPECT_THROW(forgetting_accuracy(model, std::vector<double>{1.0, 0.0}, LabeledDataset{}), UsageError);
}

TEST(Unlearn, ErrorPaths) {
  const Fixture f;
  UnlearnConfig cfg;
  cfg.steps = 0;
  EXPECT_THROW(f.run(cfg), UsageError);
  cfg.steps = 1;
  cfg.learning_rate = -1;
  EXPECT_THROW(f.run(cfg), UsageError);
  cfg.learning_rate = 0.01;
  const Fixture clean(0.0);
  EXPECT_THROW(clean.run(cfg), UsageError);
  EXPECT_THROW(unlearn(f.model, cfg, std::vector<double>(2), f.part, f.val), StructuralError);
  EXPECT_THROW(unlearn(f.model, cfg, f.poisoned, f.part, LabeledDataset{}), UsageError);
}
