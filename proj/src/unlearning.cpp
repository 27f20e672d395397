#include "poisonlab/unlearning.hpp"

#include <algorithm>
#include <cmath>

#include "poisonlab/rng.hpp"

namespace poisonlab {

namespace {

double clamp_kl(double p) { return std::clamp(p, kKlProbabilityFloor, 1.0 - kKlProbabilityFloor); }

// Mean over a split of a per-sample objective of the student logit; adds
// scale * d(mean)/dtheta into grad and returns the mean.
struct Term {
  const EncodedSplit* split;
  double scale;
  enum class Kind { CrossEntropy, KlAnchor, KlForget } kind;
  const std::vector<double>* teacher = nullptr;
};

double accumulate(const Model& model, std::span<const double> params, const Term& term,
                  std::span<double> grad) {
  const std::size_t n = term.split->size();
  if (n == 0) return 0.0;
  const auto rows = all_rows(n);
  std::vector<double> u(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  // d/du of the per-sample objective; the KL clamp and the forget cap are flat.
  const auto weight = [&](std::size_t i, double ui) {
    const double p = sigmoid(ui);
    if (term.kind == Term::Kind::CrossEntropy)
      return (p - term.split->data->labels[i]) * inv_n * term.scale;
    const double t = clamp_kl((*term.teacher)[i]);
    if (term.kind == Term::Kind::KlForget && bernoulli_kl(t, p) > kForgetKlCap) return 0.0;
    if (p != clamp_kl(p)) return 0.0;
    return (p - t) * inv_n * term.scale;
  };
  if (term.scale != 0.0) {
    model.logits_and_gradient(params, *term.split->features, rows, weight, u, grad);
  } else {
    model.logits(params, *term.split->features, rows, u);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = sigmoid(u[i]);
    if (term.kind == Term::Kind::CrossEntropy) {
      acc += binary_cross_entropy(p, term.split->data->labels[i]);
      continue;
    }
    const double kl = bernoulli_kl(clamp_kl((*term.teacher)[i]), p);
    acc += (term.kind == Term::Kind::KlForget && kl > kForgetKlCap) ? kForgetKlCap : kl;
  }
  return acc * inv_n;
}

UnlearnStep evaluate(const Model& model, std::span<const double> params, std::size_t step,
                     const EncodedSplit& retain, const EncodedSplit& forget,
                     const EncodedSplit& val) {
  UnlearnStep s;
  s.step = step;
  s.val_accuracy = accuracy(model, params, val);
  const auto fp = predict(model, params, forget);
  s.forgetting_accuracy = accuracy_from_probabilities(fp, forget.data->labels);
  double fl = 0.0;
  for (std::size_t i = 0; i < fp.size(); ++i) fl += binary_cross_entropy(fp[i], forget.data->labels[i]);
  s.forget_loss = fl / static_cast<double>(fp.size());
  s.retain_loss = retain.size() > 0 ? mean_bce(model, params, retain, all_rows(retain.size()))
                                    : 0.0;
  return s;
}

}  // namespace

std::string to_string(UnlearnMethod m) {
  switch (m) {
    case UnlearnMethod::Retrain: return "retrain";
    case UnlearnMethod::Finetune: return "finetune";
    case UnlearnMethod::Scrub: return "scrub";
    case UnlearnMethod::GradAsc: return "grad_asc";
  }
  return "?";
}

const std::vector<UnlearnMethod>& all_unlearn_methods() {
  static const std::vector<UnlearnMethod> methods{UnlearnMethod::Retrain, UnlearnMethod::Finetune,
                                                  UnlearnMethod::Scrub, UnlearnMethod::GradAsc};
  return methods;
}

UnlearnMethod parse_unlearn_method(const std::string& name) {
  for (const auto m : all_unlearn_methods()) {
    if (to_string(m) == name) return m;
  }
  throw UsageError("unknown unlearning method '" + name +
                   "' (valid: retrain, finetune, scrub, grad_asc)");
}

void UnlearnConfig::validate() const {
  if (steps < 1) throw UsageError("unlearning needs at least one step");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw UsageError("unlearning learning rate must be finite and non-negative");
  }
  for (const double w : {lambda_ce, lambda_kl, lambda_fo, beta}) {
    if (!std::isfinite(w)) throw UsageError("unlearning loss weights must be finite");
  }
}

double bernoulli_kl(double p_teacher, double p_student) noexcept {
  const double t = clamp_kl(p_teacher);
  const double s = clamp_kl(p_student);
  return t * std::log(t / s) + (1.0 - t) * std::log((1.0 - t) / (1.0 - s));
}

double forgetting_accuracy(const Model& model, std::span<const double> params,
                           const LabeledDataset& forget_polluted) {
  if (forget_polluted.empty()) throw UsageError("forgetting accuracy of an empty forget set");
  const EncodedSplit split(model, forget_polluted);
  return accuracy(model, params, split);
}

UnlearnResult unlearn(const Model& model, const UnlearnConfig& config,
                      std::span<const double> poisoned, const PartitionedData& partition,
                      const LabeledDataset& validation) {
  config.validate();
  if (partition.forget_polluted.empty()) throw UsageError("unlearning needs a non-empty forget set");
  if (partition.retain.empty()) throw UsageError("unlearning needs a non-empty retain set");
  if (validation.empty()) throw UsageError("unlearning needs a validation set");
  if (poisoned.size() != model.parameter_count()) {
    throw StructuralError("poisoned parameters do not match the model");
  }

  const EncodedSplit retain(model, partition.retain);
  const EncodedSplit forget(model, partition.forget_polluted);
  const EncodedSplit val(model, validation);

  UnlearnResult result;
  if (config.method == UnlearnMethod::Retrain) {
    result.params = model.initial_parameters(derive_seed({config.seed, tag_hash("retrain-init")}));
  } else {
    result.params.assign(poisoned.begin(), poisoned.end());
  }

  // Frozen teacher outputs for Scrub.
  std::vector<double> teacher_retain;
  std::vector<double> teacher_forget;
  if (config.method == UnlearnMethod::Scrub) {
    teacher_retain = predict(model, poisoned, retain);
    teacher_forget = predict(model, poisoned, forget);
  }

  std::vector<Term> terms;
  switch (config.method) {
    case UnlearnMethod::Retrain:
    case UnlearnMethod::Finetune:
      terms.push_back({&retain, 1.0, Term::Kind::CrossEntropy});
      break;
    case UnlearnMethod::GradAsc:
      terms.push_back({&retain, 1.0, Term::Kind::CrossEntropy});
      if (config.beta != 0.0) terms.push_back({&forget, -config.beta, Term::Kind::CrossEntropy});
      break;
    case UnlearnMethod::Scrub:
      terms.push_back({&retain, config.lambda_ce, Term::Kind::CrossEntropy});
      if (config.lambda_kl != 0.0) {
        terms.push_back({&retain, config.lambda_kl, Term::Kind::KlAnchor, &teacher_retain});
      }
      if (config.lambda_fo != 0.0) {
        terms.push_back({&forget, -config.lambda_fo, Term::Kind::KlForget, &teacher_forget});
      }
      break;
  }

  result.trace.baseline = evaluate(model, result.params, 0, retain, forget, val);
  AdamState adam(result.params.size());
  const AdamConfig adam_cfg{config.learning_rate, config.adam_beta1, config.adam_beta2,
                            config.adam_eps};
  std::vector<double> grad(result.params.size());
  MetricsLog none;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double objective = 0.0;
    for (const auto& term : terms) {
      objective += term.scale * accumulate(model, result.params, term, grad);
    }
    bool finite = std::isfinite(objective);
    for (const double g : grad) finite = finite && std::isfinite(g);
    if (!finite) throw TrainingDiverged(step, 0, l2_norm(result.params), none);
    adam_step(result.params, grad, adam, adam_cfg);
    result.trace.steps.push_back(evaluate(model, result.params, step, retain, forget, val));
  }
  return result;
}

}  // namespace poisonlab
