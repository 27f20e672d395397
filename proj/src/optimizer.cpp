#include "poisonlab/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "poisonlab/rng.hpp"

namespace poisonlab {

namespace {

std::string diverged_message(std::size_t epoch, std::size_t batch, double norm) {
  std::ostringstream os;
  os << "non-finite training loss at epoch " << epoch << ", batch " << batch
     << " (parameter norm " << norm << ")";
  return os.str();
}

bool all_finite(std::span<const double> v) {
  for (const double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

TrainingDiverged::TrainingDiverged(std::size_t epoch_, std::size_t batch_, double norm,
                                   MetricsLog partial_)
    : NumericalError(diverged_message(epoch_, batch_, norm)),
      epoch(epoch_),
      batch(batch_),
      param_norm(norm),
      partial(std::move(partial_)) {}

double l2_norm(std::span<const double> v) noexcept {
  double s = 0.0;
  for (const double x : v) s += x * x;
  return std::sqrt(s);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw StructuralError("Adam: parameter, gradient and moment sizes differ");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("epochs must be at least 1");
  if (batch_size < 1) throw UsageError("batch size must be at least 1");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch,
                                     bool shuffle) {
  auto order = all_rows(n);
  if (shuffle) {
    Rng rng(derive_seed({seed, tag_hash("epoch"), epoch}));
    rng.shuffle(order);
  }
  return order;
}

TrainResult train(const Model& model, const LabeledDataset& train_set,
                  const LabeledDataset* validation, const TrainConfig& config,
                  std::vector<double> initial_params) {
  if (train_set.empty()) throw UsageError("cannot train on an empty dataset");
  if (config.batch_size < 1) throw UsageError("batch size must be at least 1");
  if (!(config.learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (initial_params.size() != model.parameter_count()) {
    throw StructuralError("initial parameters do not match the model");
  }

  TrainResult result;
  result.params = std::move(initial_params);
  const EncodedSplit train_split(model, train_set);
  EncodedSplit val_split;
  if (validation != nullptr && !validation->empty()) val_split = EncodedSplit(model, *validation);

  AdamState adam(result.params.size());
  const AdamConfig adam_cfg = config.adam();
  const std::size_t n = train_set.size();
  std::vector<double> grad(result.params.size());
  const auto every_row = all_rows(n);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto order = epoch_order(n, config.seed, epoch, config.shuffle);
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = mean_bce_gradient(model, result.params, train_split, rows, grad);
      if (!std::isfinite(loss) || !all_finite(grad)) {
        throw TrainingDiverged(epoch, batch_index, l2_norm(result.params), result.log);
      }
      adam_step(result.params, grad, adam, adam_cfg);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    std::vector<double> u(n);
    model.logits(result.params, *train_split.features, every_row, u);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = sigmoid(u[i]);
      loss += binary_cross_entropy(u[i], train_set.labels[i]);
    }
    rec.train_loss = loss / static_cast<double>(n);
    if (!std::isfinite(rec.train_loss)) {
      throw TrainingDiverged(epoch, batch_index, l2_norm(result.params), result.log);
    }
    rec.train_accuracy = accuracy_from_probabilities(u, train_set.labels);
    rec.val_accuracy = val_split.size() > 0 ? accuracy(model, result.params, val_split)
                                            : std::numeric_limits<double>::quiet_NaN();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.epochs.push_back(rec);
  }
  return result;
}

}  // namespace poisonlab
