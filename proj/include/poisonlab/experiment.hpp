#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "poisonlab/corruption.hpp"
#include "poisonlab/curvature.hpp"
#include "poisonlab/dataset.hpp"
#include "poisonlab/model.hpp"
#include "poisonlab/optimizer.hpp"
#include "poisonlab/unlearning.hpp"

namespace poisonlab::experiment {

inline constexpr int kRecordSchema = 1;
inline constexpr int kCsvSchema = 1;

enum class DatasetKind { Xxz, Mnist };

std::string to_string(DatasetKind d);

/// One model capacity setting: a QNN depth or a pair of MLP hidden widths.
struct ModelShape {
  ModelKind kind = ModelKind::Qnn;
  std::size_t depth = 4;
  std::array<std::size_t, 2> hidden{64, 16};

  /// "D4" or "h64x16".
  std::string label() const;
};

struct UnlearnSettings {
  std::vector<UnlearnMethod> methods;
  std::size_t steps = 50;
  double learning_rate = 0.01;
  double lambda_ce = 1.0;
  double lambda_kl = 0.0;
  double lambda_fo = 0.2;
  double beta = 0.2;
};

struct HessianSettings {
  std::size_t subset_size = 100;
  double step = 1e-3;
  double check_step = 1e-4;
  double flag_threshold = 0.05;
};

struct MnistSettings {
  std::string images;
  std::string labels;
  std::pair<int, int> digits{1, 9};
  std::size_t train_per_class = 250;
  std::size_t val_total = 1000;
  std::uint64_t selection_seed = 0;
};

/// A fully materialized experiment description. parse_config fills every
/// default, and to_json echoes all of them.
struct Config {
  DatasetKind dataset = DatasetKind::Xxz;
  ModelKind model = ModelKind::Qnn;
  std::vector<ModelShape> shapes;
  double sigmoid_scale = 5.0;
  bool periodic_entanglers = false;
  Protocol protocol = Protocol::LabelFlip;
  std::vector<double> alphas;
  std::vector<std::uint64_t> seeds;
  std::uint64_t base_seed = 0;
  TrainConfig train;
  UnlearnSettings unlearn;
  HessianSettings hessian;
  std::size_t xxz_sites = 12;
  MnistSettings mnist;
  std::string output_dir = "results";
  std::string cache_dir;
  bool use_cache = true;
  std::size_t jobs = 0;

  void validate() const;
};

/// Throws UsageError on unknown keys, bad enums or invalid values.
Config parse_config(const nlohmann::json& doc);
nlohmann::json to_json(const Config& config);

/// SHA-1 over "blob <size>\0<content>", hex encoded (git object id).
std::string git_blob_sha1(std::string_view content);

struct Context {
  std::filesystem::path out_dir;
  std::filesystem::path cache_dir;
  std::size_t jobs = 1;
  /// Hash of the configuration document as given; echoed into every row.
  std::string config_hash;
  std::ostream* log = nullptr;
};

/// Resolves directories: explicit flag, then config, then POISONLAB_CACHE,
/// then <out>/cache.
Context make_context(const Config& config, std::string config_hash,
                     const std::string& out_flag = {}, const std::string& cache_flag = {},
                     std::size_t jobs_flag = 0, std::ostream* log = nullptr);

struct DataBundle {
  LabeledDataset train;
  LabeledDataset validation;
  bool cache_hit = false;
};

DataBundle load_or_generate(const Config& config, const Context& ctx);

std::unique_ptr<Model> build_model(const Config& config, const ModelShape& shape,
                                   const LabeledDataset& sample);

/// Deterministic per-cell seeds. Initialization and shuffling depend only on
/// (base seed, seed index) so clean and corrupted runs stay matched; the
/// corruption draw additionally depends on alpha.
struct CellSeeds {
  std::uint64_t init;
  std::uint64_t shuffle;
  std::uint64_t corruption;
  std::uint64_t hessian_subset;
  std::uint64_t unlearn;
};

CellSeeds cell_seeds(std::uint64_t base_seed, std::uint64_t seed_index, double alpha);

struct CellFailure {
  std::string cell;
  std::string reason;
};

struct CommandOutcome {
  std::size_t cells = 0;
  std::size_t computed = 0;
  std::size_t resumed = 0;
  std::vector<CellFailure> failures;

  int exit_code() const noexcept { return failures.empty() ? 0 : 1; }
};

/// Per-(shape, alpha) aggregate over seeds of the final epoch.
struct PoisonSummaryRow {
  std::string shape;
  double alpha = 0.0;
  std::size_t runs = 0;
  double train_acc_mean = 0.0, train_acc_std = 0.0;
  double val_acc_mean = 0.0, val_acc_std = 0.0;
  double train_loss_first_mean = 0.0, train_loss_final_mean = 0.0;
};

struct PoisonTrainResult {
  CommandOutcome outcome;
  std::vector<PoisonSummaryRow> summary;
};

struct UnlearnSummaryRow {
  std::string method;
  double alpha = 0.0;
  std::size_t step = 0;
  std::size_t runs = 0;
  double val_acc_mean = 0.0, val_acc_std = 0.0;
  double forget_acc_mean = 0.0, forget_acc_std = 0.0;
};

struct UnlearnCommandResult {
  CommandOutcome outcome;
  std::size_t step_rows = 0;
  std::vector<UnlearnSummaryRow> summary;
};

struct LrrRow {
  std::string shape;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double trace_noisy = 0.0;
  double trace_clean = 0.0;
  double lrr = 0.0;
};

struct HessianCommandResult {
  CommandOutcome outcome;
  std::vector<LrrRow> rows;
};

CommandOutcome cmd_generate_data(const Config& config, const Context& ctx);
PoisonTrainResult cmd_poison_train(const Config& config, const Context& ctx);
UnlearnCommandResult cmd_unlearn(const Config& config, const Context& ctx);
HessianCommandResult cmd_hessian(const Config& config, const Context& ctx);
/// Aggregates the CSVs under ctx.out_dir into report/*.csv tables; returns
/// the number of tables written.
std::size_t cmd_report(const Context& ctx);

/// CSV helpers shared with the report and the tests.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);
nlohmann::json hessian_report_json(const HessianReport& report);

}  // namespace poisonlab::experiment
