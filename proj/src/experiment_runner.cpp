#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <tuple>
#include <sstream>

#include "poisonlab/checkpoint.hpp"
#include "poisonlab/error.hpp"
#include "poisonlab/experiment.hpp"
#include "poisonlab/mlp.hpp"
#include "poisonlab/mnist.hpp"
#include "poisonlab/parallel.hpp"
#include "poisonlab/qnn.hpp"
#include "poisonlab/rng.hpp"
#include "poisonlab/xxz.hpp"

namespace poisonlab::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::mutex g_log_mutex;

void note(const Context& ctx, const std::string& msg) {
  if (!ctx.log) return;
  std::lock_guard lock(g_log_mutex);
  *ctx.log << "[poisonlab] " << msg << '\n' << std::flush;
}

std::string num(double v, int digits = 12) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::optional<json> read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return json::parse(in);
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Sample standard deviation (n - 1); zero for a single value.
MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Collects rows and writes the file once; callers fill it only from the
// runner thread after all cells have finished.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  void row(std::vector<std::string> fields) {
    if (fields.size() != header_.size()) throw Error("csv row width mismatch");
    rows_.push_back(std::move(fields));
  }

  std::size_t size() const noexcept { return rows_.size(); }

  void save(const fs::path& path) const {
    std::ostringstream out;
    auto emit = [&out](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << csv_field(r[i]);
      out << '\n';
    };
    emit(header_);
    for (const auto& r : rows_) emit(r);
    write_text_atomic(path, out.str());
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string short_hash(const std::string& h) { return h.substr(0, std::min<std::size_t>(8, h.size())); }

fs::path output_file(const Context& ctx, const std::string& stem) {
  return ctx.out_dir / (stem + "." + short_hash(ctx.config_hash) + ".csv");
}

// ---- datasets --------------------------------------------------------------

std::string dataset_key(const Config& c) {
  if (c.dataset == DatasetKind::Xxz) return "xxz_L" + std::to_string(c.xxz_sites);
  const json src = {c.mnist.images, c.mnist.labels};
  return "mnist_" + std::to_string(c.mnist.digits.first) + "v" +
         std::to_string(c.mnist.digits.second) + "_n" + std::to_string(c.mnist.train_per_class) +
         "_v" + std::to_string(c.mnist.val_total) + "_s" +
         std::to_string(c.mnist.selection_seed) + "_" +
         git_blob_sha1(src.dump()).substr(0, 10);
}

// ---- training cells --------------------------------------------------------

std::string alpha_label(double a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", a);
  return buf;
}

std::uint64_t alpha_word(double a) { return std::bit_cast<std::uint64_t>(a); }

struct TrainCell {
  ModelShape shape;
  double alpha = 0.0;
  std::uint64_t seed = 0;
};

std::string protocol_label(const Config& c, double alpha) {
  return alpha == 0.0 ? std::string("none") : to_string(c.protocol);
}

// Everything that determines a trained model. Clean runs do not depend on
// the protocol, so label-flip and feature-randomization sweeps share them.
json train_fingerprint(const Config& c, const TrainCell& cell) {
  json j;
  j["dataset"] = dataset_key(c);
  j["model"] = to_string(c.model);
  j["shape"] = cell.shape.label();
  if (c.model == ModelKind::Qnn) {
    j["sigmoid_scale"] = c.sigmoid_scale;
    j["periodic_entanglers"] = c.periodic_entanglers;
  }
  j["protocol"] = protocol_label(c, cell.alpha);
  j["alpha"] = cell.alpha;
  j["seed"] = cell.seed;
  j["base_seed"] = c.base_seed;
  j["train"] = to_json(c)["train"];
  return j;
}

std::string cell_stem(const Config& c, const TrainCell& cell, const json& fingerprint) {
  return to_string(c.dataset) + "_" + to_string(c.model) + "_" + cell.shape.label() + "_" +
         protocol_label(c, cell.alpha) + "_a" + alpha_label(cell.alpha) + "_s" +
         std::to_string(cell.seed) + "_" + git_blob_sha1(fingerprint.dump()).substr(0, 12);
}

json cell_keys(const Config& c, const TrainCell& cell, const std::string& method) {
  return {{"dataset", to_string(c.dataset)}, {"model", to_string(c.model)},
          {"shape", cell.shape.label()},     {"protocol", to_string(c.protocol)},
          {"alpha", cell.alpha},             {"seed", cell.seed},
          {"method", method}};
}

json metrics_json(const MetricsLog& log) {
  json arr = json::array();
  for (const auto& e : log.epochs) {
    arr.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"train_acc", e.train_accuracy},
                   {"val_acc", e.val_accuracy},
                   {"seconds", e.seconds}});
  }
  return arr;
}

PartitionedData partition_for(const Config& c, const LabeledDataset& train_set,
                              const TrainCell& cell, std::vector<std::int64_t>* forget_ids) {
  CorruptionPlan plan;
  plan.protocol = c.protocol;
  plan.alpha = cell.alpha;
  plan.seed = cell_seeds(c.base_seed, cell.seed, cell.alpha).corruption;
  auto part = corrupt(train_set, plan);
  if (forget_ids) *forget_ids = plan.forget_ids;
  return part;
}

struct TrainedCell {
  json record;
  Checkpoint checkpoint;
  bool resumed = false;
};

Checkpoint checkpoint_for(const Model& model, std::vector<double> params) {
  Checkpoint ck;
  ck.kind = model.kind();
  if (const auto* q = dynamic_cast<const QnnModel*>(&model)) ck.qnn = q->config();
  if (const auto* m = dynamic_cast<const MlpModel*>(&model)) ck.mlp = m->config();
  ck.params = std::move(params);
  return ck;
}

// Trains one (shape, alpha, seed) cell or loads it from a previous run.
// Failures are written as a failed record and rethrown.
TrainedCell ensure_trained(const Config& c, const Context& ctx, const DataBundle& data,
                           const TrainCell& cell) {
  const json fp = train_fingerprint(c, cell);
  const std::string stem = cell_stem(c, cell, fp);
  const fs::path record_path = ctx.out_dir / "runs" / "train" / (stem + ".json");
  const fs::path ck_rel = fs::path("checkpoints") / (stem + ".qpck");
  const fs::path ck_path = ctx.out_dir / ck_rel;

  if (auto existing = read_json_file(record_path);
      existing && existing->value("status", "") == "ok" && fs::exists(ck_path)) {
    TrainedCell done;
    done.record = std::move(*existing);
    done.checkpoint = read_checkpoint(ck_path);
    done.resumed = true;
    return done;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const CellSeeds seeds = cell_seeds(c.base_seed, cell.seed, cell.alpha);
  json record;
  record["schema"] = kRecordSchema;
  record["csv_schema"] = kCsvSchema;
  record["kind"] = "poison_train";
  record["config_hash"] = ctx.config_hash;
  record["config"] = to_json(c);
  record["cell"] = cell_keys(c, cell, "none");
  record["fingerprint"] = fp;
  record["seeds"] = {{"init", seeds.init},
                     {"shuffle", seeds.shuffle},
                     {"corruption", seeds.corruption}};
  try {
    std::vector<std::int64_t> forget_ids;
    const auto part = partition_for(c, data.train, cell, &forget_ids);
    const auto model = build_model(c, cell.shape, data.train);
    TrainConfig tc = c.train;
    tc.seed = seeds.shuffle;
    auto result = train(*model, part.polluted, &data.validation, tc,
                        model->initial_parameters(seeds.init));
    TrainedCell done;
    done.checkpoint = checkpoint_for(*model, std::move(result.params));
    write_checkpoint(ck_path, done.checkpoint);
    record["status"] = "ok";
    record["model"] = model->describe();
    record["parameter_count"] = model->parameter_count();
    record["forget_ids"] = forget_ids;
    record["metrics"] = metrics_json(result.log);
    if (!result.log.epochs.empty()) {
      const auto& last = result.log.epochs.back();
      record["final"] = {{"train_acc", last.train_accuracy}, {"val_acc", last.val_accuracy},
                         {"train_loss", last.train_loss}};
    }
    record["checkpoint"] = ck_rel.generic_string();
    record["wall_clock_seconds"] = seconds_since(t0);
    write_text_atomic(record_path, record.dump(1));
    done.record = std::move(record);
    return done;
  } catch (const TrainingDiverged& e) {
    record["status"] = "failed";
    record["error"] = e.what();
    record["diagnostic"] = {{"epoch", e.epoch}, {"batch", e.batch}, {"param_norm", e.param_norm}};
    record["metrics"] = metrics_json(e.partial);
    record["wall_clock_seconds"] = seconds_since(t0);
    write_text_atomic(record_path, record.dump(1));
    throw;
  } catch (const std::exception& e) {
    record["status"] = "failed";
    record["error"] = e.what();
    record["wall_clock_seconds"] = seconds_since(t0);
    write_text_atomic(record_path, record.dump(1));
    throw;
  }
}

std::string describe_cell(const TrainCell& cell) {
  return cell.shape.label() + " alpha=" + alpha_label(cell.alpha) + " seed=" +
         std::to_string(cell.seed);
}

std::vector<TrainCell> train_cells(const Config& c, const std::vector<double>& alphas) {
  std::vector<TrainCell> cells;
  for (const auto& shape : c.shapes)
    for (double a : alphas)
      for (auto s : c.seeds) cells.push_back({shape, a, s});
  return cells;
}

// Runs ensure_trained over all cells; failed cells land in outcome.failures
// and leave an empty slot.
std::vector<std::optional<TrainedCell>> train_all(const Config& c, const Context& ctx,
                                                  const DataBundle& data,
                                                  const std::vector<TrainCell>& cells,
                                                  CommandOutcome& outcome) {
  std::vector<std::optional<TrainedCell>> out(cells.size());
  std::vector<std::string> errors(cells.size());
  parallel_for(cells.size(), ctx.jobs, [&](std::size_t i) {
    try {
      out[i] = ensure_trained(c, ctx, data, cells[i]);
      note(ctx, (out[i]->resumed ? "resumed " : "trained ") + describe_cell(cells[i]));
    } catch (const std::exception& e) {
      errors[i] = e.what();
      note(ctx, "FAILED " + describe_cell(cells[i]) + ": " + e.what());
    }
  });
  outcome.cells += cells.size();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (out[i]) {
      (out[i]->resumed ? outcome.resumed : outcome.computed) += 1;
    } else {
      outcome.failures.push_back({"train " + describe_cell(cells[i]), errors[i]});
    }
  }
  return out;
}

}  // namespace

// ---- public ----------------------------------------------------------------

CellSeeds cell_seeds(std::uint64_t base_seed, std::uint64_t seed_index, double alpha) {
  CellSeeds s;
  s.init = derive_seed({base_seed, seed_index, tag_hash("init")});
  s.shuffle = derive_seed({base_seed, seed_index, tag_hash("shuffle")});
  s.corruption = derive_seed({base_seed, alpha_word(alpha), seed_index, tag_hash("corruption")});
  s.hessian_subset = derive_seed({base_seed, seed_index, tag_hash("hessian-subset")});
  s.unlearn = derive_seed({base_seed, alpha_word(alpha), seed_index, tag_hash("unlearn")});
  return s;
}

DataBundle load_or_generate(const Config& c, const Context& ctx) {
  const std::string key = dataset_key(c);
  const fs::path train_path = ctx.cache_dir / (key + "_train.qpld");
  const fs::path val_path = ctx.cache_dir / (key + "_val.qpld");
  DataBundle bundle;
  if (c.use_cache && fs::exists(train_path) && fs::exists(val_path)) {
    try {
      bundle.train = read_dataset_cache(train_path);
      bundle.validation = read_dataset_cache(val_path);
      bundle.cache_hit = true;
      note(ctx, "cache hit: " + train_path.string() + ", " + val_path.string());
      return bundle;
    } catch (const IngestionError& e) {
      note(ctx, std::string("cache unreadable, regenerating: ") + e.what());
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  if (c.dataset == DatasetKind::Xxz) {
    note(ctx, "cache miss: computing XXZ ground states (L=" + std::to_string(c.xxz_sites) + ")");
    std::tie(bundle.train, bundle.validation) = build_xxz_dataset(c.xxz_sites, ctx.jobs);
  } else {
    for (const auto& p : {c.mnist.images, c.mnist.labels}) {
      if (!fs::exists(p)) throw IngestionError("MNIST file not found: " + p);
    }
    note(ctx, "cache miss: reading MNIST from " + c.mnist.images);
    MnistSelection sel;
    sel.digits = c.mnist.digits;
    sel.train_per_class = c.mnist.train_per_class;
    sel.val_total = c.mnist.val_total;
    sel.seed = c.mnist.selection_seed;
    std::tie(bundle.train, bundle.validation) =
        load_mnist_pair(c.mnist.images, c.mnist.labels, sel);
  }
  note(ctx, "dataset ready in " + num(seconds_since(t0), 4) + " s: " +
                std::to_string(bundle.train.size()) + " train, " +
                std::to_string(bundle.validation.size()) + " validation");
  if (c.use_cache) {
    fs::create_directories(ctx.cache_dir);
    write_dataset_cache(train_path, bundle.train);
    write_dataset_cache(val_path, bundle.validation);
  }
  return bundle;
}

std::unique_ptr<Model> build_model(const Config& c, const ModelShape& shape,
                                   const LabeledDataset& sample) {
  if (shape.kind == ModelKind::Qnn) {
    if (sample.dim < 2 || !std::has_single_bit(sample.dim))
      throw StructuralError("QNN needs a power-of-two feature length, got " +
                            std::to_string(sample.dim));
    QnnConfig q;
    q.n_qubits = static_cast<std::size_t>(std::countr_zero(sample.dim));
    q.depth = shape.depth;
    q.sigmoid_scale = c.sigmoid_scale;
    q.periodic_entanglers = c.periodic_entanglers;
    return std::make_unique<QnnModel>(q);
  }
  MlpConfig m;
  m.input_dim = sample.kind == FeatureKind::Complex ? 2 * sample.dim : sample.dim;
  m.hidden = shape.hidden;
  return std::make_unique<MlpModel>(m);
}

CommandOutcome cmd_generate_data(const Config& c, const Context& ctx) {
  CommandOutcome outcome;
  outcome.cells = 1;
  const auto bundle = load_or_generate(c, ctx);
  (bundle.cache_hit ? outcome.resumed : outcome.computed) = 1;
  return outcome;
}

PoisonTrainResult cmd_poison_train(const Config& c, const Context& ctx) {
  c.validate();
  const auto data = load_or_generate(c, ctx);
  const auto cells = train_cells(c, c.alphas);
  PoisonTrainResult result;
  const auto trained = train_all(c, ctx, data, cells, result.outcome);

  CsvWriter runs({"dataset", "model", "protocol", "alpha", "seed", "epoch", "train_loss",
                  "train_acc", "val_acc", "shape", "method", "config_hash"});
  CsvWriter summary({"dataset", "model", "protocol", "shape", "alpha", "runs", "failed",
                     "train_acc_mean", "train_acc_std", "val_acc_mean", "val_acc_std",
                     "method", "config_hash"});
  const std::string ds = to_string(c.dataset), md = to_string(c.model),
                    pr = to_string(c.protocol);
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto si = static_cast<std::size_t>(
        std::find_if(c.shapes.begin(), c.shapes.end(),
                     [&](const ModelShape& s) { return s.label() == cells[i].shape.label(); }) -
        c.shapes.begin());
    const auto ai = static_cast<std::size_t>(
        std::find(c.alphas.begin(), c.alphas.end(), cells[i].alpha) - c.alphas.begin());
    groups[{si, ai}].push_back(i);
    if (!trained[i]) continue;
    for (const auto& e : trained[i]->record.at("metrics")) {
      runs.row({ds, md, pr, num(cells[i].alpha), std::to_string(cells[i].seed),
                std::to_string(e.at("epoch").get<std::size_t>()),
                num(e.at("train_loss").get<double>()), num(e.at("train_acc").get<double>()),
                num(e.at("val_acc").get<double>()), cells[i].shape.label(), "none",
                ctx.config_hash});
    }
  }
  for (const auto& [key, members] : groups) {
    std::vector<double> tr, va, first_loss, last_loss;
    std::size_t failed = 0;
    for (auto i : members) {
      if (!trained[i]) {
        ++failed;
        continue;
      }
      const auto& m = trained[i]->record.at("metrics");
      if (m.empty()) continue;
      tr.push_back(m.back().at("train_acc").get<double>());
      va.push_back(m.back().at("val_acc").get<double>());
      first_loss.push_back(m.front().at("train_loss").get<double>());
      last_loss.push_back(m.back().at("train_loss").get<double>());
    }
    PoisonSummaryRow row;
    row.shape = c.shapes[key.first].label();
    row.alpha = c.alphas[key.second];
    row.runs = tr.size();
    const auto t = mean_std(tr), v = mean_std(va);
    row.train_acc_mean = t.mean;
    row.train_acc_std = t.std;
    row.val_acc_mean = v.mean;
    row.val_acc_std = v.std;
    row.train_loss_first_mean = mean_std(first_loss).mean;
    row.train_loss_final_mean = mean_std(last_loss).mean;
    summary.row({ds, md, pr, row.shape, num(row.alpha), std::to_string(row.runs),
                 std::to_string(failed), num(t.mean), num(t.std), num(v.mean), num(v.std),
                 "none", ctx.config_hash});
    result.summary.push_back(row);
  }
  runs.save(output_file(ctx, "poison_train"));
  summary.save(output_file(ctx, "poison_summary"));
  return result;
}

UnlearnCommandResult cmd_unlearn(const Config& c, const Context& ctx) {
  c.validate();
  // A clean run has an empty forget set, so alpha = 0 is skipped.
  std::vector<double> alphas;
  for (double a : c.alphas) {
    if (a > 0.0) alphas.push_back(a);
  }
  if (alphas.empty()) throw UsageError("unlearn: needs at least one alpha above 0");
  const auto data = load_or_generate(c, ctx);
  const auto cells = train_cells(c, alphas);
  UnlearnCommandResult result;
  const auto trained = train_all(c, ctx, data, cells, result.outcome);

  struct Job {
    std::size_t cell;
    UnlearnMethod method;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!trained[i]) continue;
    for (auto m : c.unlearn.methods) jobs.push_back({i, m});
  }
  std::vector<std::optional<json>> records(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::vector<char> resumed(jobs.size(), 0);

  parallel_for(jobs.size(), ctx.jobs, [&](std::size_t j) {
    const auto& cell = cells[jobs[j].cell];
    const auto method = jobs[j].method;
    const std::string label = describe_cell(cell) + " method=" + to_string(method);
    const auto seeds = cell_seeds(c.base_seed, cell.seed, cell.alpha);
    UnlearnConfig uc;
    uc.method = method;
    uc.steps = c.unlearn.steps;
    uc.learning_rate = c.unlearn.learning_rate;
    uc.lambda_ce = c.unlearn.lambda_ce;
    uc.lambda_kl = c.unlearn.lambda_kl;
    uc.lambda_fo = c.unlearn.lambda_fo;
    uc.beta = c.unlearn.beta;
    uc.adam_beta1 = c.train.adam_beta1;
    uc.adam_beta2 = c.train.adam_beta2;
    uc.adam_eps = c.train.adam_eps;
    uc.seed = derive_seed({seeds.unlearn, tag_hash(to_string(method))});

    json fp = train_fingerprint(c, cell);
    fp["unlearn"] = {{"method", to_string(method)}, {"steps", uc.steps},
                     {"learning_rate", uc.learning_rate}, {"lambda_ce", uc.lambda_ce},
                     {"lambda_kl", uc.lambda_kl}, {"lambda_fo", uc.lambda_fo},
                     {"beta", uc.beta}};
    const fs::path path = ctx.out_dir / "runs" / "unlearn" /
                          (cell_stem(c, cell, fp) + "_" + to_string(method) + ".json");
    if (auto existing = read_json_file(path); existing && existing->value("status", "") == "ok") {
      records[j] = std::move(*existing);
      resumed[j] = 1;
      note(ctx, "resumed unlearn " + label);
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    json record;
    record["schema"] = kRecordSchema;
    record["csv_schema"] = kCsvSchema;
    record["kind"] = "unlearn";
    record["config_hash"] = ctx.config_hash;
    record["config"] = to_json(c);
    record["cell"] = cell_keys(c, cell, to_string(method));
    record["fingerprint"] = fp;
    record["poisoned_checkpoint"] = trained[jobs[j].cell]->record.at("checkpoint");
    try {
      const auto part = partition_for(c, data.train, cell, nullptr);
      const auto& ck = trained[jobs[j].cell]->checkpoint;
      const auto model = make_model(ck);
      const auto out = unlearn(*model, uc, ck.params, part, data.validation);
      json trace = json::array();
      auto push = [&trace](const UnlearnStep& s) {
        trace.push_back({{"step", s.step},
                         {"val_acc", s.val_accuracy},
                         {"forget_acc", s.forgetting_accuracy},
                         {"retain_loss", s.retain_loss},
                         {"forget_loss", s.forget_loss}});
      };
      push(out.trace.baseline);
      for (const auto& s : out.trace.steps) push(s);
      record["status"] = "ok";
      record["trace"] = std::move(trace);
      record["wall_clock_seconds"] = seconds_since(t0);
      write_text_atomic(path, record.dump(1));
      records[j] = std::move(record);
      note(ctx, "unlearned " + label);
    } catch (const std::exception& e) {
      record["status"] = "failed";
      record["error"] = e.what();
      record["wall_clock_seconds"] = seconds_since(t0);
      write_text_atomic(path, record.dump(1));
      errors[j] = e.what();
      note(ctx, "FAILED unlearn " + label + ": " + e.what());
    }
  });

  CsvWriter rows({"dataset", "model", "protocol", "alpha", "seed", "method", "step", "val_acc",
                  "forget_acc", "retain_loss", "forget_loss", "shape", "config_hash"});
  CsvWriter summary({"dataset", "model", "protocol", "shape", "alpha", "method", "step", "runs",
                     "val_acc_mean", "val_acc_std", "forget_acc_mean", "forget_acc_std",
                     "seed", "config_hash"});
  const std::string ds = to_string(c.dataset), md = to_string(c.model),
                    pr = to_string(c.protocol);
  // (shape, alpha, method, step) -> per-seed values
  std::map<std::tuple<std::string, double, std::string, std::size_t>,
           std::pair<std::vector<double>, std::vector<double>>>
      agg;
  result.outcome.cells += jobs.size();
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& cell = cells[jobs[j].cell];
    const std::string method = to_string(jobs[j].method);
    if (!records[j]) {
      result.outcome.failures.push_back(
          {"unlearn " + describe_cell(cell) + " method=" + method, errors[j]});
      continue;
    }
    (resumed[j] ? result.outcome.resumed : result.outcome.computed) += 1;
    for (const auto& s : records[j]->at("trace")) {
      const auto step = s.at("step").get<std::size_t>();
      const double va = s.at("val_acc").get<double>(), fa = s.at("forget_acc").get<double>();
      rows.row({ds, md, pr, num(cell.alpha), std::to_string(cell.seed), method,
                std::to_string(step), num(va), num(fa), num(s.at("retain_loss").get<double>()),
                num(s.at("forget_loss").get<double>()), cell.shape.label(), ctx.config_hash});
      if (step > 0) ++result.step_rows;
      auto& slot = agg[{cell.shape.label(), cell.alpha, method, step}];
      slot.first.push_back(va);
      slot.second.push_back(fa);
    }
  }
  for (const auto& [key, vals] : agg) {
    UnlearnSummaryRow row;
    row.method = std::get<2>(key);
    row.alpha = std::get<1>(key);
    row.step = std::get<3>(key);
    row.runs = vals.first.size();
    const auto v = mean_std(vals.first), f = mean_std(vals.second);
    row.val_acc_mean = v.mean;
    row.val_acc_std = v.std;
    row.forget_acc_mean = f.mean;
    row.forget_acc_std = f.std;
    summary.row({ds, md, pr, std::get<0>(key), num(row.alpha), row.method,
                 std::to_string(row.step), std::to_string(row.runs), num(v.mean), num(v.std),
                 num(f.mean), num(f.std), "all", ctx.config_hash});
    result.summary.push_back(row);
  }
  rows.save(output_file(ctx, "unlearn"));
  summary.save(output_file(ctx, "unlearn_summary"));
  return result;
}

json hessian_report_json(const HessianReport& r) {
  return {{"model_kind", to_string(r.model_kind)},
          {"model_shape", r.model_shape},
          {"alpha", r.alpha},
          {"seed", r.seed},
          {"trace", r.trace},
          {"n_samples_used", r.n_samples_used},
          {"step_size", r.step_size},
          {"check_step", r.check_step},
          {"check_trace", r.check_trace},
          {"flagged", r.flagged},
          {"subset_ids", r.subset_ids},
          {"hessian_diagonal", r.hessian_diagonal}};
}

HessianCommandResult cmd_hessian(const Config& c, const Context& ctx) {
  c.validate();
  const auto data = load_or_generate(c, ctx);
  std::vector<double> alphas{0.0};
  for (double a : c.alphas) {
    if (a != 0.0) alphas.push_back(a);
  }
  const auto cells = train_cells(c, alphas);
  HessianCommandResult result;
  const auto trained = train_all(c, ctx, data, cells, result.outcome);

  std::vector<std::optional<json>> reports(cells.size());
  std::vector<std::string> errors(cells.size());
  std::vector<char> resumed(cells.size(), 0);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (trained[i]) todo.push_back(i);
  }
  const std::size_t inner_jobs = std::max<std::size_t>(1, ctx.jobs / std::max<std::size_t>(1, todo.size()));
  parallel_for(todo.size(), ctx.jobs, [&](std::size_t t) {
    const std::size_t i = todo[t];
    const auto& cell = cells[i];
    json fp = train_fingerprint(c, cell);
    fp["hessian"] = to_json(c)["hessian"];
    const fs::path path =
        ctx.out_dir / "hessian" / (cell_stem(c, cell, fp) + ".json");
    if (auto existing = read_json_file(path); existing && existing->value("status", "") == "ok") {
      reports[i] = std::move(*existing);
      resumed[i] = 1;
      note(ctx, "resumed hessian " + describe_cell(cell));
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    json record;
    record["schema"] = kRecordSchema;
    record["kind"] = "hessian";
    record["config_hash"] = ctx.config_hash;
    record["config"] = to_json(c);
    record["cell"] = cell_keys(c, cell, "hessian");
    record["fingerprint"] = fp;
    record["checkpoint"] = trained[i]->record.at("checkpoint");
    try {
      const auto part = partition_for(c, data.train, cell, nullptr);
      const auto& ck = trained[i]->checkpoint;
      const auto model = make_model(ck);
      HessianOptions opt;
      opt.subset_size = c.hessian.subset_size;
      opt.subset_seed = cell_seeds(c.base_seed, cell.seed, cell.alpha).hessian_subset;
      opt.step = c.hessian.step;
      opt.check_step = c.hessian.check_step;
      opt.flag_threshold = c.hessian.flag_threshold;
      opt.jobs = inner_jobs;
      auto report = hessian_report(*model, ck.params, part.polluted, cell.alpha, cell.seed, opt);
      report.model_shape = cell.shape.label();
      record["status"] = "ok";
      record["report"] = hessian_report_json(report);
      record["wall_clock_seconds"] = seconds_since(t0);
      write_text_atomic(path, record.dump(1));
      reports[i] = std::move(record);
      note(ctx, "hessian " + describe_cell(cell) + " trace=" + num(report.trace, 8) + " (" +
                    num(seconds_since(t0), 4) + " s)");
    } catch (const std::exception& e) {
      record["status"] = "failed";
      record["error"] = e.what();
      write_text_atomic(path, record.dump(1));
      errors[i] = e.what();
      note(ctx, "FAILED hessian " + describe_cell(cell) + ": " + e.what());
    }
  });
  result.outcome.cells += todo.size();
  for (auto i : todo) {
    if (reports[i]) {
      (resumed[i] ? result.outcome.resumed : result.outcome.computed) += 1;
    } else {
      result.outcome.failures.push_back({"hessian " + describe_cell(cells[i]), errors[i]});
    }
  }

  auto find_trace = [&](const std::string& shape, double alpha,
                        std::uint64_t seed) -> std::optional<double> {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].shape.label() == shape && cells[i].alpha == alpha && cells[i].seed == seed &&
          reports[i])
        return reports[i]->at("report").at("trace").get<double>();
    }
    return std::nullopt;
  };

  CsvWriter rows({"dataset", "model", "protocol", "shape", "alpha", "seed", "method",
                  "trace_noisy", "trace_clean", "lrr", "config_hash"});
  CsvWriter summary({"dataset", "model", "protocol", "shape", "alpha", "seed", "method", "runs",
                     "lrr_mean", "lrr_std", "lrr_min", "lrr_max", "config_hash"});
  const std::string ds = to_string(c.dataset), md = to_string(c.model),
                    pr = to_string(c.protocol);
  for (const auto& shape : c.shapes) {
    for (double a : alphas) {
      std::vector<double> values;
      for (auto s : c.seeds) {
        const auto noisy = find_trace(shape.label(), a, s);
        const auto clean = find_trace(shape.label(), 0.0, s);
        if (!noisy || !clean) continue;
        LrrRow row{shape.label(), a, s, *noisy, *clean, 0.0};
        try {
          row.lrr = lrr(*noisy, *clean);
        } catch (const std::exception& e) {
          result.outcome.failures.push_back({"lrr " + shape.label() + " alpha=" +
                                                 alpha_label(a) + " seed=" + std::to_string(s),
                                             e.what()});
          continue;
        }
        values.push_back(row.lrr);
        rows.row({ds, md, pr, row.shape, num(a), std::to_string(s), "hessian", num(*noisy),
                  num(*clean), num(row.lrr), ctx.config_hash});
        result.rows.push_back(row);
      }
      if (values.empty()) continue;
      const auto ms = mean_std(values);
      summary.row({ds, md, pr, shape.label(), num(a), "all", "hessian",
                   std::to_string(values.size()), num(ms.mean), num(ms.std),
                   num(*std::min_element(values.begin(), values.end())),
                   num(*std::max_element(values.begin(), values.end())), ctx.config_hash});
    }
  }
  rows.save(output_file(ctx, "lrr"));
  summary.save(output_file(ctx, "lrr_summary"));
  return result;
}

// ---- report ----------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char ch = line[i];
      if (quoted) {
        if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (ch == '"') {
          quoted = false;
        } else {
          cur += ch;
        }
      } else if (ch == '"') {
        quoted = true;
      } else if (ch == ',') {
        fields.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += ch;
      }
    }
    fields.push_back(std::move(cur));
    rows.push_back(std::move(fields));
  }
  return rows;
}

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IngestionError("csv column missing: " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

// Concatenates every <stem>.<hash>.csv in the directory; duplicate rows on
// the given key columns are dropped (clean runs are shared between sweeps).
std::optional<Table> gather(const fs::path& dir, const std::string& stem,
                            const std::vector<std::string>& key_cols) {
  std::vector<fs::path> files;
  if (!fs::exists(dir)) return std::nullopt;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind(stem + ".", 0) == 0 &&
        entry.path().extension() == ".csv")
      files.push_back(entry.path());
  }
  if (files.empty()) return std::nullopt;
  std::sort(files.begin(), files.end());
  Table t;
  std::set<std::vector<std::string>> seen;
  for (const auto& f : files) {
    auto rows = read_csv(f);
    if (rows.empty()) continue;
    if (t.header.empty()) {
      t.header = rows.front();
    } else if (rows.front() != t.header) {
      throw IngestionError("csv header mismatch in " + f.string());
    }
    std::vector<std::size_t> idx;
    for (const auto& k : key_cols) idx.push_back(t.col(k));
    for (std::size_t r = 1; r < rows.size(); ++r) {
      std::vector<std::string> key;
      for (auto i : idx) key.push_back(rows[r].at(i));
      if (seen.insert(key).second) t.rows.push_back(std::move(rows[r]));
    }
  }
  return t;
}

}  // namespace

std::size_t cmd_report(const Context& ctx) {
  std::size_t tables = 0;
  const fs::path dir = ctx.out_dir / "report";

  if (auto t = gather(ctx.out_dir, "poison_train",
                      {"dataset", "model", "protocol", "shape", "alpha", "seed", "epoch"})) {
    const auto cd = t->col("dataset"), cm = t->col("model"), cp = t->col("protocol"),
               cs = t->col("shape"), ca = t->col("alpha"), ce = t->col("epoch"),
               cl = t->col("train_loss"), ct = t->col("train_acc"), cv = t->col("val_acc"),
               cseed = t->col("seed");
    using Key = std::tuple<std::string, std::string, std::string, std::string, double>;
    // final epoch per seed
    std::map<std::pair<Key, std::string>, std::pair<std::size_t, std::size_t>> last;
    std::map<std::pair<Key, std::size_t>, std::array<std::vector<double>, 3>> curves;
    for (std::size_t r = 0; r < t->rows.size(); ++r) {
      const auto& row = t->rows[r];
      const Key key{row[cd], row[cm], row[cp], row[cs], std::stod(row[ca])};
      const auto epoch = static_cast<std::size_t>(std::stoul(row[ce]));
      auto& slot = last[{key, row[cseed]}];
      if (epoch >= slot.first) slot = {epoch, r};
      auto& c = curves[{key, epoch}];
      c[0].push_back(std::stod(row[cl]));
      c[1].push_back(std::stod(row[ct]));
      c[2].push_back(std::stod(row[cv]));
    }
    std::map<Key, std::array<std::vector<double>, 2>> finals;
    for (const auto& [k, v] : last) {
      const auto& row = t->rows[v.second];
      finals[k.first][0].push_back(std::stod(row[ct]));
      finals[k.first][1].push_back(std::stod(row[cv]));
    }
    CsvWriter fig({"dataset", "model", "protocol", "shape", "alpha", "runs", "train_acc_mean",
                   "train_acc_std", "val_acc_mean", "val_acc_std"});
    for (const auto& [k, v] : finals) {
      const auto a = mean_std(v[0]), b = mean_std(v[1]);
      fig.row({std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k),
               num(std::get<4>(k)), std::to_string(v[0].size()), num(a.mean), num(a.std),
               num(b.mean), num(b.std)});
    }
    fig.save(dir / "resilience.csv");
    CsvWriter cur({"dataset", "model", "protocol", "shape", "alpha", "epoch", "runs",
                   "train_loss_mean", "train_acc_mean", "val_acc_mean", "val_acc_std"});
    for (const auto& [k, v] : curves) {
      const auto& key = k.first;
      const auto val = mean_std(v[2]);
      cur.row({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key),
               num(std::get<4>(key)), std::to_string(k.second), std::to_string(v[0].size()),
               num(mean_std(v[0]).mean), num(mean_std(v[1]).mean), num(val.mean),
               num(val.std)});
    }
    cur.save(dir / "training_curves.csv");
    tables += 2;
  }

  if (auto t = gather(ctx.out_dir, "unlearn",
                      {"dataset", "model", "protocol", "shape", "alpha", "seed", "method",
                       "step"})) {
    const auto cd = t->col("dataset"), cm = t->col("model"), cs = t->col("shape"),
               ca = t->col("alpha"), cme = t->col("method"), cst = t->col("step"),
               cv = t->col("val_acc"), cf = t->col("forget_acc");
    using Key = std::tuple<std::string, std::string, std::string, double, std::string,
                           std::size_t>;
    std::map<Key, std::array<std::vector<double>, 2>> agg;
    for (const auto& row : t->rows) {
      auto& s = agg[{row[cd], row[cm], row[cs], std::stod(row[ca]), row[cme],
                     static_cast<std::size_t>(std::stoul(row[cst]))}];
      s[0].push_back(std::stod(row[cv]));
      s[1].push_back(std::stod(row[cf]));
    }
    CsvWriter fig({"dataset", "model", "shape", "alpha", "method", "step", "runs",
                   "val_acc_mean", "val_acc_std", "forget_acc_mean", "forget_acc_std"});
    for (const auto& [k, v] : agg) {
      const auto a = mean_std(v[0]), b = mean_std(v[1]);
      fig.row({std::get<0>(k), std::get<1>(k), std::get<2>(k), num(std::get<3>(k)),
               std::get<4>(k), std::to_string(std::get<5>(k)), std::to_string(v[0].size()),
               num(a.mean), num(a.std), num(b.mean), num(b.std)});
    }
    fig.save(dir / "unlearning.csv");
    ++tables;
  }

  if (auto t = gather(ctx.out_dir, "lrr", {"dataset", "model", "shape", "alpha", "seed"})) {
    const auto cd = t->col("dataset"), cm = t->col("model"), cs = t->col("shape"),
               ca = t->col("alpha"), cl = t->col("lrr");
    using Key = std::tuple<std::string, std::string, std::string, double>;
    std::map<Key, std::vector<double>> agg;
    for (const auto& row : t->rows)
      agg[{row[cd], row[cm], row[cs], std::stod(row[ca])}].push_back(std::stod(row[cl]));
    CsvWriter fig({"dataset", "model", "shape", "alpha", "runs", "lrr_mean", "lrr_std",
                   "lrr_min", "lrr_max"});
    for (const auto& [k, v] : agg) {
      const auto ms = mean_std(v);
      fig.row({std::get<0>(k), std::get<1>(k), std::get<2>(k), num(std::get<3>(k)),
               std::to_string(v.size()), num(ms.mean), num(ms.std),
               num(*std::min_element(v.begin(), v.end())),
               num(*std::max_element(v.begin(), v.end()))});
    }
    fig.save(dir / "lrr.csv");
    ++tables;
  }
  if (tables == 0)
    throw UsageError("report: no result CSVs found in " + ctx.out_dir.string());
  return tables;
}

}  // namespace poisonlab::experiment
