#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "poisonlab/error.hpp"
#include "poisonlab/experiment.hpp"
#include "poisonlab/parallel.hpp"
#include "poisonlab/xxz.hpp"

namespace poisonlab::experiment {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw UsageError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw UsageError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(where + "." + key + ": " + e.what());
  }
}

json section(const json& doc, const char* key) {
  return doc.contains(key) ? doc.at(key) : json::object();
}

std::string require_string(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc.at(key).is_string())
    throw UsageError(std::string("config requires string field '") + key + "'");
  return doc.at(key).get<std::string>();
}

struct TrainDefaults {
  std::size_t epochs;
  std::size_t batch;
  double lr;
};

// Initial-training hyperparameters per (dataset, model).
TrainDefaults train_defaults(DatasetKind d, ModelKind m) {
  if (d == DatasetKind::Xxz) return m == ModelKind::Mlp ? TrainDefaults{400, 32, 0.01}
                                                        : TrainDefaults{200, 32, 0.03};
  return m == ModelKind::Mlp ? TrainDefaults{100, 128, 0.01} : TrainDefaults{100, 256, 0.005};
}

}  // namespace

std::string to_string(DatasetKind d) { return d == DatasetKind::Xxz ? "xxz" : "mnist"; }

std::string ModelShape::label() const {
  if (kind == ModelKind::Qnn) return "D" + std::to_string(depth);
  return "h" + std::to_string(hidden[0]) + "x" + std::to_string(hidden[1]);
}

void Config::validate() const {
  if (shapes.empty()) throw UsageError("config: no model shape given");
  for (const auto& s : shapes) {
    if (s.kind != model) throw UsageError("config: shape kind does not match model");
    if (s.kind == ModelKind::Mlp && (s.hidden[0] == 0 || s.hidden[1] == 0))
      throw UsageError("config: hidden widths must be positive");
  }
  if (!(sigmoid_scale > 0.0) || !std::isfinite(sigmoid_scale))
    throw UsageError("config: sigmoid_scale must be positive");
  if (alphas.empty()) throw UsageError("config: alpha list is empty");
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw UsageError("config: alpha values must lie in [0, 1]");
  }
  if (seeds.empty()) throw UsageError("config: seed list is empty");
  std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) throw UsageError("config: seeds must be distinct");
  train.validate();
  if (unlearn.methods.empty()) throw UsageError("config: unlearning method list is empty");
  if (unlearn.steps == 0) throw UsageError("config: unlearning steps must be >= 1");
  if (!(unlearn.learning_rate >= 0.0)) throw UsageError("config: unlearning learning_rate < 0");
  for (double w : {unlearn.lambda_ce, unlearn.lambda_kl, unlearn.lambda_fo, unlearn.beta}) {
    if (!std::isfinite(w)) throw UsageError("config: unlearning weights must be finite");
  }
  if (hessian.subset_size == 0) throw UsageError("config: hessian.subset_size must be >= 1");
  if (!(hessian.step > 0.0)) throw UsageError("config: hessian.step must be positive");
  if (dataset == DatasetKind::Xxz) {
    XxzSpec{xxz_sites, 1.0, true}.validate();
  } else {
    if (mnist.images.empty() || mnist.labels.empty())
      throw UsageError("config: mnist.images and mnist.labels are required");
    if (mnist.digits.first == mnist.digits.second || mnist.digits.first < 0 ||
        mnist.digits.first > 9 || mnist.digits.second < 0 || mnist.digits.second > 9)
      throw UsageError("config: mnist.digits must be two distinct digits");
  }
}

Config parse_config(const json& doc) {
  reject_unknown(doc,
                 {"dataset", "model", "qnn", "mlp", "protocol", "alphas", "seeds", "base_seed",
                  "train", "unlearn", "hessian", "xxz", "mnist", "output_dir", "cache_dir",
                  "use_cache", "jobs"},
                 "config");
  Config c;
  const auto ds = require_string(doc, "dataset");
  if (ds == "xxz") {
    c.dataset = DatasetKind::Xxz;
  } else if (ds == "mnist") {
    c.dataset = DatasetKind::Mnist;
  } else {
    throw UsageError("config: dataset must be 'xxz' or 'mnist', got '" + ds + "'");
  }
  try {
    c.model = parse_model_kind(require_string(doc, "model"));
  } catch (const Error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }

  const json qnn = section(doc, "qnn");
  reject_unknown(qnn, {"depths", "sigmoid_scale", "periodic_entanglers"}, "qnn");
  const json mlp = section(doc, "mlp");
  reject_unknown(mlp, {"hidden"}, "mlp");
  c.sigmoid_scale = get_or(qnn, "sigmoid_scale", 5.0, "qnn");
  c.periodic_entanglers = get_or(qnn, "periodic_entanglers", false, "qnn");
  if (c.model == ModelKind::Qnn) {
    const auto depths = get_or(qnn, "depths",
                               std::vector<std::size_t>{c.dataset == DatasetKind::Xxz ? 4u : 6u},
                               "qnn");
    for (auto d : depths) c.shapes.push_back({ModelKind::Qnn, d, {0, 0}});
  } else {
    const auto hidden = get_or(
        mlp, "hidden",
        std::vector<std::array<std::size_t, 2>>{c.dataset == DatasetKind::Xxz
                                                    ? std::array<std::size_t, 2>{64, 16}
                                                    : std::array<std::size_t, 2>{16, 4}},
        "mlp");
    for (const auto& h : hidden) c.shapes.push_back({ModelKind::Mlp, 0, h});
  }

  const auto proto = get_or<std::string>(doc, "protocol", "label_flip", "config");
  try {
    c.protocol = parse_protocol(proto);
  } catch (const Error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  c.alphas = get_or(doc, "alphas",
                    std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0},
                    "config");
  c.seeds = get_or(doc, "seeds", std::vector<std::uint64_t>{0, 1, 2, 3, 4}, "config");
  c.base_seed = get_or<std::uint64_t>(doc, "base_seed", 20240917, "config");

  const json tr = section(doc, "train");
  reject_unknown(tr,
                 {"epochs", "batch_size", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
                  "shuffle"},
                 "train");
  const auto td = train_defaults(c.dataset, c.model);
  c.train.epochs = get_or(tr, "epochs", td.epochs, "train");
  c.train.batch_size = get_or(tr, "batch_size", td.batch, "train");
  c.train.learning_rate = get_or(tr, "learning_rate", td.lr, "train");
  c.train.adam_beta1 = get_or(tr, "adam_beta1", 0.9, "train");
  c.train.adam_beta2 = get_or(tr, "adam_beta2", 0.999, "train");
  c.train.adam_eps = get_or(tr, "adam_eps", 1e-8, "train");
  c.train.shuffle = get_or(tr, "shuffle", true, "train");

  const json un = section(doc, "unlearn");
  reject_unknown(un,
                 {"methods", "steps", "learning_rate", "lambda_ce", "lambda_kl", "lambda_fo",
                  "beta"},
                 "unlearn");
  if (un.contains("methods")) {
    for (const auto& name : get_or<std::vector<std::string>>(un, "methods", {}, "unlearn")) {
      try {
        c.unlearn.methods.push_back(parse_unlearn_method(name));
      } catch (const Error& e) {
        throw UsageError(std::string("config: ") + e.what());
      }
    }
  } else {
    c.unlearn.methods = all_unlearn_methods();
  }
  c.unlearn.steps = get_or<std::size_t>(un, "steps", 50, "unlearn");
  c.unlearn.learning_rate =
      get_or(un, "learning_rate", c.dataset == DatasetKind::Xxz ? 0.01 : 0.001, "unlearn");
  c.unlearn.lambda_ce = get_or(un, "lambda_ce", 1.0, "unlearn");
  c.unlearn.lambda_kl = get_or(un, "lambda_kl", 0.0, "unlearn");
  c.unlearn.lambda_fo = get_or(un, "lambda_fo", 0.2, "unlearn");
  c.unlearn.beta = get_or(un, "beta", 0.2, "unlearn");

  const json he = section(doc, "hessian");
  reject_unknown(he, {"subset_size", "step", "check_step", "flag_threshold"}, "hessian");
  c.hessian.subset_size = get_or<std::size_t>(he, "subset_size", 100, "hessian");
  c.hessian.step = get_or(he, "step", 1e-3, "hessian");
  c.hessian.check_step = get_or(he, "check_step", 1e-4, "hessian");
  c.hessian.flag_threshold = get_or(he, "flag_threshold", 0.05, "hessian");

  const json xx = section(doc, "xxz");
  reject_unknown(xx, {"sites"}, "xxz");
  c.xxz_sites = get_or<std::size_t>(xx, "sites", 12, "xxz");

  const json mn = section(doc, "mnist");
  reject_unknown(mn, {"images", "labels", "digits", "train_per_class", "val_total",
                      "selection_seed"},
                 "mnist");
  c.mnist.images = get_or<std::string>(mn, "images", "", "mnist");
  c.mnist.labels = get_or<std::string>(mn, "labels", "", "mnist");
  const auto digits = get_or(mn, "digits", std::array<int, 2>{1, 9}, "mnist");
  c.mnist.digits = {digits[0], digits[1]};
  c.mnist.train_per_class = get_or<std::size_t>(mn, "train_per_class", 250, "mnist");
  c.mnist.val_total = get_or<std::size_t>(mn, "val_total", 1000, "mnist");
  c.mnist.selection_seed = get_or<std::uint64_t>(mn, "selection_seed", 0, "mnist");

  c.output_dir = get_or<std::string>(doc, "output_dir", "results", "config");
  c.cache_dir = get_or<std::string>(doc, "cache_dir", "", "config");
  c.use_cache = get_or(doc, "use_cache", true, "config");
  c.jobs = get_or<std::size_t>(doc, "jobs", 0, "config");

  c.validate();
  return c;
}

json to_json(const Config& c) {
  json j;
  j["dataset"] = to_string(c.dataset);
  j["model"] = to_string(c.model);
  std::vector<std::size_t> depths;
  std::vector<std::array<std::size_t, 2>> hidden;
  for (const auto& s : c.shapes) {
    if (s.kind == ModelKind::Qnn) {
      depths.push_back(s.depth);
    } else {
      hidden.push_back(s.hidden);
    }
  }
  j["qnn"] = {{"sigmoid_scale", c.sigmoid_scale}, {"periodic_entanglers", c.periodic_entanglers}};
  if (c.model == ModelKind::Qnn) j["qnn"]["depths"] = depths;
  j["mlp"] = json::object();
  if (c.model == ModelKind::Mlp) j["mlp"]["hidden"] = hidden;
  j["protocol"] = to_string(c.protocol);
  j["alphas"] = c.alphas;
  j["seeds"] = c.seeds;
  j["base_seed"] = c.base_seed;
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps},
                {"shuffle", c.train.shuffle}};
  std::vector<std::string> methods;
  for (auto m : c.unlearn.methods) methods.push_back(to_string(m));
  j["unlearn"] = {{"methods", methods},
                  {"steps", c.unlearn.steps},
                  {"learning_rate", c.unlearn.learning_rate},
                  {"lambda_ce", c.unlearn.lambda_ce},
                  {"lambda_kl", c.unlearn.lambda_kl},
                  {"lambda_fo", c.unlearn.lambda_fo},
                  {"beta", c.unlearn.beta}};
  j["hessian"] = {{"subset_size", c.hessian.subset_size},
                  {"step", c.hessian.step},
                  {"check_step", c.hessian.check_step},
                  {"flag_threshold", c.hessian.flag_threshold}};
  j["xxz"] = {{"sites", c.xxz_sites}};
  j["mnist"] = {{"images", c.mnist.images},
                {"labels", c.mnist.labels},
                {"digits", {c.mnist.digits.first, c.mnist.digits.second}},
                {"train_per_class", c.mnist.train_per_class},
                {"val_total", c.mnist.val_total},
                {"selection_seed", c.mnist.selection_seed}};
  j["output_dir"] = c.output_dir;
  j["cache_dir"] = c.cache_dir;
  j["use_cache"] = c.use_cache;
  j["jobs"] = c.jobs;
  return j;
}

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> md(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!md || EVP_DigestInit_ex(md.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(md.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(md.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(md.get(), digest, &len) != 1)
    throw Error("SHA-1 digest failed");
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) out << std::setw(2) << static_cast<int>(digest[i]);
  return out.str();
}

Context make_context(const Config& config, std::string config_hash, const std::string& out_flag,
                     const std::string& cache_flag, std::size_t jobs_flag, std::ostream* log) {
  Context ctx;
  ctx.out_dir = std::filesystem::path(out_flag.empty() ? config.output_dir : out_flag);
  if (!cache_flag.empty()) {
    ctx.cache_dir = cache_flag;
  } else if (!config.cache_dir.empty()) {
    ctx.cache_dir = config.cache_dir;
  } else if (const char* env = std::getenv("POISONLAB_CACHE"); env && *env) {
    ctx.cache_dir = env;
  } else {
    ctx.cache_dir = ctx.out_dir / "cache";
  }
  const std::size_t requested = jobs_flag ? jobs_flag : config.jobs;
  ctx.jobs = requested ? requested : default_jobs();
  ctx.config_hash = std::move(config_hash);
  ctx.log = log;
  return ctx;
}

}  // namespace poisonlab::experiment
