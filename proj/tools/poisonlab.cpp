// poisonlab: command-line driver for the data-poisoning experiments.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "poisonlab/error.hpp"
#include "poisonlab/experiment.hpp"

namespace ex = poisonlab::experiment;

namespace {

constexpr int kExitUsage = 2;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw poisonlab::UsageError("cannot read config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int report_outcome(const ex::CommandOutcome& o) {
  std::cerr << "cells: " << o.cells << ", computed: " << o.computed
            << ", resumed: " << o.resumed << ", failed: " << o.failures.size() << '\n';
  for (const auto& f : o.failures) std::cerr << "  failed " << f.cell << ": " << f.reason << '\n';
  return o.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-poisoning resilience experiments for QNN and MLP classifiers"};
  app.require_subcommand(1);

  std::string config_path, out_dir, cache_dir;
  std::size_t jobs = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "Experiment JSON config");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory (overrides the config)");
    sub->add_option("--jobs", jobs, "Worker threads (default: all cores)");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { seed = s, seed_given = true; },
        "Base seed (overrides the config)");
    sub->add_option("--cache", cache_dir, "Dataset cache directory (fallback: POISONLAB_CACHE)");
  };

  auto* gen = app.add_subcommand("generate-data", "Build or load the dataset cache");
  auto* poison = app.add_subcommand("poison-train", "Train over the alpha x seed grid");
  auto* unl = app.add_subcommand("unlearn", "Run the unlearning methods on poisoned models");
  auto* hes = app.add_subcommand("hessian", "Hessian traces and landscape roughening ratios");
  auto* rep = app.add_subcommand("report", "Aggregate result CSVs into summary tables");
  for (auto* s : {gen, poison, unl, hes}) add_common(s, true);
  add_common(rep, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (rep->parsed()) {
      std::string out = out_dir;
      if (out.empty() && !config_path.empty()) {
        out = ex::parse_config(nlohmann::json::parse(slurp(config_path))).output_dir;
      }
      if (out.empty()) throw poisonlab::UsageError("report needs --out or --config");
      ex::Context ctx;
      ctx.out_dir = out;
      ctx.log = &std::cerr;
      const auto n = ex::cmd_report(ctx);
      std::cerr << "wrote " << n << " tables to " << (ctx.out_dir / "report").string() << '\n';
      return 0;
    }

    const std::string text = slurp(config_path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw poisonlab::UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    auto config = ex::parse_config(doc);
    if (seed_given) config.base_seed = seed;
    const auto ctx = ex::make_context(config, ex::git_blob_sha1(text), out_dir, cache_dir, jobs,
                                      &std::cerr);
    std::cerr << "config " << ctx.config_hash << ", out " << ctx.out_dir.string() << ", cache "
              << ctx.cache_dir.string() << ", jobs " << ctx.jobs << '\n';

    if (gen->parsed()) return report_outcome(ex::cmd_generate_data(config, ctx));
    if (poison->parsed()) {
      const auto r = ex::cmd_poison_train(config, ctx);
      for (const auto& row : r.summary) {
        std::cout << row.shape << " alpha=" << row.alpha << " runs=" << row.runs
                  << " val_acc=" << row.val_acc_mean << " +- " << row.val_acc_std << '\n';
      }
      return report_outcome(r.outcome);
    }
    if (unl->parsed()) {
      const auto r = ex::cmd_unlearn(config, ctx);
      for (const auto& row : r.summary) {
        if (row.step != config.unlearn.steps) continue;
        std::cout << row.method << " alpha=" << row.alpha << " step=" << row.step
                  << " val_acc=" << row.val_acc_mean << " forget_acc=" << row.forget_acc_mean
                  << '\n';
      }
      return report_outcome(r.outcome);
    }
    const auto r = ex::cmd_hessian(config, ctx);
    for (const auto& row : r.rows) {
      std::cout << row.shape << " alpha=" << row.alpha << " seed=" << row.seed
                << " lrr=" << row.lrr << '\n';
    }
    return report_outcome(r.outcome);
  } catch (const poisonlab::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
