// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance --criterion N --work DIR [--mnist DIR] [--jobs J]
//
// Trained runs are shared through DIR (records and checkpoints resume), so
// criteria that reuse a cell only pay for it once.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "poisonlab/corruption.hpp"
#include "poisonlab/curvature.hpp"
#include "poisonlab/error.hpp"
#include "poisonlab/experiment.hpp"
#include "poisonlab/mlp.hpp"
#include "poisonlab/optimizer.hpp"
#include "poisonlab/qnn.hpp"
#include "poisonlab/quantum_sim.hpp"
#include "poisonlab/rng.hpp"
#include "poisonlab/unlearning.hpp"
#include "poisonlab/xxz.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace poisonlab;
namespace ex = poisonlab::experiment;

namespace {

struct Env {
  fs::path work;
  fs::path mnist;
  std::size_t jobs = 0;
};

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  // Records one sub-check; the verdict fails if any sub-check fails.
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    detail << (ok ? "" : "[x] ") << what << "; ";
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- experiment helpers -----------------------------------------------------

json mnist_section(const Env& env) {
  return {{"images", (env.mnist / "train-images-idx3-ubyte").string()},
          {"labels", (env.mnist / "train-labels-idx1-ubyte").string()}};
}

struct Run {
  ex::Config config;
  ex::Context ctx;
};

Run prepare(const Env& env, json doc) {
  doc["output_dir"] = env.work.string();
  doc["cache_dir"] = (env.work / "cache").string();
  Run r{ex::parse_config(doc), {}};
  r.ctx = ex::make_context(r.config, ex::git_blob_sha1(doc.dump()), {}, {}, env.jobs, &std::cerr);
  return r;
}

json base_doc(const std::string& dataset, const std::string& model, const Env& env) {
  json doc{{"dataset", dataset}, {"model", model}, {"seeds", {0, 1, 2, 3, 4}}};
  if (dataset == "mnist") doc["mnist"] = mnist_section(env);
  return doc;
}

const ex::PoisonSummaryRow* find_row(const std::vector<ex::PoisonSummaryRow>& rows, double alpha) {
  for (const auto& r : rows) {
    if (std::abs(r.alpha - alpha) < 1e-12) return &r;
  }
  return nullptr;
}

double val_at(const std::vector<ex::PoisonSummaryRow>& rows, double alpha) {
  const auto* r = find_row(rows, alpha);
  return r ? r->val_acc_mean : std::nan("");
}

void note_failures(Verdict& v, const ex::CommandOutcome& o, const std::string& what) {
  if (o.failures.empty()) return;
  v.check(false, what + " cells failed: " + std::to_string(o.failures.size()));
  for (const auto& f : o.failures) std::cerr << "  failed " << f.cell << ": " << f.reason << "\n";
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---- 1: simulator gradients --------------------------------------------------

Verdict criterion1(const Env&) {
  Verdict v;
  Rng rng(20240917);
  const int circuits = 120;
  int accepted = 0, degenerate = 0;
  double worst_ps = 0, worst_fd = 0;
  while (accepted < circuits) {
    const std::size_t n = 1 + rng.below(6);
    const std::size_t depth = 1 + rng.below(4);
    std::vector<GateOp> gates;
    for (std::size_t l = 0; l < depth; ++l) {
      for (std::size_t q = 0; q < n; ++q) {
        const double t = rng.uniform(-std::numbers::pi, std::numbers::pi);
        switch (rng.below(3)) {
          case 0: gates.push_back(GateOp::rx(q, t)); break;
          case 1: gates.push_back(GateOp::ry(q, t)); break;
          default: gates.push_back(GateOp::rz(q, t)); break;
        }
      }
      for (std::size_t q = 0; q + 1 < n; ++q) {
        gates.push_back(GateOp::rzz(q, q + 1, rng.uniform(-std::numbers::pi, std::numbers::pi)));
      }
    }
    std::vector<Complex> amps(std::size_t{1} << n);
    for (auto& a : amps) a = {rng.normal(), rng.normal()};
    const auto s0 = amplitude_encode(std::span<const Complex>(amps));
    const std::size_t readout = rng.below(n);

    const auto adj = adjoint_gradient(s0, gates, readout);
    const auto ps = parameter_shift_gradient(s0, gates, readout);
    std::vector<double> fd(gates.size());
    const double h = 1e-5;
    for (std::size_t k = 0; k < gates.size(); ++k) {
      auto up = gates, down = gates;
      up[k].angle += h;
      down[k].angle -= h;
      fd[k] = (expect_z(run_circuit(s0, up), readout) - expect_z(run_circuit(s0, down), readout)) /
              (2 * h);
    }
    double scale = 0;
    for (double g : ps) scale = std::max(scale, std::abs(g));
    // A gradient that vanishes identically has no relative scale; such
    // draws are redrawn and counted.
    if (scale < 1e-3) {
      ++degenerate;
      continue;
    }
    ++accepted;
    for (std::size_t k = 0; k < gates.size(); ++k) {
      worst_ps = std::max(worst_ps, std::abs(adj[k] - ps[k]) / scale);
      worst_fd = std::max(worst_fd, std::abs(fd[k] - ps[k]) / scale);
    }
  }
  v.check(worst_ps <= 1e-6, "adjoint vs shift max rel err " + fmt(worst_ps));
  v.check(worst_fd <= 1e-6, "finite diff vs shift max rel err " + fmt(worst_fd));
  v.detail << accepted << " circuits (" << degenerate << " with vanishing gradient redrawn)";
  return v;
}

// ---- 2: exact diagonalization -------------------------------------------------

Verdict criterion2(const Env& env) {
  Verdict v;
  double worst = 0;
  for (std::size_t L = 2; L <= 8; L += 2) {
    for (double delta : {-0.5, 0.0, 1.0, 2.0}) {
      for (bool periodic : {true, false}) {
        const XxzSpec spec{L, delta, periodic};
        worst = std::max(worst, std::abs(xxz_ground_state(spec).energy -
                                         xxz_ground_state_dense(spec).energy));
      }
    }
  }
  v.check(worst < 1e-9, "Lanczos vs dense max |dE| " + fmt(worst));
  const double e4 = xxz_ground_state(XxzSpec{4, 1.0, true}).energy;
  v.check(std::abs(e4 + 8.0) < 1e-9, "E(L=4, delta=1) = " + fmt(e4, 12));

  const auto [train, val] = build_xxz_dataset(12, env.jobs);
  double worst_res = 0;
  std::vector<double> re(4096), im(4096), hre(4096), him(4096);
  for (const auto* d : {&train, &val}) {
    for (std::size_t i = 0; i < d->size(); ++i) {
      const auto& psi = d->features[i];
      for (std::size_t k = 0; k < psi.size(); ++k) {
        re[k] = psi[k].real();
        im[k] = psi[k].imag();
      }
      const XxzSpec spec{12, d->source_tag[i], true};
      xxz_apply(spec, re, hre);
      xxz_apply(spec, im, him);
      double e = 0;
      for (std::size_t k = 0; k < psi.size(); ++k) e += re[k] * hre[k] + im[k] * him[k];
      double r2 = 0;
      for (std::size_t k = 0; k < psi.size(); ++k) {
        r2 += std::pow(hre[k] - e * re[k], 2) + std::pow(him[k] - e * im[k], 2);
      }
      worst_res = std::max(worst_res, std::sqrt(r2));
    }
  }
  v.check(worst_res < 1e-8, "L=12 max residual " + fmt(worst_res) + " over " +
                                std::to_string(train.size() + val.size()) + " states");
  return v;
}

// ---- 3: minimal-model closed forms --------------------------------------------

// Richardson-extrapolated second difference of the loss itself.
double fd_loss_curvature(MinimalModelPoint p) {
  const double t = p.theta;
  const auto second = [&](double h) {
    p.theta = t + h;
    const double up = minimal_loss(p);
    p.theta = t - h;
    const double down = minimal_loss(p);
    p.theta = t;
    return (up - 2 * minimal_loss(p) + down) / (h * h);
  };
  const double h = 1e-3;
  return (4 * second(h) - second(2 * h)) / 3;
}

Verdict criterion3(const Env&) {
  Verdict v;
  double worst_mlp = 0, worst_qnn = 0, min_mlp = INFINITY;
  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; j <= 20; ++j) {
      const double x = -1.0 + 0.1 * i;
      const double theta = -std::numbers::pi + 0.1 * std::numbers::pi * j;
      for (int y : {0, 1}) {
        const MinimalModelPoint n{x, y, theta, MinimalModel::SingleNeuron};
        const MinimalModelPoint q{x, y, theta, MinimalModel::SingleQubit};
        const double hm = minimal_mlp_hessian(n);
        min_mlp = std::min(min_mlp, hm);
        worst_mlp = std::max(worst_mlp, std::abs(hm - fd_loss_curvature(n)));
        worst_qnn = std::max(worst_qnn, std::abs(minimal_qnn_hessian(q).total - fd_loss_curvature(q)));
      }
    }
  }
  v.check(worst_mlp < 1e-8, "H_MLP max |closed - fd| " + fmt(worst_mlp));
  v.check(worst_qnn < 1e-8, "H_QNN max |closed - fd| " + fmt(worst_qnn));
  v.check(min_mlp >= 0.0, "min H_MLP " + fmt(min_mlp));
  const double outlier = minimal_qnn_hessian({0.0, 0, 0.0, MinimalModel::SingleQubit}).total;
  v.check(outlier < 0.0, "H_QNN(x=0,theta=0,y=0) = " + fmt(outlier, 6));
  return v;
}

// ---- 4: clean baselines --------------------------------------------------------

Verdict criterion4(const Env& env) {
  Verdict v;
  struct Case {
    const char* dataset;
    const char* model;
    double floor;
  };
  for (const Case c : {Case{"xxz", "qnn", 0.95}, Case{"xxz", "mlp", 0.95},
                       Case{"mnist", "mlp", 0.90}, Case{"mnist", "qnn", 0.90}}) {
    auto doc = base_doc(c.dataset, c.model, env);
    doc["alphas"] = {0.0};
    const auto run = prepare(env, doc);
    const auto res = ex::cmd_poison_train(run.config, run.ctx);
    note_failures(v, res.outcome, std::string(c.dataset) + "/" + c.model);
    const double acc = val_at(res.summary, 0.0);
    v.check(acc >= c.floor, std::string(c.dataset) + " " + c.model + " val " + fmt(acc) +
                                " >= " + fmt(c.floor));
  }
  return v;
}

// ---- 5: label-flip resilience ------------------------------------------------

Verdict criterion5(const Env& env) {
  Verdict v;
  auto qdoc = base_doc("xxz", "qnn", env);
  qdoc["alphas"] = {0.0, 0.3, 0.7};
  const auto q = prepare(env, qdoc);
  const auto qr = ex::cmd_poison_train(q.config, q.ctx);
  note_failures(v, qr.outcome, "qnn");
  const double q3 = val_at(qr.summary, 0.3), q7 = val_at(qr.summary, 0.7);
  v.check(q3 >= 0.85, "QNN val(0.3) " + fmt(q3) + " >= 0.85");
  v.check(q7 <= 0.30, "QNN val(0.7) " + fmt(q7) + " <= 0.30");

  auto mdoc = base_doc("xxz", "mlp", env);
  mdoc["alphas"] = {0.0, 0.3};
  const auto m = prepare(env, mdoc);
  const auto mr = ex::cmd_poison_train(m.config, m.ctx);
  note_failures(v, mr.outcome, "mlp");
  const double m0 = val_at(mr.summary, 0.0), m3 = val_at(mr.summary, 0.3);
  v.check(m0 - m3 >= 0.10, "MLP val(0) " + fmt(m0) + " - val(0.3) " + fmt(m3) + " >= 0.10");
  return v;
}

// ---- 6: feature randomization --------------------------------------------------

Verdict criterion6(const Env& env) {
  Verdict v;
  std::map<std::string, std::pair<double, double>> acc;
  for (const char* model : {"qnn", "mlp"}) {
    auto doc = base_doc("xxz", model, env);
    doc["protocol"] = "feature_randomize";
    doc["alphas"] = {0.0, 0.8};
    const auto r = prepare(env, doc);
    const auto res = ex::cmd_poison_train(r.config, r.ctx);
    note_failures(v, res.outcome, model);
    acc[model] = {val_at(res.summary, 0.0), val_at(res.summary, 0.8)};
  }
  const auto [q0, q8] = acc["qnn"];
  const auto m8 = acc["mlp"].second;
  v.check(std::abs(q8 - q0) <= 0.05, "QNN |val(0.8) " + fmt(q8) + " - val(0) " + fmt(q0) + "| <= 0.05");
  v.check(q8 - m8 >= 0.05, "QNN val(0.8) " + fmt(q8) + " - MLP val(0.8) " + fmt(m8) + " >= 0.05");
  return v;
}

// ---- 7: landscape roughening ---------------------------------------------------

Verdict criterion7(const Env& env) {
  Verdict v;
  for (const char* model : {"mlp", "qnn"}) {
    auto doc = base_doc("mnist", model, env);
    doc["alphas"] = {0.0, 0.2, 0.3, 0.4};
    const auto r = prepare(env, doc);
    const auto res = ex::cmd_hessian(r.config, r.ctx);
    note_failures(v, res.outcome, model);
    std::map<double, std::vector<double>> by_alpha;
    bool self_exact = true;
    for (const auto& row : res.rows) {
      if (row.alpha == 0.0) {
        self_exact = self_exact && row.lrr == 1.0;
      } else {
        by_alpha[row.alpha].push_back(row.lrr);
      }
    }
    v.check(self_exact && !res.rows.empty(), std::string(model) + " self-pair LRR == 1");
    for (double a : {0.2, 0.3, 0.4}) {
      const auto& xs = by_alpha[a];
      double mean = 0;
      for (double x : xs) mean += x;
      mean = xs.empty() ? std::nan("") : mean / static_cast<double>(xs.size());
      const bool ok = std::string(model) == "mlp" ? mean >= 10.0 : (mean >= 0.2 && mean <= 3.0);
      v.check(ok, std::string(model) + " LRR(" + fmt(a, 2) + ") " + fmt(mean) + " over " +
                      std::to_string(xs.size()) + " seeds");
    }
  }
  return v;
}

// ---- 8: unlearning -------------------------------------------------------------

std::map<std::string, const ex::UnlearnSummaryRow*> final_rows(const ex::UnlearnCommandResult& r,
                                                              std::size_t step) {
  std::map<std::string, const ex::UnlearnSummaryRow*> out;
  for (const auto& row : r.summary) {
    if (row.step == step && std::abs(row.alpha - 0.3) < 1e-12) out[row.method] = &row;
  }
  return out;
}

Verdict criterion8(const Env& env) {
  Verdict v;
  for (const char* model : {"qnn", "mlp"}) {
    auto doc = base_doc("xxz", model, env);
    doc["alphas"] = {0.3};
    doc["unlearn"] = {{"steps", 50}, {"lambda_ce", 1.0}, {"lambda_kl", 0.0}, {"lambda_fo", 0.2},
                      {"beta", 0.2}};
    const auto r = prepare(env, doc);
    const auto res = ex::cmd_unlearn(r.config, r.ctx);
    note_failures(v, res.outcome, model);
    const auto rows = final_rows(res, 50);
    if (rows.size() != 4) {
      v.check(false, std::string(model) + " missing step-50 rows");
      continue;
    }
    const auto* retrain = rows.at("retrain");
    if (std::string(model) == "qnn") {
      const auto* ft = rows.at("finetune");
      v.check(ft->forget_acc_mean <= 0.10, "QNN finetune forget acc " + fmt(ft->forget_acc_mean) + " <= 0.10");
      v.check(ft->val_acc_mean >= retrain->val_acc_mean,
              "QNN finetune val " + fmt(ft->val_acc_mean) + " >= retrain " + fmt(retrain->val_acc_mean));
    } else {
      int stubborn = 0;
      std::string list;
      for (const char* m : {"finetune", "scrub", "grad_asc"}) {
        const double f = rows.at(m)->forget_acc_mean;
        stubborn += f >= retrain->forget_acc_mean + 0.10;
        list += std::string(m) + "=" + fmt(f) + " ";
      }
      v.check(stubborn >= 2, "MLP forget acc " + list + "vs retrain " +
                                 fmt(retrain->forget_acc_mean) + ": " + std::to_string(stubborn) +
                                 " methods >= retrain + 0.10");
    }
  }
  return v;
}

// ---- 9: structural identities and determinism ----------------------------------

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Step-for-step comparison of two unlearning traces and their end points.
double trace_gap(const UnlearnResult& a, const UnlearnResult& b) {
  double m = max_abs_diff(a.params, b.params);
  if (a.trace.steps.size() != b.trace.steps.size()) return INFINITY;
  for (std::size_t i = 0; i < a.trace.steps.size(); ++i) {
    const auto& s = a.trace.steps[i];
    const auto& t = b.trace.steps[i];
    m = std::max({m, std::abs(s.retain_loss - t.retain_loss), std::abs(s.forget_loss - t.forget_loss),
                  std::abs(s.val_accuracy - t.val_accuracy)});
  }
  return m;
}

Verdict criterion9(const Env& env) {
  Verdict v;
  const auto [train_set, val_set] = build_xxz_dataset(12, env.jobs);

  // unlearning identities on a trained MLP and a trained QNN
  {
    CorruptionPlan plan{Protocol::LabelFlip, 0.3, 11, {}};
    const auto part = corrupt(train_set, plan);
    const MlpModel mlp(MlpConfig{2 * train_set.dim, {64, 16}});
    const QnnModel qnn(QnnConfig{12, 4, 5.0});
    double worst = 0;
    for (const Model* model : {static_cast<const Model*>(&mlp), static_cast<const Model*>(&qnn)}) {
      TrainConfig tc;
      tc.epochs = model == &mlp ? 20 : 5;
      tc.seed = 3;
      const auto poisoned = train(*model, part.polluted, nullptr, tc, model->initial_parameters(5)).params;
      UnlearnConfig ft;
      ft.method = UnlearnMethod::Finetune;
      ft.steps = model == &mlp ? 50 : 10;
      UnlearnConfig ga = ft;
      ga.method = UnlearnMethod::GradAsc;
      ga.beta = 0.0;
      UnlearnConfig sc = ft;
      sc.method = UnlearnMethod::Scrub;
      sc.lambda_kl = 0.0;
      sc.lambda_fo = 0.0;
      const auto base = unlearn(*model, ft, poisoned, part, val_set);
      worst = std::max(worst, trace_gap(base, unlearn(*model, ga, poisoned, part, val_set)));
      worst = std::max(worst, trace_gap(base, unlearn(*model, sc, poisoned, part, val_set)));
    }
    v.check(worst <= 1e-12, "GradAsc(0)/Scrub(0,0) vs Finetune max gap " + fmt(worst));
  }

  // corruption properties over the alpha grid
  bool involution = true, norms = true, partition = true;
  double worst_norm = 0;
  for (int ai = 0; ai <= 10; ++ai) {
    const double alpha = 0.1 * ai;
    CorruptionPlan flip{Protocol::LabelFlip, alpha, 100u + ai, {}};
    const auto once = corrupt(train_set, flip);
    CorruptionPlan again = flip;
    const auto twice = corrupt(once.polluted, again);
    involution = involution && twice.polluted.labels == train_set.labels;

    CorruptionPlan fr{Protocol::FeatureRandomize, alpha, 200u + ai, {}};
    const auto rnd = corrupt(train_set, fr);
    for (std::size_t i = 0; i < rnd.polluted.size(); ++i) {
      if (!rnd.polluted.corrupted[i]) continue;
      double n2 = 0;
      for (const auto& a : rnd.polluted.features[i]) n2 += std::norm(a);
      worst_norm = std::max(worst_norm, std::abs(std::sqrt(n2) - 1.0));
    }
    for (const auto* p : {&once, &rnd}) {
      std::multiset<std::int64_t> ids(p->retain.sample_ids.begin(), p->retain.sample_ids.end());
      ids.insert(p->forget_polluted.sample_ids.begin(), p->forget_polluted.sample_ids.end());
      const std::multiset<std::int64_t> all(train_set.sample_ids.begin(), train_set.sample_ids.end());
      partition = partition && ids == all &&
                  p->forget_polluted.size() == forget_count(train_set.size(), alpha) &&
                  p->forget_clean.sample_ids == p->forget_polluted.sample_ids;
    }
  }
  norms = worst_norm <= 1e-12;
  v.check(involution, "label-flip involution");
  v.check(norms, "corrupted feature norm max |n-1| " + fmt(worst_norm));
  v.check(partition, "partition reconstruction");

  // two fresh end-to-end runs produce identical bytes
  std::vector<std::string> outputs[2];
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = env.work / ("determinism_" + std::to_string(rep));
    fs::remove_all(dir);
    for (const char* model : {"mlp", "qnn"}) {
      json doc{{"dataset", "xxz"}, {"model", model}, {"alphas", {0.0, 0.3}}, {"seeds", {0, 1}},
               {"train", {{"epochs", std::string(model) == "mlp" ? 20 : 3}}},
               {"unlearn", {{"steps", 5}}}};
      // same hash for both runs; the dataset cache is shared with the main work dir
      const auto hash = ex::git_blob_sha1(doc.dump());
      doc["output_dir"] = dir.string();
      doc["cache_dir"] = (env.work / "cache").string();
      const auto config = ex::parse_config(doc);
      const auto ctx = ex::make_context(config, hash, {}, {},
                                        rep == 0 ? 1 : std::max<std::size_t>(2, env.jobs), &std::cerr);
      const auto a = ex::cmd_poison_train(config, ctx);
      const auto b = ex::cmd_unlearn(config, ctx);
      note_failures(v, a.outcome, "determinism train");
      note_failures(v, b.outcome, "determinism unlearn");
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(dir)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".csv" || ext == ".qpck")) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        outputs[rep].push_back(fs::relative(f, dir).string() + "\n" + file_bytes(f));
      }
    }
  }
  v.check(!outputs[0].empty() && outputs[0] == outputs[1],
          "bit-identical reruns over " + std::to_string(outputs[0].size()) + " files");
  return v;
}

// ---- 10: capacity sweep --------------------------------------------------------

Verdict criterion10(const Env& env) {
  Verdict v;
  for (const char* model : {"mlp", "qnn"}) {
    json doc{{"dataset", "xxz"}, {"model", model}, {"alphas", {0.0, 0.3}}, {"seeds", {0, 1}}};
    if (std::string(model) == "mlp") {
      doc["mlp"] = {{"hidden", {{64, 16}, {32, 8}, {8, 2}}}};
    } else {
      doc["qnn"] = {{"depths", {5, 6, 7}}};
    }
    const auto r = prepare(env, doc);
    const auto res = ex::cmd_poison_train(r.config, r.ctx);
    note_failures(v, res.outcome, model);
    const std::size_t expected = r.config.shapes.size() * r.config.alphas.size();
    const auto csv = ex::read_csv(r.ctx.out_dir / ("poison_summary." + r.ctx.config_hash.substr(0, 8) + ".csv"));
    v.check(res.summary.size() == expected && csv.size() == expected + 1,
            std::string(model) + " summary rows " + std::to_string(res.summary.size()) + "/" +
                std::to_string(expected));
    for (const auto& row : res.summary) {
      v.detail << model << " " << row.shape << " a=" << fmt(row.alpha, 2) << " val "
               << fmt(row.val_acc_mean) << "; ";
    }
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"poisonlab acceptance suite"};
  int criterion = 0;
  std::string work, mnist = "/root/data/mnist";
  std::size_t jobs = 0;
  app.add_option("--criterion", criterion, "criterion number (1-10)")->required()->check(CLI::Range(1, 10));
  app.add_option("--work", work, "shared work directory")->required();
  app.add_option("--mnist", mnist, "directory with the MNIST IDX files");
  app.add_option("--jobs", jobs, "worker threads (0 = all cores)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Verdict(const Env&)>> criteria{
      criterion1, criterion2, criterion3, criterion4, criterion5,
      criterion6, criterion7, criterion8, criterion9, criterion10};
  // wall-clock budget per criterion in seconds, 0 = none stated
  constexpr std::array<double, 10> budget{30, 120, 10, 1800, 3600, 0, 1800, 3600, 300, 7200};

  Env env{fs::absolute(work), mnist, jobs};
  fs::create_directories(env.work);
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = criteria[static_cast<std::size_t>(criterion - 1)](env);
  } catch (const std::exception& e) {
    v.check(false, std::string("error: ") + e.what());
  }
  const double elapsed = seconds_since(t0);
  if (const double limit = budget[static_cast<std::size_t>(criterion - 1)]; limit > 0) {
    v.check(elapsed < limit, "runtime " + fmt(elapsed, 4) + " s < " + fmt(limit, 4) + " s");
  }
  std::cout << "criterion " << criterion << ": " << (v.pass ? "PASS" : "FAIL") << "  ("
            << fmt(elapsed, 4) << " s) " << v.detail.str() << std::endl;
  return v.pass ? 0 : 1;
}
