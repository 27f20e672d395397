#include "poisonlab/corruption.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>

#include "poisonlab/error.hpp"
#include "poisonlab/rng.hpp"

namespace poisonlab {

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw UsageError("noise ratio alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
}

template <typename Mutate>
PartitionedData partition(const LabeledDataset& data, CorruptionPlan& plan, Mutate&& mutate) {
  data.validate();
  const auto rows = select_forget_indices(data.size(), plan.alpha, plan.seed);
  std::vector<bool> selected(data.size(), false);
  for (const auto r : rows) selected[r] = true;

  PartitionedData out;
  out.polluted = data;
  std::vector<std::size_t> retain_rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!selected[i]) retain_rows.push_back(i);
  }
  out.forget_clean = data.subset(rows);
  for (const auto r : rows) {
    mutate(out.polluted, r);
    out.polluted.corrupted[r] = true;
  }
  out.retain = out.polluted.subset(retain_rows);
  out.forget_polluted = out.polluted.subset(rows);

  plan.forget_ids.clear();
  for (const auto r : rows) plan.forget_ids.push_back(data.sample_ids[r]);
  std::sort(plan.forget_ids.begin(), plan.forget_ids.end());
  return out;
}

}  // namespace

std::string to_string(Protocol p) {
  return p == Protocol::LabelFlip ? "label_flip" : "feature_randomize";
}

Protocol parse_protocol(const std::string& name) {
  if (name == "label_flip") return Protocol::LabelFlip;
  if (name == "feature_randomize") return Protocol::FeatureRandomize;
  throw UsageError("unknown corruption protocol '" + name +
                   "' (expected label_flip or feature_randomize)");
}

std::size_t forget_count(std::size_t n, double alpha) {
  check_alpha(alpha);
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(alpha * static_cast<double>(n));
  std::fesetround(saved);
  return static_cast<std::size_t>(r);
}

std::vector<std::size_t> select_forget_indices(std::size_t n, double alpha, std::uint64_t seed) {
  const std::size_t k = forget_count(n, alpha);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed({seed, tag_hash("forget-indices")}));
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(k);
  std::sort(perm.begin(), perm.end());
  return perm;
}

PartitionedData flip_labels(const LabeledDataset& data, CorruptionPlan& plan) {
  if (plan.protocol != Protocol::LabelFlip) throw UsageError("plan is not a label-flip plan");
  return partition(data, plan, [](LabeledDataset& d, std::size_t r) {
    d.labels[r] = 1 - d.labels[r];
  });
}

PartitionedData randomize_features(const LabeledDataset& data, CorruptionPlan& plan) {
  if (plan.protocol != Protocol::FeatureRandomize) {
    throw UsageError("plan is not a feature-randomization plan");
  }
  Rng rng(derive_seed({plan.seed, tag_hash("feature-noise")}));
  const bool complex = data.kind == FeatureKind::Complex;
  return partition(data, plan, [&](LabeledDataset& d, std::size_t r) {
    auto& f = d.features[r];
    for (auto& a : f) a = {rng.normal(), 0.0};
    if (complex) {
      for (auto& a : f) a.imag(rng.normal());
    }
    double sq = 0.0;
    for (const auto& a : f) sq += std::norm(a);
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& a : f) a *= inv;
  });
}

PartitionedData corrupt(const LabeledDataset& data, CorruptionPlan& plan) {
  return plan.protocol == Protocol::LabelFlip ? flip_labels(data, plan)
                                              : randomize_features(data, plan);
}

}  // namespace poisonlab
