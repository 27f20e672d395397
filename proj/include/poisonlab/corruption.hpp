#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "poisonlab/dataset.hpp"

namespace poisonlab {

enum class Protocol { LabelFlip, FeatureRandomize };

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& name);

struct CorruptionPlan {
  Protocol protocol = Protocol::LabelFlip;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  /// Filled by the corruption call: sorted sample ids of the forget set.
  std::vector<std::int64_t> forget_ids;
};

/// Retain/forget split of a corrupted training set.
struct PartitionedData {
  /// The full training set as the poisoned model sees it, original order,
  /// corrupted mask set on forget rows.
  LabeledDataset polluted;
  LabeledDataset retain;
  LabeledDataset forget_polluted;
  /// Pre-corruption copies of the forget rows.
  LabeledDataset forget_clean;
};

/// round(alpha * n) with ties to even.
std::size_t forget_count(std::size_t n, double alpha);

/// Sorted row positions chosen by a seeded Fisher-Yates prefix.
/// Throws UsageError when alpha is outside [0, 1].
std::vector<std::size_t> select_forget_indices(std::size_t n, double alpha, std::uint64_t seed);

/// y -> 1 - y on the selected rows.
PartitionedData flip_labels(const LabeledDataset& data, CorruptionPlan& plan);

/// Replaces selected features with normalized Gaussian vectors (complex for
/// complex datasets, real otherwise). Labels are kept.
PartitionedData randomize_features(const LabeledDataset& data, CorruptionPlan& plan);

/// Dispatches on plan.protocol.
PartitionedData corrupt(const LabeledDataset& data, CorruptionPlan& plan);

}  // namespace poisonlab
