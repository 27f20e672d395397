#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "poisonlab/quantum_sim.hpp"

namespace poisonlab {

enum class FeatureKind : std::uint8_t { Real = 0, Complex = 1 };
enum class Partition : std::uint8_t { Train = 0, Validation = 1 };

/// Binary-labelled samples with stable ids. Features are always stored as
/// complex amplitudes; real datasets (MNIST) keep zero imaginary parts and
/// are tagged FeatureKind::Real.
struct LabeledDataset {
  FeatureKind kind = FeatureKind::Real;
  Partition partition = Partition::Train;
  std::size_t dim = 0;
  std::vector<std::vector<Complex>> features;
  std::vector<int> labels;
  std::vector<std::int64_t> sample_ids;
  std::vector<bool> corrupted;
  /// Generating parameter per sample: the anisotropy for XXZ, the source
  /// index in the IDX file for MNIST.
  std::vector<double> source_tag;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }

  /// Appends one sample; the feature length must match dim (dim is set by the
  /// first sample when zero).
  void push_back(std::vector<Complex> feature, int label, std::int64_t id, double tag);

  /// Copy restricted to the given row positions, in the given order.
  LabeledDataset subset(std::span<const std::size_t> rows) const;

  /// Throws StructuralError when counts or lengths disagree or labels are not
  /// binary.
  void validate() const;
};

/// Concatenation; both parts must share kind and dim.
LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);

/// "QPLD" dataset cache (see docs/formats.md).
void write_dataset_cache(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset read_dataset_cache(const std::filesystem::path& path);

inline constexpr std::uint16_t kDatasetCacheVersion = 1;

}  // namespace poisonlab
