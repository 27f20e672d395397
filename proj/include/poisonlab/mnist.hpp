#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "poisonlab/dataset.hpp"

namespace poisonlab {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
inline constexpr std::size_t kMnistPaddedDim = 1024;

struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major

  std::span<const std::uint8_t> image(std::size_t i) const {
    return {pixels.data() + i * rows * cols, rows * cols};
  }
};

/// Reads a whole file, inflating it when it is gzip-compressed.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

/// Parsers over in-memory bytes; `name` is used in error messages.
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& name);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes,
                                           const std::string& name);

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

/// Pixels / 255, flattened, zero-padded to 1024 and L2-normalized.
std::vector<Complex> mnist_feature(std::span<const std::uint8_t> image);

struct MnistSelection {
  /// First digit maps to class 0, second to class 1.
  std::pair<int, int> digits{1, 9};
  std::size_t train_per_class = 250;
  std::size_t val_total = 1000;
  std::uint64_t seed = 0;
};

/// Seeded selection of a balanced training set and a disjoint validation
/// set drawn from the remaining images of the two digits. Sample ids are the
/// image indices in the source file.
std::pair<LabeledDataset, LabeledDataset> load_mnist_pair(const std::filesystem::path& images,
                                                          const std::filesystem::path& labels,
                                                          const MnistSelection& selection);

}  // namespace poisonlab
