#include "poisonlab/mnist.hpp"

#include <zlib.h>

#include <cmath>

#include "poisonlab/error.hpp"
#include "poisonlab/rng.hpp"

namespace poisonlab {

namespace {

std::uint32_t be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                   const std::string& name) {
  if (offset + 4 > bytes.size()) {
    throw IngestionError(name + ": truncated IDX header at offset " + std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void expect_magic(std::uint32_t magic, std::uint32_t wanted, const std::string& name) {
  if (magic != wanted) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad IDX magic 0x%08x (expected 0x%08x)", magic, wanted);
    throw IngestionError(name + ": " + buf + " at offset 0");
  }
}

}  // namespace

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IngestionError(path.string() + ": file not found");
  }
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw IngestionError(path.string() + ": cannot open");
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof buf);
    if (n < 0) {
      int err = 0;
      const std::string msg = gzerror(f, &err);
      const auto offset = out.size();
      gzclose(f);
      throw IngestionError(path.string() + ": read error (" + msg + ") at offset " +
                           std::to_string(offset));
    }
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  gzclose(f);
  return out;
}

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& name) {
  expect_magic(be32(bytes, 0, name), kIdxImagesMagic, name);
  IdxImages img;
  img.count = be32(bytes, 4, name);
  img.rows = be32(bytes, 8, name);
  img.cols = be32(bytes, 12, name);
  const std::size_t need = img.count * img.rows * img.cols;
  if (bytes.size() - 16 < need) {
    throw IngestionError(name + ": truncated image data at offset " +
                         std::to_string(bytes.size()) + " (need " + std::to_string(16 + need) +
                         " bytes)");
  }
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return img;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes,
                                           const std::string& name) {
  expect_magic(be32(bytes, 0, name), kIdxLabelsMagic, name);
  const std::size_t count = be32(bytes, 4, name);
  if (bytes.size() - 8 < count) {
    throw IngestionError(name + ": truncated label data at offset " +
                         std::to_string(bytes.size()) + " (need " + std::to_string(8 + count) +
                         " bytes)");
  }
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

IdxImages read_idx_images(const std::filesystem::path& path) {
  return parse_idx_images(read_maybe_gzip(path), path.string());
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  return parse_idx_labels(read_maybe_gzip(path), path.string());
}

std::vector<Complex> mnist_feature(std::span<const std::uint8_t> image) {
  if (image.size() > kMnistPaddedDim) {
    throw StructuralError("image has more than 1024 pixels");
  }
  std::vector<Complex> f(kMnistPaddedDim, Complex{0, 0});
  double sq = 0.0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = image[i] / 255.0;
    f[i] = v;
    sq += v * v;
  }
  if (!(sq > 0.0)) throw EncodingError("blank image cannot be normalized");
  const double inv = 1.0 / std::sqrt(sq);
  for (auto& v : f) v *= inv;
  return f;
}

std::pair<LabeledDataset, LabeledDataset> load_mnist_pair(const std::filesystem::path& images,
                                                          const std::filesystem::path& labels,
                                                          const MnistSelection& selection) {
  const IdxImages img = read_idx_images(images);
  const auto lab = read_idx_labels(labels);
  if (lab.size() != img.count) {
    throw IngestionError(labels.string() + ": label count " + std::to_string(lab.size()) +
                         " does not match image count " + std::to_string(img.count) +
                         " in " + images.string());
  }
  const auto [digit0, digit1] = selection.digits;
  std::vector<std::size_t> pool0;
  std::vector<std::size_t> pool1;
  for (std::size_t i = 0; i < lab.size(); ++i) {
    if (lab[i] == digit0) pool0.push_back(i);
    if (lab[i] == digit1) pool1.push_back(i);
  }
  Rng rng(derive_seed({selection.seed, tag_hash("mnist-selection")}));
  rng.shuffle(pool0);
  rng.shuffle(pool1);
  const std::size_t need = selection.train_per_class;
  if (pool0.size() < need || pool1.size() < need) {
    throw IngestionError(labels.string() + ": only " + std::to_string(pool0.size()) + "/" +
                         std::to_string(pool1.size()) + " images of digits " +
                         std::to_string(digit0) + "/" + std::to_string(digit1) + ", need " +
                         std::to_string(need) + " each");
  }
  std::vector<std::size_t> rest(pool0.begin() + static_cast<std::ptrdiff_t>(need), pool0.end());
  rest.insert(rest.end(), pool1.begin() + static_cast<std::ptrdiff_t>(need), pool1.end());
  if (rest.size() < selection.val_total) {
    throw IngestionError(labels.string() + ": not enough remaining images for a validation set of " +
                         std::to_string(selection.val_total));
  }
  rng.shuffle(rest);

  const auto add = [&](LabeledDataset& ds, std::size_t index) {
    const int label = lab[index] == digit0 ? 0 : 1;
    ds.push_back(mnist_feature(img.image(index)), label, static_cast<std::int64_t>(index),
                 static_cast<double>(index));
  };
  LabeledDataset train;
  LabeledDataset val;
  train.kind = val.kind = FeatureKind::Real;
  train.partition = Partition::Train;
  val.partition = Partition::Validation;
  for (std::size_t i = 0; i < need; ++i) add(train, pool0[i]);
  for (std::size_t i = 0; i < need; ++i) add(train, pool1[i]);
  for (std::size_t i = 0; i < selection.val_total; ++i) add(val, rest[i]);
  return {std::move(train), std::move(val)};
}

}  // namespace poisonlab
