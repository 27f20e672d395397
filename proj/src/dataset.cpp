#include "poisonlab/dataset.hpp"

#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "poisonlab/error.hpp"

namespace poisonlab {

void LabeledDataset::push_back(std::vector<Complex> feature, int label, std::int64_t id,
                               double tag) {
  if (dim == 0) dim = feature.size();
  if (feature.size() != dim) {
    throw StructuralError("feature length " + std::to_string(feature.size()) +
                          " does not match dataset dimension " + std::to_string(dim));
  }
  if (label != 0 && label != 1) throw StructuralError("labels must be 0 or 1");
  features.push_back(std::move(feature));
  labels.push_back(label);
  sample_ids.push_back(id);
  corrupted.push_back(false);
  source_tag.push_back(tag);
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.kind = kind;
  out.partition = partition;
  out.dim = dim;
  for (const auto r : rows) {
    out.features.push_back(features.at(r));
    out.labels.push_back(labels.at(r));
    out.sample_ids.push_back(sample_ids.at(r));
    out.corrupted.push_back(corrupted.at(r));
    out.source_tag.push_back(source_tag.at(r));
  }
  return out;
}

void LabeledDataset::validate() const {
  const std::size_t n = labels.size();
  if (features.size() != n || sample_ids.size() != n || corrupted.size() != n ||
      source_tag.size() != n) {
    throw StructuralError("dataset columns have inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != dim) throw StructuralError("ragged feature vectors");
    if (labels[i] != 0 && labels[i] != 1) throw StructuralError("labels must be 0 or 1");
  }
}

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.kind != b.kind || a.dim != b.dim) {
    throw StructuralError("cannot concatenate datasets of different kind or dimension");
  }
  LabeledDataset out = a;
  out.features.insert(out.features.end(), b.features.begin(), b.features.end());
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.sample_ids.insert(out.sample_ids.end(), b.sample_ids.begin(), b.sample_ids.end());
  out.corrupted.insert(out.corrupted.end(), b.corrupted.begin(), b.corrupted.end());
  out.source_tag.insert(out.source_tag.end(), b.source_tag.begin(), b.source_tag.end());
  return out;
}

void write_dataset_cache(const std::filesystem::path& path, const LabeledDataset& data) {
  data.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IngestionError(tmp.string() + ": cannot open for writing");
    os.write("QPLD", 4);
    binio::put_uint<std::uint16_t>(os, kDatasetCacheVersion);
    binio::put_uint<std::uint8_t>(os, static_cast<std::uint8_t>(data.kind));
    binio::put_uint<std::uint8_t>(os, static_cast<std::uint8_t>(data.partition));
    binio::put_uint<std::uint64_t>(os, data.size());
    binio::put_uint<std::uint64_t>(os, data.dim);
    for (std::size_t i = 0; i < data.size(); ++i) {
      binio::put_i64(os, data.sample_ids[i]);
      binio::put_uint<std::uint8_t>(os, static_cast<std::uint8_t>(data.labels[i]));
      binio::put_uint<std::uint8_t>(os, data.corrupted[i] ? 1 : 0);
      binio::put_f64(os, data.source_tag[i]);
      for (const auto& a : data.features[i]) {
        binio::put_f64(os, a.real());
        binio::put_f64(os, a.imag());
      }
    }
    if (!os) throw IngestionError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

LabeledDataset read_dataset_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError(path.string() + ": cannot open dataset cache");
  binio::Reader in(is, path.string());
  char magic[4];
  in.read(magic, 4, "magic");
  if (std::string(magic, 4) != "QPLD") in.fail("bad magic (expected QPLD)");
  const auto version = in.uint<std::uint16_t>("version");
  if (version != kDatasetCacheVersion) {
    in.fail("unsupported QPLD version " + std::to_string(version));
  }
  LabeledDataset out;
  const auto kind = in.uint<std::uint8_t>("feature kind");
  const auto part = in.uint<std::uint8_t>("partition");
  if (kind > 1 || part > 1) in.fail("bad kind/partition tag");
  out.kind = static_cast<FeatureKind>(kind);
  out.partition = static_cast<Partition>(part);
  const auto n = in.uint<std::uint64_t>("sample count");
  out.dim = in.uint<std::uint64_t>("dimension");
  if (out.dim > (std::uint64_t{1} << 20)) in.fail("implausible dimension");
  for (std::uint64_t s = 0; s < n; ++s) {
    const auto id = in.i64("sample id");
    const auto label = in.uint<std::uint8_t>("label");
    const auto corrupted = in.uint<std::uint8_t>("corruption flag");
    const double tag = in.f64("source tag");
    if (label > 1) in.fail("label is not binary");
    std::vector<Complex> f(out.dim);
    for (auto& a : f) {
      const double re = in.f64("amplitude");
      const double im = in.f64("amplitude");
      a = {re, im};
    }
    out.push_back(std::move(f), label, id, tag);
    out.corrupted.back() = corrupted != 0;
  }
  return out;
}

}  // namespace poisonlab
