#include "poisonlab/checkpoint.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "poisonlab/error.hpp"

namespace poisonlab {

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::size_t expected =
      ck.kind == ModelKind::Qnn ? ck.qnn.parameter_count() : ck.mlp.parameter_count();
  if (ck.params.size() != expected) {
    throw StructuralError("checkpoint parameter count does not match its model shape");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IngestionError(tmp.string() + ": cannot open for writing");
    os.write("QPCK", 4);
    binio::put_uint<std::uint16_t>(os, kCheckpointVersion);
    binio::put_uint<std::uint8_t>(os, static_cast<std::uint8_t>(ck.kind));
    if (ck.kind == ModelKind::Qnn) {
      binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(ck.qnn.n_qubits));
      binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(ck.qnn.depth));
      binio::put_f64(os, ck.qnn.sigmoid_scale);
      binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(ck.qnn.readout()));
      binio::put_uint<std::uint8_t>(os, ck.qnn.periodic_entanglers ? 1 : 0);
    } else {
      binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(ck.mlp.input_dim));
      binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(ck.mlp.hidden[0]));
      binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(ck.mlp.hidden[1]));
    }
    binio::put_uint<std::uint64_t>(os, ck.params.size());
    for (const double p : ck.params) binio::put_f64(os, p);
    if (!os) throw IngestionError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError(path.string() + ": cannot open checkpoint");
  binio::Reader in(is, path.string());
  char magic[4];
  in.read(magic, 4, "magic");
  if (std::string(magic, 4) != "QPCK") in.fail("bad magic (expected QPCK)");
  const auto version = in.uint<std::uint16_t>("version");
  if (version != kCheckpointVersion) in.fail("unsupported QPCK version " + std::to_string(version));
  Checkpoint ck;
  const auto kind = in.uint<std::uint8_t>("model kind");
  if (kind > 1) in.fail("unknown model kind tag");
  ck.kind = static_cast<ModelKind>(kind);
  if (ck.kind == ModelKind::Qnn) {
    ck.qnn.n_qubits = in.uint<std::uint32_t>("qubit count");
    ck.qnn.depth = in.uint<std::uint32_t>("depth");
    ck.qnn.sigmoid_scale = in.f64("sigmoid scale");
    ck.qnn.readout_qubit = in.uint<std::uint32_t>("readout qubit");
    ck.qnn.periodic_entanglers = in.uint<std::uint8_t>("ring flag") != 0;
  } else {
    ck.mlp.input_dim = in.uint<std::uint32_t>("input dim");
    ck.mlp.hidden[0] = in.uint<std::uint32_t>("hidden dim 1");
    ck.mlp.hidden[1] = in.uint<std::uint32_t>("hidden dim 2");
  }
  const auto count = in.uint<std::uint64_t>("parameter count");
  const std::size_t expected =
      ck.kind == ModelKind::Qnn ? ck.qnn.parameter_count() : ck.mlp.parameter_count();
  if (count != expected) in.fail("parameter count does not match the stored shape");
  ck.params.resize(count);
  for (auto& p : ck.params) p = in.f64("parameter");
  return ck;
}

std::unique_ptr<Model> make_model(const Checkpoint& ck) {
  if (ck.kind == ModelKind::Qnn) return std::make_unique<QnnModel>(ck.qnn);
  return std::make_unique<MlpModel>(ck.mlp);
}

}  // namespace poisonlab
