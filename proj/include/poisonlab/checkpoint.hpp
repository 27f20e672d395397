#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "poisonlab/mlp.hpp"
#include "poisonlab/model.hpp"
#include "poisonlab/qnn.hpp"

namespace poisonlab {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Model shape plus parameters; the "QPCK" file format (docs/formats.md).
struct Checkpoint {
  ModelKind kind = ModelKind::Qnn;
  QnnConfig qnn;
  MlpConfig mlp;
  std::vector<double> params;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::unique_ptr<Model> make_model(const Checkpoint& ck);

}  // namespace poisonlab
