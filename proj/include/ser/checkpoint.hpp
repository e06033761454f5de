#pragma once

#include <filesystem>

#include "ser/dsp.hpp"
#include "ser/resnet.hpp"

namespace ser::io {

// Checkpoint: magic "SERC", version u32, feature kind u8, input_rows u32,
// n_classes u32, width_scale f64, record count u32, then per-parameter
// records (name length u32 + bytes, ndim u32, dims u32 each, f32 payload).
// All integers and floats little-endian. Running statistics are stored as
// ordinary records so a restored model evaluates identically.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  dsp::FeatureKind kind = dsp::FeatureKind::kSpectrogramDb;
  std::size_t input_rows = 128;
  std::size_t n_classes = 4;
  double width_scale = 1.0;
  // input standardization fitted on the training split
  double stdz_mean = 0.0;
  double stdz_stddev = 1.0;
};

void save_checkpoint(const std::filesystem::path& path, CheckpointMeta meta,
                     model::ResNet18<float>& net);

// Rebuilds the model from the stored config and fills parameters by name.
model::ResNet18<float> load_checkpoint(const std::filesystem::path& path,
                                       CheckpointMeta* meta_out = nullptr);

}  // namespace ser::io
