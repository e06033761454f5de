#pragma once

#include <filesystem>
#include <vector>

#include "ser/data.hpp"
#include "ser/dsp.hpp"

namespace ser::io {

// FeatureFile (.serf): magic "SERF", version u32, kind u8 (0 spectrogram,
// 1 mfcc), rows u32, cols u32, then rows*cols little-endian f32, row-major.
inline constexpr std::uint32_t kFeatureFileVersion = 1;

void write_feature_file(const std::filesystem::path& path, const dsp::FeatureMap& fm);
dsp::FeatureMap read_feature_file(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_feature_file(const dsp::FeatureMap& fm);
dsp::FeatureMap decode_feature_file(const std::vector<std::uint8_t>& bytes);

// In-memory training set: features[i] is a rows*cols row-major f32 block.
struct Dataset {
  std::size_t rows = 0;
  std::size_t cols = 0;
  dsp::FeatureKind kind = dsp::FeatureKind::kSpectrogramDb;
  std::vector<std::vector<float>> features;
  std::vector<int> labels;
  std::vector<std::string> ids;
  std::size_t size() const { return features.size(); }
};

// Loads <utterance_id>.serf for every manifest record; all files must share
// kind and shape.
Dataset load_feature_dataset(const std::filesystem::path& features_dir,
                             const data::DatasetManifest& manifest);

}  // namespace ser::io
