#include "ser/features_io.hpp"

#include <cstring>

#include "ser/audio.hpp"

namespace ser::io {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 24) & 0xff);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float get_f32(const std::uint8_t* p) {
  const std::uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

namespace {

void check_feature_shape(dsp::FeatureKind kind, std::size_t rows) {
  const std::size_t expect = kind == dsp::FeatureKind::kSpectrogramDb ? 128 : 40;
  if (rows != expect)
    throw parse_error("feature file: kind/rows mismatch (" +
                      std::to_string(rows) + " rows for kind " +
                      std::to_string(static_cast<int>(kind)) + ")");
}

}  // namespace

std::vector<std::uint8_t> encode_feature_file(const dsp::FeatureMap& fm) {
  check_feature_shape(fm.kind, fm.rows);
  std::vector<std::uint8_t> out;
  out.reserve(17 + fm.values.size() * 4);
  out.insert(out.end(), {'S', 'E', 'R', 'F'});
  put_u32(out, kFeatureFileVersion);
  out.push_back(static_cast<std::uint8_t>(fm.kind));
  put_u32(out, static_cast<std::uint32_t>(fm.rows));
  put_u32(out, static_cast<std::uint32_t>(fm.cols));
  for (double v : fm.values) put_f32(out, static_cast<float>(v));
  return out;
}

dsp::FeatureMap decode_feature_file(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 17 || std::memcmp(bytes.data(), "SERF", 4) != 0)
    throw parse_error("feature file: bad magic");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFeatureFileVersion)
    throw parse_error("feature file: unsupported version " + std::to_string(version));
  dsp::FeatureMap fm;
  const std::uint8_t kind = bytes[8];
  if (kind > 1) throw parse_error("feature file: bad kind byte");
  fm.kind = static_cast<dsp::FeatureKind>(kind);
  fm.rows = get_u32(bytes.data() + 9);
  fm.cols = get_u32(bytes.data() + 13);
  check_feature_shape(fm.kind, fm.rows);
  const std::size_t expect = 17 + fm.rows * fm.cols * 4;
  if (bytes.size() != expect)
    throw parse_error("feature file: payload size mismatch");
  fm.values.resize(fm.rows * fm.cols);
  for (std::size_t i = 0; i < fm.values.size(); ++i)
    fm.values[i] = get_f32(bytes.data() + 17 + i * 4);
  return fm;
}

void write_feature_file(const std::filesystem::path& path, const dsp::FeatureMap& fm) {
  audio::write_file(path, encode_feature_file(fm));
}

dsp::FeatureMap read_feature_file(const std::filesystem::path& path) {
  return decode_feature_file(audio::read_file(path));
}

Dataset load_feature_dataset(const std::filesystem::path& features_dir,
                             const data::DatasetManifest& manifest) {
  Dataset ds;
  ds.features.reserve(manifest.size());
  ds.labels.reserve(manifest.size());
  bool first = true;
  for (const auto& rec : manifest.records) {
    const auto path = features_dir / (rec.utterance_id + ".serf");
    dsp::FeatureMap fm = read_feature_file(path);
    if (first) {
      ds.rows = fm.rows;
      ds.cols = fm.cols;
      ds.kind = fm.kind;
      first = false;
    } else if (fm.rows != ds.rows || fm.cols != ds.cols || fm.kind != ds.kind) {
      throw usage_error("feature dir mixes kinds/shapes: " + path.string());
    }
    std::vector<float> block(fm.values.size());
    for (std::size_t i = 0; i < block.size(); ++i)
      block[i] = static_cast<float>(fm.values[i]);
    ds.features.push_back(std::move(block));
    ds.labels.push_back(static_cast<int>(rec.label));
    ds.ids.push_back(rec.utterance_id);
  }
  if (ds.features.empty()) throw usage_error("feature dataset is empty");
  return ds;
}

}  // namespace ser::io
