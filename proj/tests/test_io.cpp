#include <doctest.h>

#include <unistd.h>

#include <filesystem>

#include "ser/checkpoint.hpp"
#include "ser/features_io.hpp"
#include "ser/image.hpp"
#include "ser/resnet.hpp"

using namespace ser;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("ser_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

dsp::FeatureMap random_feature(dsp::FeatureKind kind, std::size_t rows,
                               std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  dsp::FeatureMap fm;
  fm.kind = kind;
  fm.rows = rows;
  fm.cols = cols;
  fm.values.resize(rows * cols);
  for (auto& v : fm.values)
    v = static_cast<float>(rng.uniform(-80.0, 0.0));  // f32-representable
  return fm;
}

}  // namespace

TEST_CASE("feature file round trip is bit exact") {
  TempDir tmp;
  const auto fm = random_feature(dsp::FeatureKind::kSpectrogramDb, 128, 259, 1);
  const auto path = tmp.path / "x.serf";
  io::write_feature_file(path, fm);
  const auto back = io::read_feature_file(path);
  CHECK(back.kind == fm.kind);
  CHECK(back.rows == fm.rows);
  CHECK(back.cols == fm.cols);
  REQUIRE(back.values.size() == fm.values.size());
  for (std::size_t i = 0; i < fm.values.size(); ++i)
    CHECK(back.values[i] == fm.values[i]);

  // header layout: payload bytes = rows*cols*4 after a 17-byte header
  const auto bytes = io::encode_feature_file(fm);
  CHECK(bytes.size() == 17 + fm.rows * fm.cols * 4);
  CHECK(bytes[0] == 'S');
  CHECK(bytes[8] == 0);  // spectrogram kind byte

  const auto mf = random_feature(dsp::FeatureKind::kMfcc, 40, 259, 2);
  CHECK(io::encode_feature_file(mf)[8] == 1);

  // the kind/rows pairing is part of the format
  const auto odd = random_feature(dsp::FeatureKind::kMfcc, 13, 7, 5);
  CHECK_THROWS_AS(io::encode_feature_file(odd), parse_error);
}

TEST_CASE("feature file rejects corruption") {
  const auto fm = random_feature(dsp::FeatureKind::kMfcc, 40, 3, 3);
  auto bytes = io::encode_feature_file(fm);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(io::decode_feature_file(bad_magic),
                       doctest::Contains("magic"), parse_error);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(io::decode_feature_file(truncated), parse_error);

  auto bad_kind = bytes;
  bad_kind[8] = 7;
  CHECK_THROWS_AS(io::decode_feature_file(bad_kind), parse_error);
}

TEST_CASE("encoding then rewriting is byte-identical") {
  const auto fm = random_feature(dsp::FeatureKind::kSpectrogramDb, 128, 9, 4);
  CHECK(io::encode_feature_file(fm) == io::encode_feature_file(fm));
}

TEST_CASE("checkpoint round trip restores evaluation exactly") {
  TempDir tmp;
  model::ResNet18Config cfg;
  cfg.width_scale = 0.125;
  cfg.input_rows = 40;
  cfg.input_cols = 33;
  model::ResNet18<float> net(cfg, 99);

  // move BN running stats off the init so restoration is visible
  Rng rng(100);
  nn::Tensor<float> warm({3, 1, 40, 33});
  for (auto& v : warm.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  net.forward(warm, nn::Mode::kTrain);

  io::CheckpointMeta meta;
  meta.kind = dsp::FeatureKind::kMfcc;
  meta.input_rows = 40;
  meta.n_classes = 4;
  meta.width_scale = 0.125;
  meta.stdz_mean = -31.25;
  meta.stdz_stddev = 17.5;
  const auto path = tmp.path / "ckpt.bin";
  io::save_checkpoint(path, meta, net);

  io::CheckpointMeta loaded_meta;
  auto restored = io::load_checkpoint(path, &loaded_meta);
  CHECK(loaded_meta.kind == meta.kind);
  CHECK(loaded_meta.input_rows == 40);
  CHECK(loaded_meta.width_scale == 0.125);
  CHECK(loaded_meta.stdz_mean == -31.25);
  CHECK(loaded_meta.stdz_stddev == 17.5);

  nn::Tensor<float> probe({2, 1, 40, 33});
  for (auto& v : probe.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const auto a = net.forward(probe, nn::Mode::kEval);
  const auto b = restored.forward(probe, nn::Mode::kEval);
  REQUIRE(a.values.size() == b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("checkpoint rejects corruption") {
  TempDir tmp;
  model::ResNet18Config cfg;
  cfg.width_scale = 0.125;
  model::ResNet18<float> net(cfg, 1);
  const auto path = tmp.path / "c.bin";
  io::save_checkpoint(path, {}, net);

  auto bytes = audio::read_file(path);
  bytes[0] = 'X';
  audio::write_file(path, bytes);
  CHECK_THROWS_AS(io::load_checkpoint(path), parse_error);

  CHECK_THROWS_AS(io::load_checkpoint(tmp.path / "missing.bin"), io_error);
}

TEST_CASE("png writer emits the exact pixel grid") {
  TempDir tmp;
  dsp::FeatureMap fm;
  fm.kind = dsp::FeatureKind::kSpectrogramDb;
  fm.rows = 128;
  fm.cols = 259;
  fm.values.resize(fm.rows * fm.cols);
  Rng rng(6);
  for (auto& v : fm.values) v = rng.uniform(-80.0, 0.0);

  const auto path = tmp.path / "f.png";
  io::write_feature_png(path, fm, 1);
  const auto bytes = audio::read_file(path);

  // PNG signature and IHDR dimensions 259 x 128 big-endian
  REQUIRE(bytes.size() > 33);
  CHECK(bytes[1] == 'P');
  const auto be32 = [&](std::size_t off) {
    return (static_cast<std::uint32_t>(bytes[off]) << 24) |
           (static_cast<std::uint32_t>(bytes[off + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[off + 2]) << 8) | bytes[off + 3];
  };
  CHECK(be32(16) == 259);  // width
  CHECK(be32(20) == 128);  // height
  CHECK(bytes[24] == 8);   // bit depth
  CHECK(bytes[25] == 0);   // grayscale

  // constant input -> uniform image compresses to nearly nothing
  dsp::FeatureMap flat = fm;
  std::fill(flat.values.begin(), flat.values.end(), -30.0);
  const auto flat_path = tmp.path / "flat.png";
  io::write_feature_png(flat_path, flat, 1);
  CHECK(fs::file_size(flat_path) < fs::file_size(path));

  // upscale doubles both dimensions
  const auto big_path = tmp.path / "big.png";
  io::write_feature_png(big_path, fm, 2);
  const auto big = audio::read_file(big_path);
  const auto be32b = [&](std::size_t off) {
    return (static_cast<std::uint32_t>(big[off]) << 24) |
           (static_cast<std::uint32_t>(big[off + 1]) << 16) |
           (static_cast<std::uint32_t>(big[off + 2]) << 8) | big[off + 3];
  };
  CHECK(be32b(16) == 518);
  CHECK(be32b(20) == 256);
}
