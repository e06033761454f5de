#include "ser/checkpoint.hpp"

#include <cstring>
#include <map>

#include "ser/audio.hpp"

namespace ser::io {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

struct Reader {
  const std::vector<std::uint8_t>& b;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > b.size()) throw parse_error("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return b[pos++];
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, CheckpointMeta meta,
                     model::ResNet18<float>& net) {
  auto params = net.parameters();
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'S', 'E', 'R', 'C'});
  put_u32(out, kCheckpointVersion);
  out.push_back(static_cast<std::uint8_t>(meta.kind));
  put_u32(out, static_cast<std::uint32_t>(meta.input_rows));
  put_u32(out, static_cast<std::uint32_t>(meta.n_classes));
  static_assert(sizeof(double) == 8);
  auto put_f64 = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
  };
  put_f64(meta.width_scale);
  put_f64(meta.stdz_mean);
  put_f64(meta.stdz_stddev);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put_u32(out, static_cast<std::uint32_t>(p.dims.size()));
    for (std::size_t d : p.dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : *p.values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }
  audio::write_file(path, out);
}

model::ResNet18<float> load_checkpoint(const std::filesystem::path& path,
                                       CheckpointMeta* meta_out) {
  const auto bytes = audio::read_file(path);
  Reader r{bytes};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "SERC", 4) != 0)
    throw parse_error("checkpoint: bad magic");
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw parse_error("checkpoint: unsupported version " + std::to_string(version));

  CheckpointMeta meta;
  meta.kind = static_cast<dsp::FeatureKind>(r.u8());
  meta.input_rows = r.u32();
  meta.n_classes = r.u32();
  auto get_f64 = [&]() {
    const std::uint64_t bits = r.u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  };
  meta.width_scale = get_f64();
  meta.stdz_mean = get_f64();
  meta.stdz_stddev = get_f64();

  model::ResNet18Config cfg;
  cfg.input_rows = meta.input_rows;
  cfg.n_classes = meta.n_classes;
  cfg.width_scale = meta.width_scale;
  model::ResNet18<float> net(cfg, /*seed=*/0);

  std::map<std::string, std::vector<float>*> by_name;
  for (auto& p : net.parameters()) by_name[p.name] = p.values;

  const std::uint32_t count = r.u32();
  std::size_t filled = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const std::uint32_t ndim = r.u32();
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) numel *= r.u32();
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw parse_error("checkpoint: unknown parameter '" + name + "'");
    if (it->second->size() != numel)
      throw parse_error("checkpoint: size mismatch for '" + name + "'");
    for (std::size_t j = 0; j < numel; ++j) {
      const std::uint32_t bits = r.u32();
      float v;
      std::memcpy(&v, &bits, 4);
      (*it->second)[j] = v;
    }
    ++filled;
  }
  if (filled != by_name.size())
    throw parse_error("checkpoint: missing parameters (" + std::to_string(filled) +
                      " of " + std::to_string(by_name.size()) + ")");
  if (meta_out) *meta_out = meta;
  return net;
}

}  // namespace ser::io
