#include "ser/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ser/common.hpp"

namespace ser::audio {

namespace {

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) |
         (static_cast<std::uint32_t>(b[off + 1]) << 8) |
         (static_cast<std::uint32_t>(b[off + 2]) << 16) |
         (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] |
                                    (static_cast<std::uint16_t>(b[off + 1]) << 8));
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t off, const char* tag) {
  return std::memcmp(b.data() + off, tag, 4) == 0;
}

}  // namespace

WavData decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE"))
    throw parse_error("wav: not a RIFF/WAVE file");

  bool have_fmt = false;
  int channels = 0, sample_rate = 0, bits = 0;
  std::size_t data_off = 0, data_len = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::size_t chunk_len = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_len > bytes.size())
      throw parse_error("wav: chunk overruns file");
    if (tag_is(bytes, pos, "fmt ")) {
      if (chunk_len < 16) throw parse_error("wav: fmt chunk too short");
      const int format = read_u16(bytes, body);
      if (format != 1)
        throw parse_error("wav: unsupported format tag " + std::to_string(format) +
                          " (PCM only)");
      channels = read_u16(bytes, body + 2);
      sample_rate = static_cast<int>(read_u32(bytes, body + 4));
      bits = read_u16(bytes, body + 14);
      if (channels < 1) throw parse_error("wav: zero channels");
      if (sample_rate <= 0) throw parse_error("wav: bad sample rate");
      if (bits != 8 && bits != 16 && bits != 24)
        throw parse_error("wav: unsupported bit depth " + std::to_string(bits));
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      data_off = body;
      data_len = chunk_len;
      have_data = true;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw parse_error("wav: missing fmt chunk");
  if (!have_data) throw parse_error("wav: missing data chunk");

  const std::size_t bytes_per_sample = static_cast<std::size_t>(bits) / 8;
  const std::size_t frame_bytes = bytes_per_sample * static_cast<std::size_t>(channels);
  const std::size_t frames = data_len / frame_bytes;
  if (frames == 0) throw parse_error("wav: empty audio (zero-length data)");

  WavData out;
  out.sample_rate = sample_rate;
  out.channels.assign(static_cast<std::size_t>(channels),
                      std::vector<double>(frames));
  const std::uint8_t* p = bytes.data() + data_off;
  for (std::size_t f = 0; f < frames; ++f) {
    for (int c = 0; c < channels; ++c) {
      double v = 0.0;
      switch (bits) {
        case 8:  // unsigned, full scale 128 around the 0x80 midpoint
          v = (static_cast<int>(*p) - 128) / 128.0;
          p += 1;
          break;
        case 16: {
          std::int16_t s = static_cast<std::int16_t>(p[0] | (p[1] << 8));
          v = s / 32768.0;
          p += 2;
          break;
        }
        case 24: {
          std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
          if (s & 0x800000) s -= 0x1000000;
          v = s / 8388608.0;
          p += 3;
          break;
        }
      }
      out.channels[static_cast<std::size_t>(c)][f] = v;
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_wav16(std::span<const double> mono,
                                       int sample_rate) {
  const std::size_t n = mono.size();
  const std::uint32_t data_len = static_cast<std::uint32_t>(n * 2);
  std::vector<std::uint8_t> out(44 + data_len);
  auto put_u32 = [&](std::size_t off, std::uint32_t v) {
    out[off] = v & 0xff;
    out[off + 1] = (v >> 8) & 0xff;
    out[off + 2] = (v >> 16) & 0xff;
    out[off + 3] = (v >> 24) & 0xff;
  };
  auto put_u16 = [&](std::size_t off, std::uint16_t v) {
    out[off] = v & 0xff;
    out[off + 1] = (v >> 8) & 0xff;
  };
  std::memcpy(out.data(), "RIFF", 4);
  put_u32(4, 36 + data_len);
  std::memcpy(out.data() + 8, "WAVE", 4);
  std::memcpy(out.data() + 12, "fmt ", 4);
  put_u32(16, 16);
  put_u16(20, 1);  // PCM
  put_u16(22, 1);  // mono
  put_u32(24, static_cast<std::uint32_t>(sample_rate));
  put_u32(28, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(32, 2);
  put_u16(34, 16);
  std::memcpy(out.data() + 36, "data", 4);
  put_u32(40, data_len);
  for (std::size_t i = 0; i < n; ++i) {
    double v = std::clamp(mono[i], -1.0, 1.0);
    auto s = static_cast<std::int16_t>(std::lrint(v * 32767.0));
    out[44 + 2 * i] = static_cast<std::uint8_t>(s & 0xff);
    out[44 + 2 * i + 1] = static_cast<std::uint8_t>((s >> 8) & 0xff);
  }
  return out;
}

std::vector<double> resample_linear(std::span<const double> in, int in_rate,
                                    int out_rate) {
  if (in.empty()) return {};
  if (in_rate == out_rate) return {in.begin(), in.end()};
  const double ratio = static_cast<double>(in_rate) / static_cast<double>(out_rate);
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(in.size()) / ratio));
  std::vector<double> out(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto i0 = static_cast<std::size_t>(pos);
    if (i0 + 1 >= in.size()) {
      out[i] = in.back();
    } else {
      const double frac = pos - static_cast<double>(i0);
      out[i] = (1.0 - frac) * in[i0] + frac * in[i0 + 1];
    }
  }
  return out;
}

AudioClip load_and_standardize(std::span<const std::uint8_t> wav_bytes,
                               std::string source_id) {
  WavData wav = decode_wav(wav_bytes);

  std::vector<double> mono(wav.frames(), 0.0);
  const double inv_ch = 1.0 / static_cast<double>(wav.channels.size());
  for (const auto& ch : wav.channels)
    for (std::size_t i = 0; i < mono.size(); ++i) mono[i] += ch[i] * inv_ch;

  std::vector<double> at_rate = resample_linear(mono, wav.sample_rate, kSampleRate);

  AudioClip clip;
  clip.source_id = std::move(source_id);
  clip.samples = std::move(at_rate);
  clip.samples.resize(kClipSamples, 0.0);  // truncate or zero-pad the tail
  return clip;
}

AudioClip load_and_standardize_file(const std::filesystem::path& path) {
  return load_and_standardize(read_file(path), path.stem().string());
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw io_error("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw io_error("cannot open: " + path.string());
  const auto size = static_cast<std::size_t>(is.tellg());
  is.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  is.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(size));
  if (!is) throw io_error("read failed: " + path.string());
  return bytes;
}

}  // namespace ser::audio
