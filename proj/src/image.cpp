#include "ser/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ser/audio.hpp"
#include "ser/common.hpp"

namespace ser::io {

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back((v >> 24) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back(v & 0xff);
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& body) {
  put_u32_be(out, static_cast<std::uint32_t>(body.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const auto crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(4 + body.size()));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::vector<std::uint8_t> encode_png_gray(const std::vector<std::uint8_t>& pixels,
                                          std::size_t width, std::size_t height) {
  if (pixels.size() != width * height)
    throw shape_error("png: pixel buffer does not match dimensions");

  // raw scanlines, each prefixed by filter byte 0
  std::vector<std::uint8_t> raw((width + 1) * height);
  for (std::size_t y = 0; y < height; ++y) {
    raw[y * (width + 1)] = 0;
    std::memcpy(raw.data() + y * (width + 1) + 1, pixels.data() + y * width, width);
  }

  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()),
                Z_BEST_COMPRESSION) != Z_OK)
    throw io_error("png: zlib compression failed");
  comp.resize(comp_len);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", comp);
  put_chunk(out, "IEND", {});
  return out;
}

void write_feature_png(const std::filesystem::path& path, const dsp::FeatureMap& fm,
                       unsigned scale) {
  if (scale == 0) throw usage_error("png: scale must be >= 1");
  double lo = fm.values[0], hi = fm.values[0];
  for (double v : fm.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi - lo;
  const std::size_t w = fm.cols * scale, h = fm.rows * scale;
  std::vector<std::uint8_t> px(w * h, 0);
  for (std::size_t r = 0; r < fm.rows; ++r) {
    for (std::size_t c = 0; c < fm.cols; ++c) {
      const double v = fm.at(r, c);
      const double norm = range > 0 ? (v - lo) / range : 0.0;
      const auto g = static_cast<std::uint8_t>(std::lround(norm * 255.0));
      // low frequencies at the bottom of the image
      const std::size_t y0 = (fm.rows - 1 - r) * scale;
      for (unsigned dy = 0; dy < scale; ++dy)
        for (unsigned dx = 0; dx < scale; ++dx)
          px[(y0 + dy) * w + c * scale + dx] = g;
    }
  }
  audio::write_file(path, encode_png_gray(px, w, h));
}

}  // namespace ser::io
