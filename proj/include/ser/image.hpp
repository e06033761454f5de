#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ser/dsp.hpp"

namespace ser::io {

// 8-bit grayscale PNG; pixels row-major, top scanline first.
std::vector<std::uint8_t> encode_png_gray(const std::vector<std::uint8_t>& pixels,
                                          std::size_t width, std::size_t height);

// Renders a feature map: time horizontal, band/cepstral index vertical with
// row 0 (lowest frequency) at the bottom; min..max mapped to 0..255.
// scale is an integer nearest-neighbor upscale factor.
void write_feature_png(const std::filesystem::path& path, const dsp::FeatureMap& fm,
                       unsigned scale = 1);

}  // namespace ser::io
