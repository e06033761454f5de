#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ser/common.hpp"

namespace ser::audio {

inline constexpr int kSampleRate = 22050;
inline constexpr std::size_t kClipSamples = 132300;  // 6 s at 22050 Hz

// Mono clip standardized to kSampleRate and exactly kClipSamples samples,
// amplitudes in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = kSampleRate;
  std::string source_id;
};

// Decoded PCM WAV, channels deinterleaved, amplitudes scaled to [-1, 1].
struct WavData {
  std::vector<std::vector<double>> channels;
  int sample_rate = 0;
  std::size_t frames() const { return channels.empty() ? 0 : channels[0].size(); }
};

// Accepts 8/16/24-bit PCM, mono or multi-channel. Throws parse_error on a
// malformed header or unsupported encoding, and a parse_error mentioning
// "empty" for zero-length audio.
WavData decode_wav(std::span<const std::uint8_t> bytes);

// 16-bit PCM mono encoder; samples are clipped to [-1, 1].
std::vector<std::uint8_t> encode_wav16(std::span<const double> mono,
                                       int sample_rate);

// Linear resampler.
std::vector<double> resample_linear(std::span<const double> in, int in_rate,
                                    int out_rate);

// Channel-average to mono, resample to 22050 Hz, truncate to the first 6 s
// or zero-pad the tail so the result has exactly kClipSamples samples.
AudioClip load_and_standardize(std::span<const std::uint8_t> wav_bytes,
                               std::string source_id);
AudioClip load_and_standardize_file(const std::filesystem::path& path);

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace ser::audio
