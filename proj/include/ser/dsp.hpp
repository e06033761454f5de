#pragma once

#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include "ser/audio.hpp"

namespace ser::dsp {

inline constexpr std::size_t kWindowLen = 2048;
inline constexpr std::size_t kHop = 512;
inline constexpr std::size_t kFftBins = kWindowLen / 2 + 1;  // 1025
inline constexpr std::size_t kMelBands = 128;
inline constexpr std::size_t kMfccCoeffs = 40;
inline constexpr double kDbFloorPower = 1e-10;
inline constexpr double kDbRange = 80.0;

// mel(f) = 2595 * log10(1 + f/700); throws std::domain_error for f < 0.
double mel_scale(double f_hz);
double mel_to_hz(double mel);

// Non-negative |STFT|^2, rows = FFT bins 0..1024, cols = frames.
struct PowerSpectrogram {
  std::size_t rows = kFftBins;
  std::size_t cols = 0;
  std::vector<double> bins;  // row-major [rows][cols]
  std::size_t window_len = kWindowLen;
  std::size_t frame_hop = kHop;

  double& at(std::size_t r, std::size_t c) { return bins[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return bins[r * cols + c]; }
};

// 128 triangular filters with centers uniform on the mel scale between
// mel(0) and mel(sr/2), each peaking at 1 at its center frequency.
struct MelFilterbank {
  std::size_t n_mels = kMelBands;
  std::size_t n_bins = kFftBins;
  double f_min = 0.0;
  double f_max = audio::kSampleRate / 2.0;
  std::vector<double> weights;                            // [n_mels][n_bins]
  std::vector<std::pair<std::size_t, std::size_t>> bin_range;  // nonzero span
  std::vector<double> center_hz;                          // per filter

  static MelFilterbank make(std::size_t n_mels = kMelBands,
                            std::size_t n_fft = kWindowLen,
                            int sample_rate = audio::kSampleRate);

  double weight(std::size_t m, std::size_t k) const {
    return weights[m * n_bins + k];
  }
};

enum class FeatureKind : std::uint8_t { kSpectrogramDb = 0, kMfcc = 1 };

struct FeatureMap {
  FeatureKind kind = FeatureKind::kSpectrogramDb;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// Radix-2 iterative FFT with precomputed twiddles; n must be a power of 2.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  void transform(std::vector<std::complex<double>>& a) const;
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  std::vector<std::size_t> rev_;
  std::vector<std::complex<double>> twiddle_;
};

// Periodic Hann window of the given length.
std::vector<double> hann_window(std::size_t n);

// Center-framed STFT power: the clip is reflect-padded by window_len/2 on
// each side, frames taken every `hop` samples. T = 1 + floor(N / hop).
PowerSpectrogram stft_power(const audio::AudioClip& clip);

// mel power = fb x power; dB = 10*log10(max(p, 1e-10)) floored at peak - 80.
FeatureMap mel_spectrogram(const PowerSpectrogram& power, const MelFilterbank& fb);

// Per-frame orthonormal DCT-II of the mel-dB columns, first n_coeffs kept.
FeatureMap mfcc(const FeatureMap& mel_db, std::size_t n_coeffs = kMfccCoeffs);

// Orthonormal DCT-II / inverse of a single frame (exposed for verification).
std::vector<double> dct2_ortho(const std::vector<double>& x);
std::vector<double> idct2_ortho(const std::vector<double>& c);

// End-to-end: standardized clip -> 128x259 spectrogram or 40x259 MFCC.
FeatureMap compute_features(const audio::AudioClip& clip, FeatureKind kind);

}  // namespace ser::dsp
