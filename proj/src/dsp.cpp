#include "ser/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ser/common.hpp"

namespace ser::dsp {

double mel_scale(double f_hz) {
  if (f_hz < 0.0) throw std::domain_error("mel_scale: negative frequency");
  return 2595.0 * std::log10(1.0 + f_hz / 700.0);
}

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft: size must be a power of two");
  rev_.resize(n);
  std::size_t log_n = 0;
  while ((std::size_t{1} << log_n) < n) ++log_n;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < log_n; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (log_n - 1 - b);
    rev_[i] = r;
  }
  twiddle_.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
    twiddle_[k] = {std::cos(ang), std::sin(ang)};
  }
}

void FftPlan::transform(std::vector<std::complex<double>>& a) const {
  if (a.size() != n_) throw std::invalid_argument("fft: size mismatch with plan");
  for (std::size_t i = 0; i < n_; ++i)
    if (rev_[i] > i) std::swap(a[i], a[rev_[i]]);
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len >> 1;
    const std::size_t step = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const std::complex<double> w = twiddle_[k * step];
        const std::complex<double> u = a[start + k];
        const std::complex<double> v = a[start + k + half] * w;
        a[start + k] = u + v;
        a[start + k + half] = u - v;
      }
    }
  }
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) /
                                static_cast<double>(n));
  return w;
}

namespace {

// Reflect-padded sample access: virtual index j in [-pad, n + pad).
inline double reflect_at(const std::vector<double>& x, std::ptrdiff_t j) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  if (j < 0) j = -j;
  if (j >= n) j = 2 * n - 2 - j;
  return x[static_cast<std::size_t>(j)];
}

}  // namespace

PowerSpectrogram stft_power(const audio::AudioClip& clip) {
  const std::size_t n = clip.samples.size();
  if (n == 0) throw parse_error("stft: empty clip");
  const std::size_t t_frames = 1 + n / kHop;

  static const FftPlan plan(kWindowLen);
  static const std::vector<double> window = hann_window(kWindowLen);
  const auto half = static_cast<std::ptrdiff_t>(kWindowLen / 2);

  PowerSpectrogram out;
  out.cols = t_frames;
  out.bins.assign(kFftBins * t_frames, 0.0);

  std::vector<std::complex<double>> buf(kWindowLen);
  for (std::size_t t = 0; t < t_frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * kHop) - half;
    for (std::size_t i = 0; i < kWindowLen; ++i) {
      const double s = reflect_at(clip.samples, start + static_cast<std::ptrdiff_t>(i));
      buf[i] = {s * window[i], 0.0};
    }
    plan.transform(buf);
    for (std::size_t k = 0; k < kFftBins; ++k)
      out.bins[k * t_frames + t] = std::norm(buf[k]);
  }
  return out;
}

MelFilterbank MelFilterbank::make(std::size_t n_mels, std::size_t n_fft,
                                  int sample_rate) {
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.n_bins = n_fft / 2 + 1;
  fb.f_min = 0.0;
  fb.f_max = sample_rate / 2.0;
  fb.weights.assign(n_mels * fb.n_bins, 0.0);
  fb.bin_range.assign(n_mels, {0, 0});
  fb.center_hz.resize(n_mels);

  // n_mels + 2 edge frequencies uniform in mel
  const double mel_lo = mel_scale(fb.f_min);
  const double mel_hi = mel_scale(fb.f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));

  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    fb.center_hz[m] = center;
    std::size_t first = fb.n_bins, last = 0;
    for (std::size_t k = 0; k < fb.n_bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > lo && f < hi)
        w = f <= center ? (f - lo) / (center - lo) : (hi - f) / (hi - center);
      if (w > 0.0) {
        fb.weights[m * fb.n_bins + k] = w;
        first = std::min(first, k);
        last = k + 1;
      }
    }
    fb.bin_range[m] = first < last ? std::make_pair(first, last)
                                   : std::make_pair(std::size_t{0}, std::size_t{0});
  }
  return fb;
}

FeatureMap mel_spectrogram(const PowerSpectrogram& power, const MelFilterbank& fb) {
  if (power.rows != fb.n_bins)
    throw shape_error("mel_spectrogram: filterbank has " + std::to_string(fb.n_bins) +
                      " bins, power has " + std::to_string(power.rows) + " rows");
  const std::size_t t = power.cols;
  FeatureMap out;
  out.kind = FeatureKind::kSpectrogramDb;
  out.rows = fb.n_mels;
  out.cols = t;
  out.values.assign(fb.n_mels * t, 0.0);

  for (std::size_t m = 0; m < fb.n_mels; ++m) {
    double* dst = out.values.data() + m * t;
    const auto [k0, k1] = fb.bin_range[m];
    for (std::size_t k = k0; k < k1; ++k) {
      const double w = fb.weights[m * fb.n_bins + k];
      const double* src = power.bins.data() + k * t;
      for (std::size_t c = 0; c < t; ++c) dst[c] += w * src[c];
    }
  }

  double peak = -std::numeric_limits<double>::infinity();
  for (auto& v : out.values) {
    v = 10.0 * std::log10(std::max(v, kDbFloorPower));
    peak = std::max(peak, v);
  }
  const double floor_db = peak - kDbRange;
  for (auto& v : out.values) v = std::max(v, floor_db);
  return out;
}

std::vector<double> dct2_ortho(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> c(n, 0.0);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += x[i] * std::cos(M_PI * (2.0 * static_cast<double>(i) + 1.0) *
                             static_cast<double>(k) / (2.0 * static_cast<double>(n)));
    c[k] = (k == 0 ? s0 : sk) * acc;
  }
  return c;
}

std::vector<double> idct2_ortho(const std::vector<double>& c) {
  const std::size_t n = c.size();
  std::vector<double> x(n, 0.0);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double acc = s0 * c[0];
    for (std::size_t k = 1; k < n; ++k)
      acc += sk * c[k] *
             std::cos(M_PI * (2.0 * static_cast<double>(i) + 1.0) *
                      static_cast<double>(k) / (2.0 * static_cast<double>(n)));
    x[i] = acc;
  }
  return x;
}

FeatureMap mfcc(const FeatureMap& mel_db, std::size_t n_coeffs) {
  if (mel_db.kind != FeatureKind::kSpectrogramDb)
    throw shape_error("mfcc: input must be a dB mel spectrogram");
  if (mel_db.rows != kMelBands)
    throw shape_error("mfcc: expected " + std::to_string(kMelBands) +
                      " mel rows, got " + std::to_string(mel_db.rows));
  const std::size_t n = mel_db.rows, t = mel_db.cols;

  // DCT matrix rows for the kept coefficients
  std::vector<double> dct(n_coeffs * n);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n_coeffs; ++k)
    for (std::size_t i = 0; i < n; ++i)
      dct[k * n + i] = (k == 0 ? s0 : sk) *
                       std::cos(M_PI * (2.0 * static_cast<double>(i) + 1.0) *
                                static_cast<double>(k) /
                                (2.0 * static_cast<double>(n)));

  FeatureMap out;
  out.kind = FeatureKind::kMfcc;
  out.rows = n_coeffs;
  out.cols = t;
  out.values.assign(n_coeffs * t, 0.0);
  for (std::size_t k = 0; k < n_coeffs; ++k) {
    double* dst = out.values.data() + k * t;
    const double* row = dct.data() + k * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = row[i];
      const double* src = mel_db.values.data() + i * t;
      for (std::size_t c = 0; c < t; ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

FeatureMap compute_features(const audio::AudioClip& clip, FeatureKind kind) {
  static const MelFilterbank fb = MelFilterbank::make();
  const PowerSpectrogram power = stft_power(clip);
  FeatureMap mel = mel_spectrogram(power, fb);
  if (kind == FeatureKind::kSpectrogramDb) return mel;
  return mfcc(mel);
}

}  // namespace ser::dsp
