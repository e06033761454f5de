#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "ser/common.hpp"
#include "ser/tensor.hpp"

namespace ser::nn {

enum class Mode { kTrain, kEval };

// Named view into a layer's parameter storage. Non-trainable entries
// (BN running statistics) have grads == nullptr.
template <typename T>
struct ParamRef {
  std::string name;
  std::vector<T>* values;
  std::vector<T>* grads;
  bool trainable;
  std::vector<std::size_t> dims;
};

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride,
                                std::size_t pad) {
  if (in + 2 * pad < k)
    throw shape_error("conv: spatial extent " + std::to_string(in) +
                      " + 2*pad smaller than kernel " + std::to_string(k));
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void he_normal_init(std::vector<T>& w, std::size_t fan_in, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w) v = static_cast<T>(std_dev * rng.normal());
}

// ---------------------------------------------------------------------------
// Conv2d: cross-correlation with zero padding, NCHW.
// ---------------------------------------------------------------------------
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t stride,
         std::size_t pad, bool has_bias)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad),
        has_bias_(has_bias) {
    if (stride_ < 1) throw shape_error("conv: stride must be >= 1");
    weight.assign(out_ch_ * in_ch_ * k_ * k_, T(0));
    wgrad.assign(weight.size(), T(0));
    if (has_bias_) {
      bias.assign(out_ch_, T(0));
      bgrad.assign(out_ch_, T(0));
    }
  }

  void init(Rng& rng) { he_normal_init(weight, in_ch_ * k_ * k_, rng); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    check_input(x);
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = conv_out_dim(h, k_, stride_, pad_);
    const std::size_t ow = conv_out_dim(w, k_, stride_, pad_);
    Tensor<T> y({n, out_ch_, oh, ow});

    const T* xv = x.values.data();
    T* yv = y.values.data();
    parallel_for(n * out_ch_, [&](std::size_t b, std::size_t e) {
      for (std::size_t idx = b; idx < e; ++idx) {
        const std::size_t ni = idx / out_ch_, oc = idx % out_ch_;
        T* yplane = yv + (ni * out_ch_ + oc) * oh * ow;
        const T bv = has_bias_ ? bias[oc] : T(0);
        std::fill(yplane, yplane + oh * ow, bv);
        for (std::size_t ic = 0; ic < in_ch_; ++ic) {
          const T* xplane = xv + (ni * in_ch_ + ic) * h * w;
          const T* wk = weight.data() + (oc * in_ch_ + ic) * k_ * k_;
          accumulate_plane(xplane, h, w, wk, yplane, oh, ow);
        }
      }
    });

    if (mode == Mode::kTrain) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (input_.numel() == 0)
      throw shape_error("conv backward without cached forward");
    const Tensor<T>& x = input_;
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = gy.dim(2), ow = gy.dim(3);
    Tensor<T> gx({n, in_ch_, h, w});

    const std::ptrdiff_t P = static_cast<std::ptrdiff_t>(pad_);
    const std::ptrdiff_t S = static_cast<std::ptrdiff_t>(stride_);

    // input gradient: one (n, ic) plane per work item
    const T* gyv = gy.values.data();
    T* gxv = gx.values.data();
    parallel_for(n * in_ch_, [&](std::size_t b, std::size_t e) {
      for (std::size_t idx = b; idx < e; ++idx) {
        const std::size_t ni = idx / in_ch_, ic = idx % in_ch_;
        T* gxplane = gxv + (ni * in_ch_ + ic) * h * w;
        for (std::size_t oc = 0; oc < out_ch_; ++oc) {
          const T* gyplane = gyv + (ni * out_ch_ + oc) * oh * ow;
          const T* wk = weight.data() + (oc * in_ch_ + ic) * k_ * k_;
          for (std::size_t kh = 0; kh < k_; ++kh) {
            for (std::size_t kw = 0; kw < k_; ++kw) {
              const T wv = wk[kh * k_ + kw];
              for (std::size_t r = 0; r < oh; ++r) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(r) * S +
                                          static_cast<std::ptrdiff_t>(kh) - P;
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                const T* gyrow = gyplane + r * ow;
                T* gxrow = gxplane + ih * w;
                for (std::size_t c = 0; c < ow; ++c) {
                  const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(c) * S +
                                            static_cast<std::ptrdiff_t>(kw) - P;
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                  gxrow[iw] += wv * gyrow[c];
                }
              }
            }
          }
        }
      }
    });

    // weight/bias gradient: one output channel per work item
    const T* xv = x.values.data();
    parallel_for(out_ch_, [&](std::size_t b, std::size_t e) {
      for (std::size_t oc = b; oc < e; ++oc) {
        T* gw = wgrad.data() + oc * in_ch_ * k_ * k_;
        T gb = T(0);
        for (std::size_t ni = 0; ni < n; ++ni) {
          const T* gyplane = gyv + (ni * out_ch_ + oc) * oh * ow;
          for (std::size_t ic = 0; ic < in_ch_; ++ic) {
            const T* xplane = xv + (ni * in_ch_ + ic) * h * w;
            for (std::size_t kh = 0; kh < k_; ++kh) {
              for (std::size_t kw = 0; kw < k_; ++kw) {
                T acc = T(0);
                for (std::size_t r = 0; r < oh; ++r) {
                  const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(r) * S +
                                            static_cast<std::ptrdiff_t>(kh) - P;
                  if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                  const T* gyrow = gyplane + r * ow;
                  const T* xrow = xplane + ih * w;
                  for (std::size_t c = 0; c < ow; ++c) {
                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(c) * S +
                                              static_cast<std::ptrdiff_t>(kw) - P;
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                    acc += gyrow[c] * xrow[iw];
                  }
                }
                gw[(ic * k_ + kh) * k_ + kw] += acc;
              }
            }
          }
          if (has_bias_) {
            for (std::size_t i = 0; i < oh * ow; ++i) gb += gyplane[i];
          }
        }
        if (has_bias_) bgrad[oc] += gb;
      }
    });

    return gx;
  }

  void zero_grad() {
    std::fill(wgrad.begin(), wgrad.end(), T(0));
    std::fill(bgrad.begin(), bgrad.end(), T(0));
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &weight, &wgrad, true,
                   {out_ch_, in_ch_, k_, k_}});
    if (has_bias_) out.push_back({prefix + ".bias", &bias, &bgrad, true, {out_ch_}});
  }

  std::size_t in_channels() const { return in_ch_; }
  std::size_t out_channels() const { return out_ch_; }
  std::size_t kernel() const { return k_; }
  std::size_t stride() const { return stride_; }
  std::size_t padding() const { return pad_; }
  std::size_t param_count() const { return weight.size() + bias.size(); }
  void drop_cache() { input_ = Tensor<T>(); }

  std::vector<T> weight, bias, wgrad, bgrad;

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.ndim() != 4 || x.dim(1) != in_ch_)
      throw shape_error("conv: expected [N," + std::to_string(in_ch_) +
                        ",H,W], got " + x.shape_str());
  }

  // y[r][c] += sum over kernel of w * x, for one (input plane, kernel slice)
  void accumulate_plane(const T* x, std::size_t h, std::size_t w, const T* wk,
                        T* y, std::size_t oh, std::size_t ow) const {
    const std::ptrdiff_t P = static_cast<std::ptrdiff_t>(pad_);
    const std::ptrdiff_t S = static_cast<std::ptrdiff_t>(stride_);
    for (std::size_t kh = 0; kh < k_; ++kh) {
      for (std::size_t kw = 0; kw < k_; ++kw) {
        const T wv = wk[kh * k_ + kw];
        const std::ptrdiff_t dh = static_cast<std::ptrdiff_t>(kh) - P;
        const std::ptrdiff_t dw = static_cast<std::ptrdiff_t>(kw) - P;
        // valid output column range for this kernel column
        std::size_t c0 = 0;
        if (dw < 0) c0 = static_cast<std::size_t>((-dw + S - 1) / S);
        std::size_t c1 = ow;  // exclusive
        {
          const std::ptrdiff_t max_iw = static_cast<std::ptrdiff_t>(w) - 1 - dw;
          if (max_iw < 0)
            c1 = 0;
          else if (static_cast<std::size_t>(max_iw / S) + 1 < c1)
            c1 = static_cast<std::size_t>(max_iw / S) + 1;
        }
        if (c0 >= c1) continue;
        for (std::size_t r = 0; r < oh; ++r) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(r) * S + dh;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          const T* xrow = x + ih * w;
          T* yrow = y + r * ow;
          if (S == 1) {
            const T* xs = xrow + (static_cast<std::ptrdiff_t>(c0) + dw);
            for (std::size_t c = c0; c < c1; ++c) yrow[c] += wv * xs[c - c0];
          } else {
            for (std::size_t c = c0; c < c1; ++c)
              yrow[c] += wv * xrow[static_cast<std::ptrdiff_t>(c) * S + dw];
          }
        }
      }
    }
  }

  std::size_t in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  bool has_bias_ = false;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------
// BatchNorm2d: per-channel normalization, affine, running statistics.
// TRAIN normalizes by biased batch moments and updates running stats with
// momentum 0.1; EVAL uses the running stats and is batch-size independent.
// ---------------------------------------------------------------------------
template <typename T>
class BatchNorm2d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels) : ch_(channels) {
    gamma.assign(ch_, T(1));
    beta.assign(ch_, T(0));
    ggrad.assign(ch_, T(0));
    bgrad.assign(ch_, T(0));
    running_mean.assign(ch_, T(0));
    running_var.assign(ch_, T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.ndim() != 4 || x.dim(1) != ch_)
      throw shape_error("batch_norm: expected [N," + std::to_string(ch_) +
                        ",H,W], got " + x.shape_str());
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t hw = h * w;
    const std::size_t m = n * hw;
    Tensor<T> y(x.shape);

    if (mode == Mode::kEval) {
      parallel_for(ch_, [&](std::size_t b, std::size_t e) {
        for (std::size_t c = b; c < e; ++c) {
          const double inv = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + kEps);
          const double g = static_cast<double>(gamma[c]) * inv;
          const double off = static_cast<double>(beta[c]) -
                             g * static_cast<double>(running_mean[c]);
          for (std::size_t ni = 0; ni < n; ++ni) {
            const T* xp = x.values.data() + (ni * ch_ + c) * hw;
            T* yp = y.values.data() + (ni * ch_ + c) * hw;
            for (std::size_t i = 0; i < hw; ++i)
              yp[i] = static_cast<T>(g * xp[i] + off);
          }
        }
      });
      return y;
    }

    mean_.assign(ch_, 0.0);
    invstd_.assign(ch_, 0.0);
    xhat_ = Tensor<T>(x.shape);
    bool degenerate = false;
    for (std::size_t c = 0; c < ch_; ++c) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t ni = 0; ni < n; ++ni) {
        const T* xp = x.values.data() + (ni * ch_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum += xp[i];
          sq += static_cast<double>(xp[i]) * xp[i];
        }
      }
      const double mu = sum / static_cast<double>(m);
      double var = sq / static_cast<double>(m) - mu * mu;
      if (var < 0) var = 0;  // cancellation guard
      if (var < 1e-12) degenerate = true;
      mean_[c] = mu;
      invstd_[c] = 1.0 / std::sqrt(var + kEps);
      running_mean[c] = static_cast<T>((1.0 - kMomentum) * running_mean[c] +
                                       kMomentum * mu);
      running_var[c] = static_cast<T>((1.0 - kMomentum) * running_var[c] +
                                      kMomentum * var);
      const double g = static_cast<double>(gamma[c]);
      const double bt = static_cast<double>(beta[c]);
      for (std::size_t ni = 0; ni < n; ++ni) {
        const T* xp = x.values.data() + (ni * ch_ + c) * hw;
        T* hp = xhat_.values.data() + (ni * ch_ + c) * hw;
        T* yp = y.values.data() + (ni * ch_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double xh = (xp[i] - mean_[c]) * invstd_[c];
          hp[i] = static_cast<T>(xh);
          yp[i] = static_cast<T>(g * xh + bt);
        }
      }
    }
    if (degenerate) {
      ++degenerate_batches;
      if (degenerate_batches == 1)
        std::cerr << "warning: batch_norm saw a zero-variance channel in TRAIN "
                     "mode; variance clamped by eps\n";
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (xhat_.numel() == 0)
      throw shape_error("batch_norm backward without cached forward");
    const std::size_t n = gy.dim(0), h = gy.dim(2), w = gy.dim(3);
    const std::size_t hw = h * w;
    const double m = static_cast<double>(n * hw);
    Tensor<T> gx(gy.shape);
    parallel_for(ch_, [&](std::size_t b, std::size_t e) {
      for (std::size_t c = b; c < e; ++c) {
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (std::size_t ni = 0; ni < n; ++ni) {
          const T* gp = gy.values.data() + (ni * ch_ + c) * hw;
          const T* hp = xhat_.values.data() + (ni * ch_ + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            sum_gy += gp[i];
            sum_gy_xhat += static_cast<double>(gp[i]) * hp[i];
          }
        }
        ggrad[c] += static_cast<T>(sum_gy_xhat);
        bgrad[c] += static_cast<T>(sum_gy);
        const double scale = static_cast<double>(gamma[c]) * invstd_[c];
        for (std::size_t ni = 0; ni < n; ++ni) {
          const T* gp = gy.values.data() + (ni * ch_ + c) * hw;
          const T* hp = xhat_.values.data() + (ni * ch_ + c) * hw;
          T* op = gx.values.data() + (ni * ch_ + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            op[i] = static_cast<T>(
                scale * (gp[i] - sum_gy / m - hp[i] * sum_gy_xhat / m));
          }
        }
      }
    });
    return gx;
  }

  void zero_grad() {
    std::fill(ggrad.begin(), ggrad.end(), T(0));
    std::fill(bgrad.begin(), bgrad.end(), T(0));
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".gamma", &gamma, &ggrad, true, {ch_}});
    out.push_back({prefix + ".beta", &beta, &bgrad, true, {ch_}});
    out.push_back({prefix + ".running_mean", &running_mean, nullptr, false, {ch_}});
    out.push_back({prefix + ".running_var", &running_var, nullptr, false, {ch_}});
  }

  std::size_t channels() const { return ch_; }
  std::size_t param_count() const { return 2 * ch_; }
  void drop_cache() { xhat_ = Tensor<T>(); }

  std::vector<T> gamma, beta, ggrad, bgrad, running_mean, running_var;
  long degenerate_batches = 0;

 private:
  std::size_t ch_ = 0;
  std::vector<double> mean_, invstd_;
  Tensor<T> xhat_;
};

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------
template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const T v = x.values[i];
      // NaN propagates so divergence stays visible downstream
      y.values[i] = v > T(0) ? v : (v == v ? T(0) : v);
    }
    if (mode == Mode::kTrain) {
      mask_.assign(x.numel(), 0);
      for (std::size_t i = 0; i < x.numel(); ++i)
        mask_[i] = x.values[i] > T(0);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (mask_.size() != gy.numel())
      throw shape_error("relu backward without cached forward");
    Tensor<T> gx(gy.shape);
    for (std::size_t i = 0; i < gy.numel(); ++i)
      gx.values[i] = mask_[i] ? gy.values[i] : T(0);
    return gx;
  }

  void drop_cache() { mask_.clear(); }

 private:
  std::vector<unsigned char> mask_;
};

// ---------------------------------------------------------------------------
// MaxPool2d (used by the network stem). Padding cells never win the max.
// ---------------------------------------------------------------------------
template <typename T>
class MaxPool2d {
 public:
  MaxPool2d() = default;
  MaxPool2d(std::size_t k, std::size_t stride, std::size_t pad)
      : k_(k), stride_(stride), pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    const std::size_t n = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = conv_out_dim(h, k_, stride_, pad_);
    const std::size_t ow = conv_out_dim(w, k_, stride_, pad_);
    Tensor<T> y({n, ch, oh, ow});
    const bool train = mode == Mode::kTrain;
    if (train) {
      argmax_.assign(y.numel(), 0);
      in_shape_ = x.shape;
    }
    const std::ptrdiff_t P = static_cast<std::ptrdiff_t>(pad_);
    parallel_for(n * ch, [&](std::size_t b, std::size_t e) {
      for (std::size_t idx = b; idx < e; ++idx) {
        const T* xp = x.values.data() + idx * h * w;
        T* yp = y.values.data() + idx * oh * ow;
        for (std::size_t r = 0; r < oh; ++r) {
          for (std::size_t c = 0; c < ow; ++c) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_i = 0;
            for (std::size_t kh = 0; kh < k_; ++kh) {
              const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(r * stride_ + kh) - P;
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kw = 0; kw < k_; ++kw) {
                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(c * stride_ + kw) - P;
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                const std::size_t fi = static_cast<std::size_t>(ih) * w +
                                       static_cast<std::size_t>(iw);
                if (xp[fi] > best) {
                  best = xp[fi];
                  best_i = fi;
                }
              }
            }
            yp[r * ow + c] = best;
            if (train) argmax_[idx * oh * ow + r * ow + c] = best_i;
          }
        }
      }
    });
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (argmax_.size() != gy.numel())
      throw shape_error("max_pool backward without cached forward");
    Tensor<T> gx(in_shape_);
    const std::size_t planes = gy.dim(0) * gy.dim(1);
    const std::size_t ohw = gy.dim(2) * gy.dim(3);
    const std::size_t hw = in_shape_[2] * in_shape_[3];
    for (std::size_t p = 0; p < planes; ++p) {
      const T* gp = gy.values.data() + p * ohw;
      T* op = gx.values.data() + p * hw;
      for (std::size_t i = 0; i < ohw; ++i) op[argmax_[p * ohw + i]] += gp[i];
    }
    return gx;
  }

  std::size_t kernel() const { return k_; }
  void drop_cache() { argmax_.clear(); }

 private:
  std::size_t k_ = 3, stride_ = 2, pad_ = 1;
  std::vector<std::size_t> argmax_;
  std::vector<std::size_t> in_shape_;
};

// ---------------------------------------------------------------------------
// GlobalAvgPool: [N,C,H,W] -> [N,C]
// ---------------------------------------------------------------------------
template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.ndim() != 4) throw shape_error("global_avg_pool: expected 4-d input");
    const std::size_t n = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor<T> y({n, ch});
    for (std::size_t i = 0; i < n * ch; ++i) {
      const T* xp = x.values.data() + i * hw;
      double s = 0.0;
      for (std::size_t j = 0; j < hw; ++j) s += xp[j];
      y.values[i] = static_cast<T>(s / static_cast<double>(hw));
    }
    if (mode == Mode::kTrain) in_shape_ = x.shape;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (in_shape_.size() != 4)
      throw shape_error("global_avg_pool backward without cached forward");
    const std::size_t hw = in_shape_[2] * in_shape_[3];
    Tensor<T> gx(in_shape_);
    const T inv = static_cast<T>(1.0 / static_cast<double>(hw));
    for (std::size_t i = 0; i < gy.numel(); ++i) {
      T* op = gx.values.data() + i * hw;
      const T g = gy.values[i] * inv;
      for (std::size_t j = 0; j < hw; ++j) op[j] = g;
    }
    return gx;
  }

  void drop_cache() { in_shape_.clear(); }

 private:
  std::vector<std::size_t> in_shape_;
};

// ---------------------------------------------------------------------------
// Linear: y = x * W^T + b, x:[N,D], W:[K,D]
// ---------------------------------------------------------------------------
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_dim, std::size_t out_dim) : in_(in_dim), out_(out_dim) {
    weight.assign(out_ * in_, T(0));
    bias.assign(out_, T(0));
    wgrad.assign(weight.size(), T(0));
    bgrad.assign(out_, T(0));
  }

  void init(Rng& rng) { he_normal_init(weight, in_, rng); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.ndim() != 2 || x.dim(1) != in_)
      throw shape_error("fully_connected: expected [N," + std::to_string(in_) +
                        "], got " + x.shape_str());
    const std::size_t n = x.dim(0);
    Tensor<T> y({n, out_});
    for (std::size_t ni = 0; ni < n; ++ni) {
      const T* xp = x.values.data() + ni * in_;
      for (std::size_t k = 0; k < out_; ++k) {
        const T* wp = weight.data() + k * in_;
        double s = static_cast<double>(bias[k]);
        for (std::size_t d = 0; d < in_; ++d) s += static_cast<double>(wp[d]) * xp[d];
        y.values[ni * out_ + k] = static_cast<T>(s);
      }
    }
    if (mode == Mode::kTrain) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (input_.numel() == 0)
      throw shape_error("fully_connected backward without cached forward");
    const std::size_t n = input_.dim(0);
    Tensor<T> gx({n, in_});
    for (std::size_t ni = 0; ni < n; ++ni) {
      const T* gp = gy.values.data() + ni * out_;
      const T* xp = input_.values.data() + ni * in_;
      T* op = gx.values.data() + ni * in_;
      for (std::size_t k = 0; k < out_; ++k) {
        const T g = gp[k];
        const T* wp = weight.data() + k * in_;
        T* wg = wgrad.data() + k * in_;
        for (std::size_t d = 0; d < in_; ++d) {
          op[d] += g * wp[d];
          wg[d] += g * xp[d];
        }
        bgrad[k] += g;
      }
    }
    return gx;
  }

  void zero_grad() {
    std::fill(wgrad.begin(), wgrad.end(), T(0));
    std::fill(bgrad.begin(), bgrad.end(), T(0));
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &weight, &wgrad, true, {out_, in_}});
    out.push_back({prefix + ".bias", &bias, &bgrad, true, {out_}});
  }

  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  std::size_t param_count() const { return weight.size() + bias.size(); }
  void drop_cache() { input_ = Tensor<T>(); }

  std::vector<T> weight, bias, wgrad, bgrad;

 private:
  std::size_t in_ = 0, out_ = 0;
  Tensor<T> input_;
};

}  // namespace ser::nn
