#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "ser/common.hpp"
#include "ser/nn.hpp"

namespace ser::model {

struct ResNet18Config {
  std::size_t stem_channels = 64;
  std::array<std::size_t, 4> stage_channels = {64, 128, 256, 512};
  std::array<std::size_t, 4> blocks_per_stage = {2, 2, 2, 2};
  std::size_t input_rows = 128;  // 128 spectrogram bands or 40 MFCCs
  std::size_t input_cols = 259;
  std::size_t n_classes = 4;
  double width_scale = 1.0;

  std::size_t scaled(std::size_t base) const {
    const auto c = static_cast<std::size_t>(
        std::llround(static_cast<double>(base) * width_scale));
    return c == 0 ? 1 : c;
  }
};

// Class order fixed across the project: [Neutral, Happiness, Sadness, Anger].
inline constexpr std::array<const char*, 4> kClassNames = {
    "Neutral", "Happiness", "Sadness", "Anger"};

struct LayerInfo {
  std::string name;
  std::string kind;
  std::vector<std::size_t> out_shape;  // C,H,W (batch omitted) or D
  std::size_t params = 0;
  bool weighted = false;  // counts toward the 18-layer depth
};

// y = ReLU(BN2(conv2(ReLU(BN1(conv1(x))))) + skip(x)); skip is the identity
// or a 1x1 stride-matched projection with its own BN when shape changes.
template <typename T>
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(std::size_t in_ch, std::size_t out_ch, std::size_t stride)
      : conv1(in_ch, out_ch, 3, stride, 1, false),
        bn1(out_ch),
        conv2(out_ch, out_ch, 3, 1, 1, false),
        bn2(out_ch),
        has_projection_(stride != 1 || in_ch != out_ch) {
    if (has_projection_) {
      proj = nn::Conv2d<T>(in_ch, out_ch, 1, stride, 0, false);
      proj_bn = nn::BatchNorm2d<T>(out_ch);
    }
  }

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
    if (has_projection_) proj.init(rng);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode) {
    nn::Tensor<T> f = conv1.forward(x, mode);
    f = bn1.forward(f, mode);
    f = relu1_.forward(f, mode);
    f = conv2.forward(f, mode);
    f = bn2.forward(f, mode);

    nn::Tensor<T> skip;
    if (has_projection_) {
      skip = proj.forward(x, mode);
      skip = proj_bn.forward(skip, mode);
    } else {
      skip = x;
    }
    if (!nn::same_shape(f, skip))
      throw shape_error("residual block: F(x) " + f.shape_str() +
                        " does not match skip " + skip.shape_str());
    for (std::size_t i = 0; i < f.numel(); ++i) f.values[i] += skip.values[i];
    return relu2_.forward(f, mode);
  }

  nn::Tensor<T> backward(const nn::Tensor<T>& gy) {
    nn::Tensor<T> g = relu2_.backward(gy);
    nn::Tensor<T> gm = bn2.backward(g);
    gm = conv2.backward(gm);
    gm = relu1_.backward(gm);
    gm = bn1.backward(gm);
    gm = conv1.backward(gm);
    if (has_projection_) {
      nn::Tensor<T> gs = proj_bn.backward(g);
      gs = proj.backward(gs);
      for (std::size_t i = 0; i < gm.numel(); ++i) gm.values[i] += gs.values[i];
    } else {
      for (std::size_t i = 0; i < gm.numel(); ++i) gm.values[i] += g.values[i];
    }
    return gm;
  }

  void zero_grad() {
    conv1.zero_grad();
    bn1.zero_grad();
    conv2.zero_grad();
    bn2.zero_grad();
    if (has_projection_) {
      proj.zero_grad();
      proj_bn.zero_grad();
    }
  }

  void collect_params(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) {
    conv1.collect_params(prefix + ".conv1", out);
    bn1.collect_params(prefix + ".bn1", out);
    conv2.collect_params(prefix + ".conv2", out);
    bn2.collect_params(prefix + ".bn2", out);
    if (has_projection_) {
      proj.collect_params(prefix + ".proj", out);
      proj_bn.collect_params(prefix + ".proj_bn", out);
    }
  }

  bool has_projection() const { return has_projection_; }

  nn::Conv2d<T> conv1;
  nn::BatchNorm2d<T> bn1;
  nn::Conv2d<T> conv2;
  nn::BatchNorm2d<T> bn2;
  nn::Conv2d<T> proj;
  nn::BatchNorm2d<T> proj_bn;

 private:
  nn::ReLU<T> relu1_, relu2_;
  bool has_projection_ = false;
};

template <typename T>
class ResNet18 {
 public:
  ResNet18() = default;

  explicit ResNet18(const ResNet18Config& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.width_scale <= 0.0)
      throw usage_error("resnet: width_scale must be positive");
    if (cfg.n_classes == 0) throw usage_error("resnet: n_classes must be positive");

    const std::size_t c0 = cfg.scaled(cfg.stem_channels);
    stem_conv = nn::Conv2d<T>(1, c0, 7, 2, 3, false);
    stem_bn = nn::BatchNorm2d<T>(c0);
    stem_pool = nn::MaxPool2d<T>(3, 2, 1);

    std::size_t in_ch = c0;
    for (std::size_t s = 0; s < 4; ++s) {
      const std::size_t out_ch = cfg.scaled(cfg.stage_channels[s]);
      for (std::size_t b = 0; b < cfg.blocks_per_stage[s]; ++b) {
        const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
        blocks.emplace_back(in_ch, out_ch, stride);
        in_ch = out_ch;
      }
    }
    fc = nn::Linear<T>(in_ch, cfg.n_classes);

    Rng rng(seed);
    stem_conv.init(rng);
    for (auto& blk : blocks) blk.init(rng);
    fc.init(rng);
  }

  const ResNet18Config& config() const { return cfg_; }

  // batch: [N, 1, input_rows, W] -> logits [N, n_classes]
  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode,
                        std::vector<LayerInfo>* trace = nullptr) {
    if (x.ndim() != 4 || x.dim(1) != 1)
      throw shape_error("model: expected [N,1,R,W] input, got " + x.shape_str());
    if (x.dim(2) != cfg_.input_rows)
      throw shape_error("model: input has " + std::to_string(x.dim(2)) +
                        " rows, model expects " + std::to_string(cfg_.input_rows));

    auto note = [&](const std::string& name, const std::string& kind,
                    const nn::Tensor<T>& t, std::size_t params, bool weighted) {
      if (trace)
        trace->push_back({name, kind,
                          std::vector<std::size_t>(t.shape.begin() + 1, t.shape.end()),
                          params, weighted});
    };

    nn::Tensor<T> h = stem_conv.forward(x, mode);
    note("stem.conv", "conv7x7/2", h, stem_conv.param_count(), true);
    h = stem_bn.forward(h, mode);
    note("stem.bn", "batchnorm", h, stem_bn.param_count(), false);
    h = stem_relu_.forward(h, mode);
    h = stem_pool.forward(h, mode);
    note("stem.pool", "maxpool3x3/2", h, 0, false);

    std::size_t bi = 0;
    for (std::size_t s = 0; s < 4; ++s) {
      for (std::size_t b = 0; b < cfg_.blocks_per_stage[s]; ++b, ++bi) {
        h = blocks[bi].forward(h, mode);
        if (trace) {
          auto& blk = blocks[bi];
          const std::size_t conv_params =
              blk.conv1.param_count() + blk.conv2.param_count();
          const std::size_t bn_params =
              blk.bn1.param_count() + blk.bn2.param_count();
          std::size_t proj_params = 0;
          if (blk.has_projection())
            proj_params = blk.proj.param_count() + blk.proj_bn.param_count();
          const std::string name =
              "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
          note(name + ".conv1", "conv3x3", h, blk.conv1.param_count(), true);
          note(name + ".conv2", "conv3x3", h, blk.conv2.param_count(), true);
          note(name + ".bn", "batchnorm x2", h, bn_params, false);
          if (blk.has_projection())
            note(name + ".proj", "conv1x1+bn", h, proj_params, false);
          (void)conv_params;
        }
      }
    }

    h = gap_.forward(h, mode);
    note("head.gap", "global_avg_pool", h, 0, false);
    h = fc.forward(h, mode);
    note("head.fc", "fully_connected", h, fc.param_count(), true);
    return h;
  }

  nn::Tensor<T> backward(const nn::Tensor<T>& dlogits) {
    nn::Tensor<T> g = fc.backward(dlogits);
    g = gap_.backward(g);
    for (std::size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(g);
    g = stem_pool.backward(g);
    g = stem_relu_.backward(g);
    g = stem_bn.backward(g);
    return stem_conv.backward(g);
  }

  void zero_grad() {
    stem_conv.zero_grad();
    stem_bn.zero_grad();
    for (auto& b : blocks) b.zero_grad();
    fc.zero_grad();
  }

  std::vector<nn::ParamRef<T>> parameters() {
    std::vector<nn::ParamRef<T>> out;
    stem_conv.collect_params("stem.conv", out);
    stem_bn.collect_params("stem.bn", out);
    std::size_t bi = 0;
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t b = 0; b < cfg_.blocks_per_stage[s]; ++b, ++bi)
        blocks[bi].collect_params(
            "stage" + std::to_string(s + 1) + ".block" + std::to_string(b), out);
    fc.collect_params("head.fc", out);
    return out;
  }

  std::size_t trainable_param_count() {
    std::size_t n = 0;
    for (const auto& p : parameters())
      if (p.trainable) n += p.values->size();
    return n;
  }

  // Weighted layers in the He-style depth count: convolutions on the main
  // paths plus the classifier; projection convs and BN do not count.
  std::size_t weighted_depth() const {
    return 1 + 2 * blocks.size() + 1;  // stem + per-block convs + fc
  }

  std::vector<LayerInfo> summary(std::size_t probe_cols = 0) {
    nn::Tensor<T> probe(
        {1, 1, cfg_.input_rows, probe_cols == 0 ? cfg_.input_cols : probe_cols});
    std::vector<LayerInfo> info;
    forward(probe, nn::Mode::kEval, &info);
    return info;
  }

  std::string format_summary();

  nn::Conv2d<T> stem_conv;
  nn::BatchNorm2d<T> stem_bn;
  nn::MaxPool2d<T> stem_pool;
  std::vector<BasicBlock<T>> blocks;
  nn::Linear<T> fc;

 private:
  ResNet18Config cfg_;
  nn::ReLU<T> stem_relu_;
  nn::GlobalAvgPool<T> gap_;
};

template <typename T>
std::string ResNet18<T>::format_summary() {
  std::vector<LayerInfo> info = summary();
  std::string out;
  out += "layer                     kind                output        params  depth\n";
  std::size_t total = 0, depth = 0;
  for (const auto& li : info) {
    std::string shape;
    for (std::size_t i = 0; i < li.out_shape.size(); ++i)
      shape += (i ? "x" : "") + std::to_string(li.out_shape[i]);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-25s %-19s %-13s %7zu  %s\n", li.name.c_str(),
                  li.kind.c_str(), shape.c_str(), li.params,
                  li.weighted ? "*" : "");
    out += buf;
    total += li.params;
    if (li.weighted) ++depth;
  }
  out += "total trainable params: " + std::to_string(total) + "\n";
  out += "weighted depth (* layers): " + std::to_string(depth) + "\n";
  return out;
}

template <typename T>
ResNet18<T> build_resnet18(const ResNet18Config& cfg, std::uint64_t seed) {
  return ResNet18<T>(cfg, seed);
}

}  // namespace ser::model
