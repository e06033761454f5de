#include <doctest.h>

#include <cmath>

#include "ser/grad_check.hpp"
#include "ser/nn.hpp"

using namespace ser;
using nn::Mode;
using nn::Tensor;

namespace {

Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng,
                             double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

// scalar projection loss sum(y .* r) so every output cell matters
std::vector<double> random_proj(std::size_t n, Rng& rng) {
  std::vector<double> r(n);
  for (auto& v : r) v = rng.uniform(-1.0, 1.0);
  return r;
}

double dot_loss(const Tensor<double>& y, const std::vector<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += y.values[i] * r[i];
  return s;
}

Tensor<double> proj_grad(const Tensor<double>& y, const std::vector<double>& r) {
  Tensor<double> g(y.shape);
  g.values.assign(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(y.numel()));
  return g;
}

}  // namespace

TEST_CASE("conv identity kernel") {
  nn::Conv2d<double> conv(1, 1, 1, 1, 0, false);
  conv.weight[0] = 1.0;
  Rng rng(1);
  auto x = random_tensor({2, 1, 3, 4}, rng);
  const auto y = conv.forward(x, Mode::kEval);
  REQUIRE(y.shape == x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.values[i] == x.values[i]);
}

TEST_CASE("conv all-ones kernel counts overlaps") {
  nn::Conv2d<double> conv(1, 1, 3, 1, 1, false);
  std::fill(conv.weight.begin(), conv.weight.end(), 1.0);
  Tensor<double> x({1, 1, 4, 4});
  std::fill(x.values.begin(), x.values.end(), 1.0);
  const auto y = conv.forward(x, Mode::kEval);
  REQUIRE(y.shape == x.shape);
  // corners overlap 4 ones, edges 6, interior 9
  CHECK(y.at4(0, 0, 0, 0) == 4.0);
  CHECK(y.at4(0, 0, 0, 3) == 4.0);
  CHECK(y.at4(0, 0, 3, 0) == 4.0);
  CHECK(y.at4(0, 0, 3, 3) == 4.0);
  CHECK(y.at4(0, 0, 0, 1) == 6.0);
  CHECK(y.at4(0, 0, 2, 0) == 6.0);
  CHECK(y.at4(0, 0, 1, 1) == 9.0);
  CHECK(y.at4(0, 0, 2, 2) == 9.0);
}

TEST_CASE("conv output shape formula") {
  CHECK(nn::conv_out_dim(128, 7, 2, 3) == 64);
  CHECK(nn::conv_out_dim(259, 7, 2, 3) == 130);
  CHECK(nn::conv_out_dim(64, 3, 2, 1) == 32);
  CHECK(nn::conv_out_dim(5, 3, 1, 0) == 3);
  CHECK_THROWS_AS(nn::conv_out_dim(2, 5, 1, 0), shape_error);

  nn::Conv2d<double> conv(2, 3, 3, 2, 1, true);
  Rng rng(2);
  auto x = random_tensor({1, 2, 9, 11}, rng);
  const auto y = conv.forward(x, Mode::kEval);
  CHECK(y.shape == std::vector<std::size_t>{1, 3, 5, 6});

  auto bad = random_tensor({1, 3, 9, 11}, rng);  // wrong channel count
  CHECK_THROWS_AS(conv.forward(bad, Mode::kEval), shape_error);
}

TEST_CASE("conv linearity in its input") {
  Rng rng(3);
  nn::Conv2d<double> conv(2, 3, 3, 1, 1, false);
  conv.init(rng);
  auto x = random_tensor({1, 2, 6, 5}, rng);
  auto y = random_tensor({1, 2, 6, 5}, rng);
  const double a = 1.7, b = -0.4;

  Tensor<double> mix(x.shape);
  for (std::size_t i = 0; i < mix.numel(); ++i)
    mix.values[i] = a * x.values[i] + b * y.values[i];

  const auto out_mix = conv.forward(mix, Mode::kEval);
  const auto out_x = conv.forward(x, Mode::kEval);
  const auto out_y = conv.forward(y, Mode::kEval);
  for (std::size_t i = 0; i < out_mix.numel(); ++i)
    CHECK(out_mix.values[i] ==
          doctest::Approx(a * out_x.values[i] + b * out_y.values[i]).epsilon(1e-9));
}

TEST_CASE("conv gradients match finite differences") {
  Rng rng(4);
  const std::vector<double> r = random_proj(4 * 5 * 5, rng);

  SUBCASE("input gradient") {
    nn::Conv2d<double> conv(2, 4, 3, 1, 1, true);
    conv.init(rng);
    for (auto& b : conv.bias) b = rng.uniform(-0.5, 0.5);
    auto x = random_tensor({1, 2, 5, 5}, rng);
    const nn::ScalarFn f = [&](Tensor<double>& in, bool want_grad) {
      nn::Conv2d<double> c = conv;
      const auto y = c.forward(in, Mode::kTrain);
      if (want_grad) {
        const auto gx = c.backward(proj_grad(y, r));
        in.grad = gx.values;
      }
      return dot_loss(y, r);
    };
    const auto res = nn::grad_check(f, x, 1e-5);
    CHECK(res.max_rel_err < 1e-5);
  }

  SUBCASE("weight and bias gradients") {
    nn::Conv2d<double> conv(2, 4, 3, 2, 1, true);
    conv.init(rng);
    auto input = random_tensor({2, 2, 5, 5}, rng);
    const std::vector<double> r2 = random_proj(2 * 4 * 3 * 3, rng);

    Tensor<double> packed({conv.weight.size() + conv.bias.size()});
    std::copy(conv.weight.begin(), conv.weight.end(), packed.values.begin());
    std::copy(conv.bias.begin(), conv.bias.end(),
              packed.values.begin() + static_cast<std::ptrdiff_t>(conv.weight.size()));

    const nn::ScalarFn f = [&](Tensor<double>& w, bool want_grad) {
      nn::Conv2d<double> c = conv;
      std::copy(w.values.begin(),
                w.values.begin() + static_cast<std::ptrdiff_t>(c.weight.size()),
                c.weight.begin());
      std::copy(w.values.begin() + static_cast<std::ptrdiff_t>(c.weight.size()),
                w.values.end(), c.bias.begin());
      auto in = input;
      const auto y = c.forward(in, Mode::kTrain);
      if (want_grad) {
        c.zero_grad();
        c.backward(proj_grad(y, r2));
        w.alloc_grad();
        std::copy(c.wgrad.begin(), c.wgrad.end(), w.grad.begin());
        std::copy(c.bgrad.begin(), c.bgrad.end(),
                  w.grad.begin() + static_cast<std::ptrdiff_t>(c.wgrad.size()));
      }
      return dot_loss(y, r2);
    };
    const auto res = nn::grad_check(f, packed, 1e-5);
    CHECK(res.max_rel_err < 1e-5);
  }
}

TEST_CASE("batch norm fixed point and scale annihilation") {
  Rng rng(5);
  const std::size_t n = 8, c = 3, h = 4, w = 4;

  // construct a batch that is exactly zero-mean unit-variance per channel
  Tensor<double> x({n, c, h, w});
  for (std::size_t ci = 0; ci < c; ++ci) {
    std::vector<double> vals(n * h * w);
    for (auto& v : vals) v = rng.normal();
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    const double inv = 1.0 / std::sqrt(var);
    std::size_t j = 0;
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t i = 0; i < h * w; ++i)
        x.values[((ni * c + ci) * h * w) + i] = (vals[j++] - mean) * inv;
  }

  nn::BatchNorm2d<double> bn(c);
  const auto y = bn.forward(x, Mode::kTrain);
  // unit variance is scaled by 1/sqrt(1 + eps), a 5e-6 shrink
  const double shrink = 1.0 / std::sqrt(1.0 + nn::BatchNorm2d<double>::kEps);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(y.values[i] == doctest::Approx(x.values[i] * shrink).epsilon(1e-12));
    CHECK(y.values[i] == doctest::Approx(x.values[i]).epsilon(1e-5));
  }

  nn::BatchNorm2d<double> bn0(c);
  std::fill(bn0.gamma.begin(), bn0.gamma.end(), 0.0);
  std::fill(bn0.beta.begin(), bn0.beta.end(), 2.5);
  const auto y0 = bn0.forward(x, Mode::kTrain);
  for (double v : y0.values) CHECK(v == 2.5);
}

TEST_CASE("batch norm TRAIN moments match a brute-force recomputation") {
  Rng rng(6);
  nn::BatchNorm2d<double> bn(4);
  auto x = random_tensor({6, 4, 3, 5}, rng, -3.0, 7.0);
  // pre-affine output is x-hat: gamma 1, beta 0 are the defaults
  const auto y = bn.forward(x, Mode::kTrain);

  const std::size_t hw = 15, n = 6, c = 4;
  for (std::size_t ci = 0; ci < c; ++ci) {
    double mean = 0.0, var = 0.0;
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t i = 0; i < hw; ++i) mean += y.values[(ni * c + ci) * hw + i];
    mean /= static_cast<double>(n * hw);
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = y.values[(ni * c + ci) * hw + i] - mean;
        var += d * d;
      }
    var /= static_cast<double>(n * hw);
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("batch norm EVAL is batch-size independent") {
  Rng rng(7);
  nn::BatchNorm2d<double> bn(2);
  // push running stats away from the init
  for (int i = 0; i < 10; ++i) {
    auto warm = random_tensor({4, 2, 3, 3}, rng, -2.0, 5.0);
    bn.forward(warm, Mode::kTrain);
  }

  auto batch = random_tensor({5, 2, 3, 3}, rng);
  const auto y_all = bn.forward(batch, Mode::kEval);

  // evaluate the third sample alone
  Tensor<double> one({1, 2, 3, 3});
  std::copy(batch.values.begin() + 2 * 18, batch.values.begin() + 3 * 18,
            one.values.begin());
  const auto y_one = bn.forward(one, Mode::kEval);
  for (std::size_t i = 0; i < 18; ++i)
    CHECK(y_one.values[i] == doctest::Approx(y_all.values[2 * 18 + i]).epsilon(1e-12));
}

TEST_CASE("batch norm flags degenerate batches and clamps by eps") {
  nn::BatchNorm2d<double> bn(1);
  Tensor<double> x({1, 1, 1, 1});
  x.values[0] = 3.0;
  CHECK(bn.degenerate_batches == 0);
  const auto y = bn.forward(x, Mode::kTrain);
  CHECK(bn.degenerate_batches == 1);
  CHECK(std::isfinite(y.values[0]));
  CHECK(y.values[0] == doctest::Approx(0.0));  // (x - mean) == 0
}

TEST_CASE("batch norm gradient matches finite differences") {
  Rng rng(8);
  nn::BatchNorm2d<double> proto(3);
  for (auto& g : proto.gamma) g = rng.uniform(0.5, 1.5);
  for (auto& b : proto.beta) b = rng.uniform(-0.5, 0.5);
  auto x = random_tensor({4, 3, 2, 3}, rng, -2.0, 2.0);
  const std::vector<double> r = random_proj(x.numel(), rng);

  SUBCASE("input gradient through batch statistics") {
    const nn::ScalarFn f = [&](Tensor<double>& in, bool want_grad) {
      nn::BatchNorm2d<double> bn = proto;
      const auto y = bn.forward(in, Mode::kTrain);
      if (want_grad) {
        const auto gx = bn.backward(proj_grad(y, r));
        in.grad = gx.values;
      }
      return dot_loss(y, r);
    };
    const auto res = nn::grad_check(f, x, 1e-5);
    CHECK(res.max_rel_err < 1e-5);
  }

  SUBCASE("gamma and beta gradients") {
    Tensor<double> packed({6});
    std::copy(proto.gamma.begin(), proto.gamma.end(), packed.values.begin());
    std::copy(proto.beta.begin(), proto.beta.end(), packed.values.begin() + 3);
    const nn::ScalarFn f = [&](Tensor<double>& p, bool want_grad) {
      nn::BatchNorm2d<double> bn = proto;
      std::copy(p.values.begin(), p.values.begin() + 3, bn.gamma.begin());
      std::copy(p.values.begin() + 3, p.values.end(), bn.beta.begin());
      auto in = x;
      const auto y = bn.forward(in, Mode::kTrain);
      if (want_grad) {
        bn.zero_grad();
        bn.backward(proj_grad(y, r));
        p.alloc_grad();
        std::copy(bn.ggrad.begin(), bn.ggrad.end(), p.grad.begin());
        std::copy(bn.bgrad.begin(), bn.bgrad.end(), p.grad.begin() + 3);
      }
      return dot_loss(y, r);
    };
    const auto res = nn::grad_check(f, packed, 1e-5);
    CHECK(res.max_rel_err < 1e-5);
  }
}

TEST_CASE("relu definition and gradient mask") {
  nn::ReLU<double> relu;
  Tensor<double> x({1, 3}, {-1.0, 0.0, 2.0});
  const auto y = relu.forward(x, Mode::kTrain);
  CHECK(y.values == std::vector<double>{0.0, 0.0, 2.0});

  Tensor<double> gy({1, 3}, {5.0, 7.0, 9.0});
  const auto gx = relu.backward(gy);
  CHECK(gx.values == std::vector<double>{0.0, 0.0, 9.0});

  Tensor<double> neg({2, 2}, {-3.0, -0.1, -7.0, -0.0});
  const auto yneg = relu.forward(neg, Mode::kEval);
  for (double v : yneg.values) CHECK(v == 0.0);

  // finite differences away from the kink
  Rng rng(9);
  Tensor<double> xr({3, 4});
  for (auto& v : xr.values) {
    v = rng.uniform(-1.0, 1.0);
    if (std::fabs(v) < 1e-2) v = 0.5;  // keep clear of the kink
  }
  const std::vector<double> r = random_proj(xr.numel(), rng);
  const nn::ScalarFn f = [&](Tensor<double>& in, bool want_grad) {
    nn::ReLU<double> layer;
    const auto out = layer.forward(in, Mode::kTrain);
    if (want_grad) in.grad = layer.backward(proj_grad(out, r)).values;
    return dot_loss(out, r);
  };
  const auto res = nn::grad_check(f, xr, 1e-5);
  CHECK(res.max_rel_err < 1e-8);
}

TEST_CASE("global average pool values and gradient") {
  nn::GlobalAvgPool<double> gap;
  Tensor<double> x({1, 2, 2, 2});
  std::fill(x.values.begin(), x.values.begin() + 4, 3.25);  // channel 0 constant
  x.values[4] = 1.0;
  x.values[5] = 2.0;
  x.values[6] = 3.0;
  x.values[7] = 4.0;
  const auto y = gap.forward(x, Mode::kTrain);
  REQUIRE(y.shape == std::vector<std::size_t>{1, 2});
  CHECK(y.values[0] == doctest::Approx(3.25));
  CHECK(y.values[1] == doctest::Approx(2.5));

  Tensor<double> gy({1, 2}, {1.0, 8.0});
  const auto gx = gap.backward(gy);
  for (std::size_t i = 0; i < 4; ++i) CHECK(gx.values[i] == doctest::Approx(0.25));
  for (std::size_t i = 4; i < 8; ++i) CHECK(gx.values[i] == doctest::Approx(2.0));

  Rng rng(10);
  auto xr = random_tensor({2, 3, 4, 5}, rng);
  const std::vector<double> r = random_proj(6, rng);
  const nn::ScalarFn f = [&](Tensor<double>& in, bool want_grad) {
    nn::GlobalAvgPool<double> layer;
    const auto out = layer.forward(in, Mode::kTrain);
    if (want_grad) in.grad = layer.backward(proj_grad(out, r)).values;
    return dot_loss(out, r);
  };
  CHECK(nn::grad_check(f, xr, 1e-5).max_rel_err < 1e-9);
}

TEST_CASE("fully connected contract and gradients") {
  nn::Linear<double> id(3, 3);
  id.weight = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  Tensor<double> x({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto y = id.forward(x, Mode::kEval);
  CHECK(y.values == x.values);

  nn::Linear<double> zb(3, 2);
  zb.bias = {0.5, -1.5};
  const auto yb = zb.forward(x, Mode::kEval);
  CHECK(yb.values == std::vector<double>{0.5, -1.5, 0.5, -1.5});

  Tensor<double> bad({2, 4});
  CHECK_THROWS_AS(zb.forward(bad, Mode::kEval), shape_error);

  Rng rng(11);
  nn::Linear<double> proto(5, 3);
  proto.init(rng);
  for (auto& b : proto.bias) b = rng.uniform(-0.5, 0.5);
  auto input = random_tensor({4, 5}, rng);
  const std::vector<double> r = random_proj(12, rng);

  Tensor<double> packed({proto.weight.size() + proto.bias.size()});
  std::copy(proto.weight.begin(), proto.weight.end(), packed.values.begin());
  std::copy(proto.bias.begin(), proto.bias.end(), packed.values.begin() + 15);
  const nn::ScalarFn f = [&](Tensor<double>& p, bool want_grad) {
    nn::Linear<double> fc = proto;
    std::copy(p.values.begin(), p.values.begin() + 15, fc.weight.begin());
    std::copy(p.values.begin() + 15, p.values.end(), fc.bias.begin());
    auto in = input;
    const auto out = fc.forward(in, Mode::kTrain);
    if (want_grad) {
      fc.zero_grad();
      fc.backward(proj_grad(out, r));
      p.alloc_grad();
      std::copy(fc.wgrad.begin(), fc.wgrad.end(), p.grad.begin());
      std::copy(fc.bgrad.begin(), fc.bgrad.end(), p.grad.begin() + 15);
    }
    return dot_loss(out, r);
  };
  CHECK(nn::grad_check(f, packed, 1e-5).max_rel_err < 1e-5);

  const nn::ScalarFn fx = [&](Tensor<double>& in, bool want_grad) {
    nn::Linear<double> fc = proto;
    const auto out = fc.forward(in, Mode::kTrain);
    if (want_grad) in.grad = fc.backward(proj_grad(out, r)).values;
    return dot_loss(out, r);
  };
  CHECK(nn::grad_check(fx, input, 1e-5).max_rel_err < 1e-5);
}

TEST_CASE("max pool forward and routed gradient") {
  nn::MaxPool2d<double> pool(3, 2, 1);
  Tensor<double> x({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) x.values[i] = static_cast<double>(i);
  const auto y = pool.forward(x, Mode::kTrain);
  REQUIRE(y.shape == std::vector<std::size_t>{1, 1, 2, 2});
  CHECK(y.values == std::vector<double>{5, 7, 13, 15});

  Tensor<double> gy({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto gx = pool.backward(gy);
  CHECK(gx.values[5] == 1.0);
  CHECK(gx.values[7] == 2.0);
  CHECK(gx.values[13] == 3.0);
  CHECK(gx.values[15] == 4.0);
  double total = 0.0;
  for (double v : gx.values) total += v;
  CHECK(total == 10.0);

  // finite differences on a tie-free input
  Rng rng(12);
  Tensor<double> xr({1, 2, 5, 5});
  for (std::size_t i = 0; i < xr.numel(); ++i)
    xr.values[i] = static_cast<double>(i) * 0.37 + rng.uniform(0.0, 0.1);
  const std::vector<double> r = random_proj(2 * 3 * 3, rng);
  const nn::ScalarFn f = [&](Tensor<double>& in, bool want_grad) {
    nn::MaxPool2d<double> layer(3, 2, 1);
    const auto out = layer.forward(in, Mode::kTrain);
    if (want_grad) in.grad = layer.backward(proj_grad(out, r)).values;
    return dot_loss(out, r);
  };
  CHECK(nn::grad_check(f, xr, 1e-5).max_rel_err < 1e-7);
}

TEST_CASE("grad_check on trivial functions") {
  SUBCASE("linear: f = sum(x)") {
    Tensor<double> x({4}, {0.3, -1.2, 2.0, 0.0});
    const nn::ScalarFn f = [](Tensor<double>& in, bool want_grad) {
      if (want_grad) {
        in.alloc_grad();
        std::fill(in.grad.begin(), in.grad.end(), 1.0);
      }
      double s = 0.0;
      for (double v : in.values) s += v;
      return s;
    };
    CHECK(nn::grad_check(f, x, 1e-5).max_rel_err < 1e-10);
  }

  SUBCASE("quadratic: f = sum(x^2) at [1,2]") {
    Tensor<double> x({2}, {1.0, 2.0});
    const nn::ScalarFn f = [](Tensor<double>& in, bool want_grad) {
      if (want_grad) {
        in.alloc_grad();
        for (std::size_t i = 0; i < in.numel(); ++i) in.grad[i] = 2.0 * in.values[i];
      }
      double s = 0.0;
      for (double v : in.values) s += v * v;
      return s;
    };
    const auto res = nn::grad_check(f, x, 1e-5);
    CHECK(res.max_rel_err < 1e-8);
  }

  SUBCASE("eps outside [1e-7, 1e-3] is rejected") {
    Tensor<double> x({1}, {1.0});
    const nn::ScalarFn f = [](Tensor<double>& in, bool want_grad) {
      if (want_grad) in.alloc_grad();
      return in.values[0];
    };
    CHECK_THROWS_AS(nn::grad_check(f, x, 1e-8), std::domain_error);
    CHECK_THROWS_AS(nn::grad_check(f, x, 1e-2), std::domain_error);
  }

  SUBCASE("non-finite values raise a numeric error") {
    Tensor<double> x({1}, {1.0});
    const nn::ScalarFn f = [](Tensor<double>& in, bool want_grad) {
      if (want_grad) in.alloc_grad();
      return std::log(in.values[0] - 2.0);  // NaN at x=1
    };
    CHECK_THROWS_AS(nn::grad_check(f, x, 1e-5), numeric_error);
  }
}

TEST_CASE("parallel_for propagates worker exceptions and stays usable") {
  set_worker_count(2);
  CHECK_THROWS_AS(parallel_for(100,
                               [](std::size_t b, std::size_t) {
                                 if (b > 0) throw io_error("worker chunk failed");
                               }),
                  io_error);
  CHECK_THROWS_AS(parallel_for(100,
                               [](std::size_t b, std::size_t) {
                                 if (b == 0) throw usage_error("main chunk failed");
                               }),
                  usage_error);

  // the pool keeps working after an exceptional job
  std::vector<int> hits(64, 0);
  parallel_for(64, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) hits[i] = 1;
  });
  int total = 0;
  for (int h : hits) total += h;
  CHECK(total == 64);
  set_worker_count(0);
}

TEST_CASE("backward without forward cache is an error") {
  nn::Conv2d<double> conv(1, 1, 3, 1, 1, false);
  Tensor<double> gy({1, 1, 4, 4});
  CHECK_THROWS_AS(conv.backward(gy), shape_error);

  nn::BatchNorm2d<double> bn(1);
  CHECK_THROWS_AS(bn.backward(gy), shape_error);

  // EVAL forward does not populate caches
  Rng rng(13);
  auto x = random_tensor({1, 1, 4, 4}, rng);
  conv.forward(x, Mode::kEval);
  CHECK_THROWS_AS(conv.backward(gy), shape_error);
}
