#include <doctest.h>

#include <cmath>

#include "ser/common.hpp"
#include "ser/grad_check.hpp"
#include "ser/losses.hpp"

using namespace ser;

TEST_CASE("softmax basics") {
  const auto uniform = loss::softmax({0.0, 0.0, 0.0, 0.0});
  for (double p : uniform.probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));

  // shift invariance
  const auto a = loss::softmax({0.3, -1.2});
  const auto b = loss::softmax({0.3 + 55.0, -1.2 + 55.0});
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));

  // direct arithmetic oracle
  const auto p = loss::softmax({1.0, 2.0, 3.0});
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-12));

  // stable under large magnitudes
  const auto big = loss::softmax({1000.0, 999.0});
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] + big[1] == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(loss::softmax({1.0, std::nan("")}), numeric_error);
  CHECK_THROWS_AS(loss::softmax({std::numeric_limits<double>::infinity()}),
                  numeric_error);
}

TEST_CASE("probabilities sum to one") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(4);
    for (auto& v : z) v = rng.uniform(-30.0, 30.0);
    const auto p = loss::softmax(z);
    double s = 0.0;
    for (double v : p.probs) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      s += v;
    }
    CHECK(std::fabs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("cross entropy values") {
  loss::ProbVector p;
  p.probs = {1.0, 0.0, 0.0, 0.0};
  CHECK(loss::cross_entropy(p, 0) == doctest::Approx(0.0));

  p.probs = {0.8, 0.1, 0.05, 0.05};
  CHECK(loss::cross_entropy(p, 0) == doctest::Approx(0.22314).epsilon(1e-4));
  CHECK(loss::cross_entropy(p, 0) == doctest::Approx(-std::log(0.8)).epsilon(1e-12));

  p.probs = {0.5, 0.5};
  CHECK(loss::cross_entropy(p, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  CHECK_THROWS_AS(loss::cross_entropy(p, 2), std::out_of_range);
}

TEST_CASE("focal loss worked values") {
  loss::ProbVector p;
  p.probs = {0.8, 0.2};

  // p_t = 0.8, gamma = 2: 96% lower than cross-entropy
  const double fl = loss::focal_loss(p, 0, {2.0});
  const double ce = loss::cross_entropy(p, 0);
  CHECK(fl == doctest::Approx(0.0089257).epsilon(1e-4));
  CHECK(fl / ce == doctest::Approx(0.04).epsilon(1e-9));

  // p_t = 0.1, gamma = 2: loss stays close to cross-entropy scale
  loss::ProbVector hard;
  hard.probs = {0.1, 0.9};
  const double fl_hard = loss::focal_loss(hard, 0, {2.0});
  CHECK(fl_hard == doctest::Approx(0.81 * 2.302585093).epsilon(1e-9));
  CHECK(fl_hard == doctest::Approx(1.86509).epsilon(1e-4));

  CHECK_THROWS_AS(loss::focal_loss(p, 5, {2.0}), std::out_of_range);
  CHECK_THROWS_AS(loss::focal_loss(p, 0, {-1.0}), usage_error);
}

TEST_CASE("gamma zero reduces focal loss to cross entropy exactly") {
  Rng rng(22);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> z(4);
    for (auto& v : z) v = rng.uniform(-10.0, 10.0);
    const auto p = loss::softmax(z);
    const auto label = static_cast<std::size_t>(rng.uniform_int(4));
    const double diff =
        std::fabs(loss::focal_loss(p, label, {0.0}) - loss::cross_entropy(p, label));
    CHECK(diff < 1e-12);
  }
}

TEST_CASE("focal loss ordering properties") {
  Rng rng(23);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> z(4);
    for (auto& v : z) v = rng.uniform(-6.0, 6.0);
    const auto p = loss::softmax(z);
    const auto label = static_cast<std::size_t>(rng.uniform_int(4));
    const double pt = p[label];
    const double ce = loss::cross_entropy(p, label);

    // dominance: 0 <= FL <= CE for gamma >= 0
    double prev = ce;
    for (double gamma : {0.5, 1.0, 2.0, 5.0}) {
      const double fl = loss::focal_loss(p, label, {gamma});
      CHECK(fl >= 0.0);
      CHECK(fl <= ce + 1e-15);
      // strictly decreasing in gamma for pt in (0,1)
      if (pt > 1e-6 && pt < 1.0 - 1e-6) CHECK(fl < prev);
      prev = fl;
    }

    // suppression ratio is exactly (1 - pt)^gamma
    const double ratio = loss::focal_loss(p, label, {2.0}) / ce;
    CHECK(std::fabs(ratio - (1.0 - pt) * (1.0 - pt)) < 1e-9);
  }
}

TEST_CASE("focal/ce ratio decreases in pt for gamma > 0") {
  const double gamma = 2.0;
  double prev_ratio = 1.0 + 1e-9;
  for (double pt = 0.05; pt < 0.999; pt += 0.02) {
    loss::ProbVector p;
    p.probs = {pt, 1.0 - pt};
    const double ratio =
        loss::focal_loss(p, 0, {gamma}) / loss::cross_entropy(p, 0);
    CHECK(ratio < prev_ratio);
    prev_ratio = ratio;
  }
}

TEST_CASE("focal backward: gamma zero equals softmax-ce gradient") {
  Rng rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> z(4);
    for (auto& v : z) v = rng.uniform(-5.0, 5.0);
    const auto label = static_cast<std::size_t>(rng.uniform_int(4));
    const auto g = loss::focal_loss_backward(z, label, {0.0});
    const auto p = loss::softmax(z);
    for (std::size_t j = 0; j < 4; ++j) {
      const double expected = p[j] - (j == label ? 1.0 : 0.0);
      CHECK(g[j] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("focal backward vanishes as pt -> 1") {
  std::vector<double> z = {40.0, 0.0, 0.0, 0.0};  // saturated correct logit
  const auto g = loss::focal_loss_backward(z, 0, {2.0});
  for (double v : g) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("focal backward matches finite differences") {
  Rng rng(25);
  for (double gamma : {0.5, 1.0, 2.0, 5.0}) {
    for (int trial = 0; trial < 8; ++trial) {
      nn::Tensor<double> z({4});
      for (auto& v : z.values) v = rng.uniform(-4.0, 4.0);
      const auto label = static_cast<std::size_t>(rng.uniform_int(4));

      const nn::ScalarFn f = [&](nn::Tensor<double>& in, bool want_grad) {
        if (want_grad) {
          in.grad = loss::focal_loss_backward(in.values, label, {gamma});
        }
        return loss::focal_loss(loss::softmax(in.values), label, {gamma});
      };
      const auto res = nn::grad_check(f, z, 1e-5);
      CHECK(res.max_rel_err < 1e-6);
    }
  }
}

TEST_CASE("batch focal loss reduces by mean and scales gradients") {
  nn::Tensor<float> logits({2, 4});
  logits.values = {2.0f, 0.0f, -1.0f, 0.5f, -0.5f, 1.5f, 0.0f, 0.0f};
  const std::vector<int> labels = {0, 1};

  nn::Tensor<float> grad;
  const double mean_loss = loss::focal_batch(logits, labels, 2.0, &grad);

  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    std::vector<double> z(4);
    for (int j = 0; j < 4; ++j) z[static_cast<std::size_t>(j)] = logits.values[i * 4 + j];
    expect += loss::focal_loss(loss::softmax(z),
                               static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]),
                               {2.0});
  }
  expect /= 2.0;
  CHECK(mean_loss == doctest::Approx(expect).epsilon(1e-9));

  // per-sample gradient is the single-sample gradient divided by N
  std::vector<double> z0 = {2.0, 0.0, -1.0, 0.5};
  const auto g0 = loss::focal_loss_backward(z0, 0, {2.0});
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(grad.values[j] == doctest::Approx(g0[j] / 2.0).epsilon(1e-6));
}
