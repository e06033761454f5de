#pragma once

#include <cstddef>
#include <vector>

#include "ser/tensor.hpp"

namespace ser::loss {

inline constexpr double kLogClamp = 1e-12;

// Normalized class probabilities; sums to 1 within 1e-9.
struct ProbVector {
  std::vector<double> probs;
  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
};

struct FocalConfig {
  double gamma = 2.0;  // >= 0
};

// Numerically stable softmax (max-shifted). Throws numeric_error on
// non-finite logits.
ProbVector softmax(const std::vector<double>& logits);

// -log(max(p_label, 1e-12)). Throws std::out_of_range for a bad label.
double cross_entropy(const ProbVector& p, std::size_t label);

// FL(p_t) = -(1 - p_t)^gamma * log(p_t). gamma < 0 throws usage_error.
double focal_loss(const ProbVector& p, std::size_t label, const FocalConfig& cfg);

// Analytic d focal_loss(softmax(logits), label) / d logits.
std::vector<double> focal_loss_backward(const std::vector<double>& logits,
                                        std::size_t label, const FocalConfig& cfg);

// Batch mean loss over logits [N,K] with per-logit gradient of the mean.
// loss_kind gamma = 0 reproduces softmax cross-entropy exactly.
template <typename T>
double focal_batch(const nn::Tensor<T>& logits, const std::vector<int>& labels,
                   double gamma, nn::Tensor<T>* grad_out) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw shape_error("focal_batch: label count mismatch");
  if (grad_out) *grad_out = nn::Tensor<T>({n, k});
  double total = 0.0;
  std::vector<double> z(k);
  FocalConfig cfg{gamma};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j)
      z[j] = static_cast<double>(logits.values[i * k + j]);
    const auto label = static_cast<std::size_t>(labels[i]);
    total += focal_loss(softmax(z), label, cfg);
    if (grad_out) {
      const std::vector<double> g = focal_loss_backward(z, label, cfg);
      for (std::size_t j = 0; j < k; ++j)
        grad_out->values[i * k + j] = static_cast<T>(g[j] / static_cast<double>(n));
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace ser::loss
