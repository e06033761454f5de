#include "ser/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ser/common.hpp"

namespace ser::loss {

ProbVector softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw shape_error("softmax: empty logits");
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw numeric_error("softmax: non-finite logit");
    mx = std::max(mx, z);
  }
  ProbVector p;
  p.probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p.probs[i] = std::exp(logits[i] - mx);
    sum += p.probs[i];
  }
  for (auto& v : p.probs) v /= sum;
  return p;
}

double cross_entropy(const ProbVector& p, std::size_t label) {
  if (label >= p.size()) throw std::out_of_range("cross_entropy: label out of range");
  return -std::log(std::max(p[label], kLogClamp));
}

double focal_loss(const ProbVector& p, std::size_t label, const FocalConfig& cfg) {
  if (label >= p.size()) throw std::out_of_range("focal_loss: label out of range");
  if (cfg.gamma < 0.0) throw usage_error("focal_loss: gamma must be >= 0");
  const double pt = p[label];
  return -std::pow(1.0 - pt, cfg.gamma) * std::log(std::max(pt, kLogClamp));
}

std::vector<double> focal_loss_backward(const std::vector<double>& logits,
                                        std::size_t label, const FocalConfig& cfg) {
  if (label >= logits.size())
    throw std::out_of_range("focal_loss_backward: label out of range");
  if (cfg.gamma < 0.0) throw usage_error("focal_loss_backward: gamma must be >= 0");

  const ProbVector p = softmax(logits);
  const double pt = p[label];
  const double u = 1.0 - pt;
  const double g = cfg.gamma;

  // dL/dz_j = a * (delta_{j,label} - p_j) with
  // a = d FL/d p_t * p_t = gamma*(1-p_t)^(gamma-1)*log(p_t)*p_t - (1-p_t)^gamma.
  double a;
  if (g == 0.0) {
    a = -1.0;  // plain softmax cross-entropy
  } else if (u <= 0.0) {
    a = 0.0;  // p_t == 1: both factors vanish
  } else {
    const double log_pt = std::log(std::max(pt, kLogClamp));
    a = g * std::pow(u, g - 1.0) * log_pt * pt - std::pow(u, g);
  }

  std::vector<double> grad(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double indicator = j == label ? 1.0 : 0.0;
    grad[j] = a * (indicator - p[j]);
    if (!std::isfinite(grad[j]))
      throw numeric_error("focal_loss_backward: non-finite gradient");
  }
  return grad;
}

}  // namespace ser::loss
