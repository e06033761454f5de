#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "ser/data.hpp"
#include "ser/features_io.hpp"
#include "ser/losses.hpp"
#include "ser/resnet.hpp"

namespace ser::train {

enum class LossKind { kSoftmaxCe, kFocal };
enum class OptimizerKind { kSgdMomentum, kAdam };

// Softmax cross-entropy is computed as the gamma = 0 case of the focal
// objective; the two coincide exactly, so the loss switch is the only
// difference between ablation arms.
struct TrainConfig {
  LossKind loss = LossKind::kFocal;
  double gamma = 2.0;
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 0;
  double width_scale = 1.0;
  dsp::FeatureKind feature = dsp::FeatureKind::kMfcc;
  bool standardize = true;

  double effective_gamma() const {
    return loss == LossKind::kSoftmaxCe ? 0.0 : gamma;
  }
  void validate() const;  // throws usage_error
};

// Scalar standardization fitted on the training split.
struct Standardizer {
  double mean = 0.0;
  double stddev = 1.0;
  float apply(float v) const {
    return static_cast<float>((v - mean) / stddev);
  }
};

Standardizer fit_standardizer(const io::Dataset& ds,
                              const std::vector<std::size_t>& idx);

struct TrainResult {
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

// Mini-batch training with seeded shuffling; deterministic for a fixed
// config. Throws numeric_error naming epoch/batch if the loss diverges.
TrainResult train(model::ResNet18<float>& net, const io::Dataset& ds,
                  const std::vector<std::size_t>& train_idx, const TrainConfig& cfg,
                  const Standardizer& stdz);

struct Metrics {
  double overall_accuracy = 0.0;  // percent
  double class_accuracy = 0.0;    // percent, mean of present-class recalls
  std::array<std::array<double, 4>, 4> confusion{};  // row-normalized percent
  std::array<std::array<std::size_t, 4>, 4> counts{};
  std::array<std::size_t, 4> support{};
  std::array<bool, 4> present{};
  bool any_absent = false;
};

Metrics metrics_from_predictions(const std::vector<int>& labels,
                                 const std::vector<int>& predictions);

std::vector<int> predict(model::ResNet18<float>& net, const io::Dataset& ds,
                         const std::vector<std::size_t>& idx,
                         const Standardizer& stdz, int batch_size = 32);

Metrics evaluate(model::ResNet18<float>& net, const io::Dataset& ds,
                 const std::vector<std::size_t>& idx, const Standardizer& stdz);

struct FoldOutcome {
  int fold = 0;
  Metrics metrics;
  std::vector<double> epoch_loss;
};

struct CvResult {
  std::vector<FoldOutcome> folds;
  double mean_overall = 0.0, std_overall = 0.0;
  double mean_class = 0.0, std_class = 0.0;
};

CvResult cross_validate(const io::Dataset& ds, const data::FoldAssignment& folds,
                        const TrainConfig& cfg);

// Test seam: identical fold algebra with an injected predictor.
using PredictorFn = std::function<std::vector<int>(
    const std::vector<std::size_t>& train_idx, const std::vector<std::size_t>& test_idx)>;
CvResult cross_validate_with(const io::Dataset& ds, const data::FoldAssignment& folds,
                             const PredictorFn& predictor);

struct AblationRun {
  std::uint64_t seed = 0;
  Metrics metrics;
  std::vector<double> epoch_loss;
};

struct AblationCell {
  dsp::FeatureKind feature = dsp::FeatureKind::kMfcc;
  LossKind loss = LossKind::kSoftmaxCe;
  double gamma = 0.0;
  std::vector<AblationRun> runs;
  double median_overall = 0.0;
  double median_class_accuracy = 0.0;
};

struct AblationReport {
  std::vector<AblationCell> cells;
  int epochs = 0;
  int holdout_fold = 0;
  std::vector<std::uint64_t> seeds;
};

// Loss-function grid with shared splits, inits, and batch orders per seed;
// the loss switch is the only varying factor inside a (feature, seed) pair.
AblationReport run_ablation(const std::map<dsp::FeatureKind, io::Dataset>& datasets,
                            const data::FoldAssignment& folds, const TrainConfig& base,
                            const std::vector<std::uint64_t>& seeds, int holdout_fold);

double median(std::vector<double> v);

const char* loss_name(LossKind k);
const char* feature_name(dsp::FeatureKind k);

}  // namespace ser::train
