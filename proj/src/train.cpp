#include "ser/train.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace ser::train {

namespace {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::vector<nn::ParamRef<float>>& params) = 0;
};

class SgdMomentum : public Optimizer {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void step(std::vector<nn::ParamRef<float>>& params) override {
    if (velocity_.empty()) {
      for (const auto& p : params)
        velocity_.emplace_back(p.trainable ? p.values->size() : 0, 0.0f);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].trainable) continue;
      auto& v = velocity_[i];
      auto& x = *params[i].values;
      const auto& g = *params[i].grads;
      for (std::size_t j = 0; j < x.size(); ++j) {
        v[j] = static_cast<float>(momentum_ * v[j] + g[j]);
        x[j] -= static_cast<float>(lr_ * v[j]);
      }
    }
  }

 private:
  double lr_, momentum_;
  std::vector<std::vector<float>> velocity_;
};

class Adam : public Optimizer {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  void step(std::vector<nn::ParamRef<float>>& params) override {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.trainable ? p.values->size() : 0, 0.0);
        v_.emplace_back(p.trainable ? p.values->size() : 0, 0.0);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].trainable) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      auto& x = *params[i].values;
      const auto& g = *params[i].grads;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double gj = g[j];
        m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * gj;
        v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * gj * gj;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        x[j] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + kEps));
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  double lr_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::kAdam)
    return std::make_unique<Adam>(cfg.learning_rate);
  return std::make_unique<SgdMomentum>(cfg.learning_rate, 0.9);
}

nn::Tensor<float> make_batch(const io::Dataset& ds,
                             const std::vector<std::size_t>& idx, std::size_t begin,
                             std::size_t end, const Standardizer& stdz) {
  const std::size_t b = end - begin;
  nn::Tensor<float> x({b, 1, ds.rows, ds.cols});
  for (std::size_t i = 0; i < b; ++i) {
    const auto& block = ds.features[idx[begin + i]];
    float* dst = x.values.data() + i * ds.rows * ds.cols;
    for (std::size_t j = 0; j < block.size(); ++j) dst[j] = stdz.apply(block[j]);
  }
  return x;
}

double sample_stddev(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw usage_error("train config: epochs must be >= 1");
  if (batch_size < 1) throw usage_error("train config: batch_size must be >= 1");
  if (learning_rate < 0.0)
    throw usage_error("train config: learning_rate must be >= 0");
  if (gamma < 0.0) throw usage_error("train config: gamma must be >= 0");
  if (width_scale <= 0.0) throw usage_error("train config: width_scale must be > 0");
}

Standardizer fit_standardizer(const io::Dataset& ds,
                              const std::vector<std::size_t>& idx) {
  Standardizer s;
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::size_t i : idx) {
    for (float v : ds.features[i]) {
      sum += v;
      sq += static_cast<double>(v) * v;
      ++n;
    }
  }
  if (n == 0) return s;
  s.mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - s.mean * s.mean;
  s.stddev = var > 1e-12 ? std::sqrt(var) : 1.0;
  return s;
}

TrainResult train(model::ResNet18<float>& net, const io::Dataset& ds,
                  const std::vector<std::size_t>& train_idx, const TrainConfig& cfg,
                  const Standardizer& stdz) {
  cfg.validate();
  if (train_idx.empty()) throw usage_error("train: empty training set");
  if (ds.rows != net.config().input_rows)
    throw shape_error("train: dataset rows " + std::to_string(ds.rows) +
                      " do not match model input rows " +
                      std::to_string(net.config().input_rows));

  auto opt = make_optimizer(cfg);
  auto params = net.parameters();
  Rng shuffle_rng(splitmix64(cfg.seed ^ 0x747261696eULL));

  std::vector<std::size_t> order = train_idx;
  const std::size_t n = order.size();
  TrainResult result;
  result.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));

  std::vector<int> batch_labels;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t begin = 0; begin < n;
         begin += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t end =
          std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
      nn::Tensor<float> x = make_batch(ds, order, begin, end, stdz);
      batch_labels.clear();
      for (std::size_t i = begin; i < end; ++i)
        batch_labels.push_back(ds.labels[order[i]]);

      nn::Tensor<float> logits = net.forward(x, nn::Mode::kTrain);
      nn::Tensor<float> dlogits;
      double loss;
      try {
        loss = loss::focal_batch(logits, batch_labels, cfg.effective_gamma(), &dlogits);
      } catch (const numeric_error& e) {
        throw numeric_error("training diverged at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_index) + ": " + e.what());
      }
      if (!std::isfinite(loss))
        throw numeric_error("training diverged at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_index));
      loss_sum += loss * static_cast<double>(end - begin);

      net.zero_grad();
      net.backward(dlogits);
      opt->step(params);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(n));
  }
  return result;
}

std::vector<int> predict(model::ResNet18<float>& net, const io::Dataset& ds,
                         const std::vector<std::size_t>& idx,
                         const Standardizer& stdz, int batch_size) {
  std::vector<int> preds;
  preds.reserve(idx.size());
  const std::size_t k = net.config().n_classes;
  for (std::size_t begin = 0; begin < idx.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(idx.size(), begin + static_cast<std::size_t>(batch_size));
    nn::Tensor<float> x = make_batch(ds, idx, begin, end, stdz);
    nn::Tensor<float> logits = net.forward(x, nn::Mode::kEval);
    for (std::size_t i = 0; i < end - begin; ++i) {
      int best = 0;  // ties resolve to the lowest class index
      for (std::size_t j = 1; j < k; ++j)
        if (logits.values[i * k + j] > logits.values[i * k + static_cast<std::size_t>(best)])
          best = static_cast<int>(j);
      preds.push_back(best);
    }
  }
  return preds;
}

Metrics metrics_from_predictions(const std::vector<int>& labels,
                                 const std::vector<int>& predictions) {
  if (labels.empty()) throw usage_error("metrics: empty test set");
  if (labels.size() != predictions.size())
    throw shape_error("metrics: prediction count mismatch");

  Metrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto t = static_cast<std::size_t>(labels[i]);
    const auto p = static_cast<std::size_t>(predictions[i]);
    if (t >= 4 || p >= 4) throw usage_error("metrics: class index out of range");
    ++m.counts[t][p];
    ++m.support[t];
    if (t == p) ++correct;
  }
  m.overall_accuracy =
      100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());

  double diag_sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    m.present[c] = m.support[c] > 0;
    if (!m.present[c]) {
      m.any_absent = true;
      continue;
    }
    for (std::size_t j = 0; j < 4; ++j)
      m.confusion[c][j] = 100.0 * static_cast<double>(m.counts[c][j]) /
                          static_cast<double>(m.support[c]);
    diag_sum += m.confusion[c][c];
    ++present;
  }
  m.class_accuracy = present > 0 ? diag_sum / present : 0.0;
  return m;
}

Metrics evaluate(model::ResNet18<float>& net, const io::Dataset& ds,
                 const std::vector<std::size_t>& idx, const Standardizer& stdz) {
  if (idx.empty()) throw usage_error("evaluate: empty test set");
  std::vector<int> labels;
  labels.reserve(idx.size());
  for (std::size_t i : idx) labels.push_back(ds.labels[i]);
  return metrics_from_predictions(labels, predict(net, ds, idx, stdz));
}

namespace {

void aggregate(CvResult& cv) {
  std::vector<double> overall, cls;
  for (const auto& f : cv.folds) {
    overall.push_back(f.metrics.overall_accuracy);
    cls.push_back(f.metrics.class_accuracy);
  }
  cv.mean_overall =
      std::accumulate(overall.begin(), overall.end(), 0.0) / overall.size();
  cv.mean_class = std::accumulate(cls.begin(), cls.end(), 0.0) / cls.size();
  cv.std_overall = sample_stddev(overall, cv.mean_overall);
  cv.std_class = sample_stddev(cls, cv.mean_class);
}

}  // namespace

CvResult cross_validate(const io::Dataset& ds, const data::FoldAssignment& folds,
                        const TrainConfig& cfg) {
  if (folds.fold_of.size() != ds.size())
    throw shape_error("cross_validate: fold assignment does not match dataset");
  CvResult cv;
  for (int fold = 0; fold < folds.k; ++fold) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      (folds.fold_of[i] == fold ? test_idx : train_idx).push_back(i);

    model::ResNet18Config mc;
    mc.input_rows = ds.rows;
    mc.input_cols = ds.cols;
    mc.width_scale = cfg.width_scale;
    model::ResNet18<float> net(
        mc, splitmix64(cfg.seed ^ (0xf01dULL + static_cast<std::uint64_t>(fold))));

    const Standardizer stdz =
        cfg.standardize ? fit_standardizer(ds, train_idx) : Standardizer{};
    FoldOutcome out;
    out.fold = fold;
    out.epoch_loss = train(net, ds, train_idx, cfg, stdz).epoch_loss;
    out.metrics = evaluate(net, ds, test_idx, stdz);
    cv.folds.push_back(std::move(out));
  }
  aggregate(cv);
  return cv;
}

CvResult cross_validate_with(const io::Dataset& ds, const data::FoldAssignment& folds,
                             const PredictorFn& predictor) {
  CvResult cv;
  for (int fold = 0; fold < folds.k; ++fold) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      (folds.fold_of[i] == fold ? test_idx : train_idx).push_back(i);
    std::vector<int> labels;
    for (std::size_t i : test_idx) labels.push_back(ds.labels[i]);
    FoldOutcome out;
    out.fold = fold;
    out.metrics = metrics_from_predictions(labels, predictor(train_idx, test_idx));
    cv.folds.push_back(std::move(out));
  }
  aggregate(cv);
  return cv;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

AblationReport run_ablation(const std::map<dsp::FeatureKind, io::Dataset>& datasets,
                            const data::FoldAssignment& folds, const TrainConfig& base,
                            const std::vector<std::uint64_t>& seeds, int holdout_fold) {
  if (datasets.empty()) throw usage_error("ablation: no feature datasets");
  if (seeds.empty()) throw usage_error("ablation: need at least one seed");
  if (holdout_fold < 0 || holdout_fold >= folds.k)
    throw usage_error("ablation: holdout fold out of range");

  AblationReport report;
  report.epochs = base.epochs;
  report.holdout_fold = holdout_fold;
  report.seeds = seeds;

  for (const auto& [kind, ds] : datasets) {
    if (folds.fold_of.size() != ds.size())
      throw shape_error("ablation: fold assignment does not match dataset");
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      (folds.fold_of[i] == holdout_fold ? test_idx : train_idx).push_back(i);

    for (LossKind loss : {LossKind::kSoftmaxCe, LossKind::kFocal}) {
      AblationCell cell;
      cell.feature = kind;
      cell.loss = loss;
      cell.gamma = loss == LossKind::kFocal ? base.gamma : 0.0;
      for (std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.loss = loss;
        cfg.feature = kind;
        // seed depends on the run seed only: every cell of the grid shares
        // fold assignment, init draws, and per-epoch batch order
        cfg.seed = splitmix64(seed);

        model::ResNet18Config mc;
        mc.input_rows = ds.rows;
        mc.input_cols = ds.cols;
        mc.width_scale = cfg.width_scale;
        model::ResNet18<float> net(mc, cfg.seed);

        const Standardizer stdz =
            cfg.standardize ? fit_standardizer(ds, train_idx) : Standardizer{};
        AblationRun run;
        run.seed = seed;
        run.epoch_loss = train(net, ds, train_idx, cfg, stdz).epoch_loss;
        run.metrics = evaluate(net, ds, test_idx, stdz);
        cell.runs.push_back(std::move(run));
      }
      std::vector<double> overall, cls;
      for (const auto& r : cell.runs) {
        overall.push_back(r.metrics.overall_accuracy);
        cls.push_back(r.metrics.class_accuracy);
      }
      cell.median_overall = median(overall);
      cell.median_class_accuracy = median(cls);
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

const char* loss_name(LossKind k) {
  return k == LossKind::kSoftmaxCe ? "softmax" : "focal";
}

const char* feature_name(dsp::FeatureKind k) {
  return k == dsp::FeatureKind::kSpectrogramDb ? "spectrogram" : "mfcc";
}

}  // namespace ser::train
