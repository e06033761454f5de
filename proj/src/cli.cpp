#include "ser/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "ser/audio.hpp"
#include "ser/checkpoint.hpp"
#include "ser/common.hpp"
#include "ser/data.hpp"
#include "ser/dsp.hpp"
#include "ser/features_io.hpp"
#include "ser/image.hpp"
#include "ser/train.hpp"

namespace ser::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("SER_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw usage_error("SER_SEED is not a valid integer: " + std::string(env));
    }
  }
  return 0;
}

dsp::FeatureKind parse_kind(const std::string& s) {
  if (s == "spectrogram") return dsp::FeatureKind::kSpectrogramDb;
  if (s == "mfcc") return dsp::FeatureKind::kMfcc;
  throw usage_error("unknown feature kind '" + s + "' (spectrogram|mfcc)");
}

train::LossKind parse_loss(const std::string& s) {
  if (s == "softmax") return train::LossKind::kSoftmaxCe;
  if (s == "focal") return train::LossKind::kFocal;
  throw usage_error("unknown loss '" + s + "' (softmax|focal)");
}

train::OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return train::OptimizerKind::kAdam;
  if (s == "sgd") return train::OptimizerKind::kSgdMomentum;
  throw usage_error("unknown optimizer '" + s + "' (adam|sgd)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot write: " + path.string());
  os << text;
  if (!os) throw io_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

json metrics_to_json(const train::Metrics& m) {
  json j;
  j["overall_accuracy"] = m.overall_accuracy;
  j["class_accuracy"] = m.class_accuracy;
  j["confusion_percent"] = m.confusion;
  j["support"] = m.support;
  j["present"] = m.present;
  return j;
}

json config_to_json(const train::TrainConfig& cfg) {
  return json{{"loss", train::loss_name(cfg.loss)},
              {"gamma", cfg.gamma},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"learning_rate", cfg.learning_rate},
              {"optimizer", cfg.optimizer == train::OptimizerKind::kAdam ? "adam" : "sgd"},
              {"seed", cfg.seed},
              {"width_scale", cfg.width_scale},
              {"standardize", cfg.standardize}};
}

std::string confusion_csv(const std::array<std::array<double, 4>, 4>& confusion) {
  std::string out = "class,Neutral,Happiness,Sadness,Anger\n";
  for (std::size_t r = 0; r < 4; ++r) {
    out += data::class_name(static_cast<data::EmotionClass>(r));
    for (std::size_t c = 0; c < 4; ++c) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), ",%.1f", confusion[r][c]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

data::SyntheticSpec load_synth_spec(const std::string& spec_path) {
  data::SyntheticSpec spec = data::SyntheticSpec::defaults();
  if (spec_path.empty()) return spec;
  std::ifstream is(spec_path);
  if (!is) throw io_error("cannot open spec: " + spec_path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw usage_error("spec json: " + std::string(e.what()));
  }
  try {
    if (j.contains("n_total")) spec.n_total = j["n_total"].get<std::size_t>();
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("proportions")) {
      const auto p = j["proportions"].get<std::vector<double>>();
      if (p.size() != 4) throw usage_error("spec json: proportions must have 4 entries");
      std::copy(p.begin(), p.end(), spec.proportions.begin());
    }
    if (j.contains("classes")) {
      const auto& arr = j["classes"];
      if (!arr.is_array() || arr.size() != 4)
        throw usage_error("spec json: classes must be an array of 4 recipes");
      for (std::size_t c = 0; c < 4; ++c) {
        auto& r = spec.recipes[c];
        const auto& jc = arr[c];
        if (jc.contains("band_lo_hz")) r.band_lo_hz = jc["band_lo_hz"].get<double>();
        if (jc.contains("band_hi_hz")) r.band_hi_hz = jc["band_hi_hz"].get<double>();
        if (jc.contains("mod_rate_hz")) r.mod_rate_hz = jc["mod_rate_hz"].get<double>();
        if (jc.contains("noise_level")) r.noise_level = jc["noise_level"].get<double>();
      }
    }
  } catch (const json::exception& e) {
    throw usage_error("spec json: " + std::string(e.what()));
  }
  return spec;
}

// --- subcommand payloads -------------------------------------------------

struct SynthArgs {
  std::string spec_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t n_total = 0;  // 0 = take from spec
};

int cmd_synth(const SynthArgs& a) {
  data::SyntheticSpec spec = load_synth_spec(a.spec_path);
  if (a.seed_set) spec.seed = a.seed;
  if (a.n_total > 0) spec.n_total = a.n_total;
  spec.validate();
  const auto manifest = data::generate_synthetic(spec, a.out_dir);
  const auto dist = data::class_distribution(manifest);
  std::printf("wrote %zu clips to %s (", manifest.size(), a.out_dir.c_str());
  for (int c = 0; c < 4; ++c)
    std::printf("%s%s %.1f%%", c ? ", " : "",
                data::class_name(static_cast<data::EmotionClass>(c)),
                dist[static_cast<std::size_t>(c)]);
  std::printf(")\n");
  return 0;
}

struct FeaturizeArgs {
  std::string manifest_path, kind_str = "spectrogram", out_dir;
};

int cmd_featurize(const FeaturizeArgs& a) {
  const dsp::FeatureKind kind = parse_kind(a.kind_str);
  const auto manifest = data::load_manifest(a.manifest_path);
  fs::create_directories(a.out_dir);

  const std::size_t n = manifest.size();
  std::vector<std::string> failures(n);
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& rec = manifest.records[i];
      try {
        const auto clip = audio::load_and_standardize_file(rec.wav_path);
        const auto fm = dsp::compute_features(clip, kind);
        io::write_feature_file(fs::path(a.out_dir) / (rec.utterance_id + ".serf"), fm);
      } catch (const std::exception& ex) {
        failures[i] = ex.what();
      }
    }
  });

  std::string index = "utterance_id,feature_file,label\n";
  std::string failed_report = "utterance_id,wav_path,error\n";
  std::size_t n_failed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = manifest.records[i];
    if (failures[i].empty()) {
      index += rec.utterance_id + "," + rec.utterance_id + ".serf," +
               data::class_name(rec.label) + "\n";
    } else {
      failed_report += rec.utterance_id + "," + rec.wav_path + "," + failures[i] + "\n";
      ++n_failed;
    }
  }
  write_text(fs::path(a.out_dir) / "index.csv", index);
  if (n_failed > 0) {
    write_text(fs::path(a.out_dir) / "failures.csv", failed_report);
    std::fprintf(stderr, "featurize: %zu of %zu records failed (see failures.csv)\n",
                 n_failed, n);
    return 1;
  }
  std::printf("featurized %zu records (%s) into %s\n", n, a.kind_str.c_str(),
              a.out_dir.c_str());
  return 0;
}

struct TrainArgs {
  std::string features_dir, manifest_path, out_dir;
  train::TrainConfig cfg;
};

train::TrainConfig finish_config(train::TrainConfig cfg, const io::Dataset& ds) {
  cfg.feature = ds.kind;
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  const auto manifest = data::load_manifest(a.manifest_path);
  const auto ds = io::load_feature_dataset(a.features_dir, manifest);
  const train::TrainConfig cfg = finish_config(a.cfg, ds);
  cfg.validate();
  fs::create_directories(a.out_dir);

  model::ResNet18Config mc;
  mc.input_rows = ds.rows;
  mc.input_cols = ds.cols;
  mc.width_scale = cfg.width_scale;
  model::ResNet18<float> net(mc, cfg.seed);

  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  const train::Standardizer stdz =
      cfg.standardize ? train::fit_standardizer(ds, all) : train::Standardizer{};

  const auto result = train::train(net, ds, all, cfg, stdz);
  const auto metrics = train::evaluate(net, ds, all, stdz);

  io::CheckpointMeta meta;
  meta.kind = ds.kind;
  meta.input_rows = ds.rows;
  meta.n_classes = 4;
  meta.width_scale = cfg.width_scale;
  meta.stdz_mean = stdz.mean;
  meta.stdz_stddev = stdz.stddev;
  io::save_checkpoint(fs::path(a.out_dir) / "checkpoint.bin", meta, net);

  json j;
  j["schema_version"] = 1;
  j["type"] = "training";
  j["config"] = config_to_json(cfg);
  j["feature_kind"] = train::feature_name(ds.kind);
  j["epoch_loss"] = result.epoch_loss;
  j["train_set"] = metrics_to_json(metrics);
  j["overall_accuracy"] = metrics.overall_accuracy;
  j["class_accuracy"] = metrics.class_accuracy;
  write_json(fs::path(a.out_dir) / "metrics.json", j);
  write_text(fs::path(a.out_dir) / "confusion.csv", confusion_csv(metrics.confusion));
  write_text(fs::path(a.out_dir) / "model_summary.txt", net.format_summary());
  std::printf("trained %d epochs, final loss %.6f, train overall %.1f%%\n",
              cfg.epochs, result.epoch_loss.back(), metrics.overall_accuracy);
  return 0;
}

struct EvalArgs {
  std::string features_dir, manifest_path, checkpoint_path, out_dir;
};

int cmd_eval(const EvalArgs& a) {
  io::CheckpointMeta meta;
  auto net = io::load_checkpoint(a.checkpoint_path, &meta);
  const auto manifest = data::load_manifest(a.manifest_path);
  const auto ds = io::load_feature_dataset(a.features_dir, manifest);
  if (ds.kind != meta.kind)
    throw usage_error("checkpoint was trained on " + std::string(train::feature_name(meta.kind)) +
                      " features, directory holds " + train::feature_name(ds.kind));

  train::Standardizer stdz;
  stdz.mean = meta.stdz_mean;
  stdz.stddev = meta.stdz_stddev;
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  const auto metrics = train::evaluate(net, ds, all, stdz);

  fs::create_directories(a.out_dir);
  json j;
  j["schema_version"] = 1;
  j["type"] = "metrics";
  j["classes"] = model::kClassNames;
  j.update(metrics_to_json(metrics));
  write_json(fs::path(a.out_dir) / "metrics.json", j);
  write_text(fs::path(a.out_dir) / "confusion.csv", confusion_csv(metrics.confusion));
  std::printf("overall %.1f%%, class %.1f%%\n", metrics.overall_accuracy,
              metrics.class_accuracy);
  return 0;
}

struct KfoldArgs {
  std::string features_dir, manifest_path, out_dir;
  int folds = 5;
  bool group_by_session = false;
  train::TrainConfig cfg;
};

int cmd_kfold(const KfoldArgs& a) {
  const auto manifest = data::load_manifest(a.manifest_path);
  const auto ds = io::load_feature_dataset(a.features_dir, manifest);
  const train::TrainConfig cfg = finish_config(a.cfg, ds);
  cfg.validate();

  data::FoldAssignment fa;
  if (a.group_by_session) {
    if (a.folds != 5) throw usage_error("--group-by-session requires --folds 5");
    fa = data::session_kfold(manifest);
  } else {
    fa = data::stratified_kfold(manifest, a.folds, cfg.seed);
  }

  const auto cv = train::cross_validate(ds, fa, cfg);

  fs::create_directories(a.out_dir);
  json j;
  j["schema_version"] = 1;
  j["type"] = "cross_validation";
  j["k"] = fa.k;
  j["group_by_session"] = a.group_by_session;
  j["config"] = config_to_json(cfg);
  j["feature_kind"] = train::feature_name(ds.kind);
  json folds = json::array();
  std::array<std::array<std::size_t, 4>, 4> pooled{};
  for (const auto& f : cv.folds) {
    json jf = metrics_to_json(f.metrics);
    jf["fold"] = f.fold;
    jf["epoch_loss"] = f.epoch_loss;
    folds.push_back(jf);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) pooled[r][c] += f.metrics.counts[r][c];
  }
  j["folds"] = folds;
  j["mean_overall"] = cv.mean_overall;
  j["std_overall"] = cv.std_overall;
  j["mean_class"] = cv.mean_class;
  j["std_class"] = cv.std_class;
  write_json(fs::path(a.out_dir) / "metrics.json", j);

  // pooled confusion over all held-out folds
  std::array<std::array<double, 4>, 4> pooled_pct{};
  for (std::size_t r = 0; r < 4; ++r) {
    std::size_t row_total = 0;
    for (std::size_t c = 0; c < 4; ++c) row_total += pooled[r][c];
    if (row_total == 0) continue;
    for (std::size_t c = 0; c < 4; ++c)
      pooled_pct[r][c] =
          100.0 * static_cast<double>(pooled[r][c]) / static_cast<double>(row_total);
  }
  write_text(fs::path(a.out_dir) / "confusion.csv", confusion_csv(pooled_pct));
  std::printf("%d-fold: overall %.1f%% +- %.1f, class %.1f%% +- %.1f\n", fa.k,
              cv.mean_overall, cv.std_overall, cv.mean_class, cv.std_class);
  return 0;
}

struct AblateArgs {
  std::string features_spec_dir, features_mfcc_dir, manifest_path, out_dir;
  std::string seeds_str = "1,2,3";
  int holdout_fold = 0;
  int folds = 5;
  train::TrainConfig cfg;
};

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::string tok;
  std::istringstream is(s);
  while (std::getline(is, tok, ',')) {
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw usage_error("bad seed list: " + s);
    }
  }
  if (out.empty()) throw usage_error("seed list is empty");
  return out;
}

int cmd_ablate(const AblateArgs& a) {
  if (a.features_spec_dir.empty() && a.features_mfcc_dir.empty())
    throw usage_error("ablate: need --features-spectrogram and/or --features-mfcc");
  const auto manifest = data::load_manifest(a.manifest_path);

  std::map<dsp::FeatureKind, io::Dataset> datasets;
  if (!a.features_spec_dir.empty()) {
    auto ds = io::load_feature_dataset(a.features_spec_dir, manifest);
    if (ds.kind != dsp::FeatureKind::kSpectrogramDb)
      throw usage_error("--features-spectrogram dir holds " +
                        std::string(train::feature_name(ds.kind)));
    datasets.emplace(dsp::FeatureKind::kSpectrogramDb, std::move(ds));
  }
  if (!a.features_mfcc_dir.empty()) {
    auto ds = io::load_feature_dataset(a.features_mfcc_dir, manifest);
    if (ds.kind != dsp::FeatureKind::kMfcc)
      throw usage_error("--features-mfcc dir holds " +
                        std::string(train::feature_name(ds.kind)));
    datasets.emplace(dsp::FeatureKind::kMfcc, std::move(ds));
  }

  a.cfg.validate();
  const auto seeds = parse_seeds(a.seeds_str);
  const auto fa = data::stratified_kfold(manifest, a.folds, a.cfg.seed);
  const auto report =
      train::run_ablation(datasets, fa, a.cfg, seeds, a.holdout_fold);

  fs::create_directories(a.out_dir);
  json j;
  j["schema_version"] = 1;
  j["type"] = "ablation";
  j["epochs"] = report.epochs;
  j["holdout_fold"] = report.holdout_fold;
  j["seeds"] = report.seeds;
  j["gamma"] = a.cfg.gamma;
  json cells = json::array();
  for (const auto& cell : report.cells) {
    json jc;
    jc["feature"] = train::feature_name(cell.feature);
    jc["loss"] = train::loss_name(cell.loss);
    jc["gamma"] = cell.gamma;
    jc["median_overall"] = cell.median_overall;
    jc["median_class_accuracy"] = cell.median_class_accuracy;
    json runs = json::array();
    for (const auto& r : cell.runs) {
      json jr = metrics_to_json(r.metrics);
      jr["seed"] = r.seed;
      jr["epoch_loss"] = r.epoch_loss;
      runs.push_back(jr);
    }
    jc["runs"] = runs;
    cells.push_back(jc);
  }
  j["cells"] = cells;
  write_json(fs::path(a.out_dir) / "ablation.json", j);

  // Tables 2-3 shaped confusion CSVs for the MFCC pair (run at the median
  // class accuracy)
  for (const auto& cell : report.cells) {
    if (cell.feature != dsp::FeatureKind::kMfcc) continue;
    std::vector<std::pair<double, std::size_t>> by_acc;
    for (std::size_t i = 0; i < cell.runs.size(); ++i)
      by_acc.emplace_back(cell.runs[i].metrics.class_accuracy, i);
    std::sort(by_acc.begin(), by_acc.end());
    const auto& median_run = cell.runs[by_acc[by_acc.size() / 2].second];
    write_text(fs::path(a.out_dir) /
                   ("confusion_mfcc_" + std::string(train::loss_name(cell.loss)) + ".csv"),
               confusion_csv(median_run.metrics.confusion));
  }

  for (const auto& cell : report.cells)
    std::printf("%-11s %-8s overall %.1f%% class %.1f%% (median of %zu seeds)\n",
                train::feature_name(cell.feature), train::loss_name(cell.loss),
                cell.median_overall, cell.median_class_accuracy, cell.runs.size());
  return 0;
}

struct ReportArgs {
  std::string features_file, png_out, metrics_file, table_out;
  unsigned scale = 1;
};

int cmd_report(const ReportArgs& a) {
  bool did = false;
  if (!a.features_file.empty() || !a.png_out.empty()) {
    if (a.features_file.empty() || a.png_out.empty())
      throw usage_error("report: --features and --png go together");
    const auto fm = io::read_feature_file(a.features_file);
    io::write_feature_png(a.png_out, fm, a.scale);
    std::printf("wrote %zux%zu png to %s\n", fm.cols * a.scale, fm.rows * a.scale,
                a.png_out.c_str());
    did = true;
  }
  if (!a.metrics_file.empty() || !a.table_out.empty()) {
    if (a.metrics_file.empty() || a.table_out.empty())
      throw usage_error("report: --metrics and --table go together");
    std::ifstream is(a.metrics_file);
    if (!is) throw io_error("cannot open: " + a.metrics_file);
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw parse_error("metrics json: " + std::string(e.what()));
    }
    std::string csv;
    if (j.contains("cells")) {
      csv = "input,loss,overall_accuracy,class_accuracy\n";
      for (const auto& cell : j["cells"]) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s,%s,%.1f,%.1f\n",
                      cell["feature"].get<std::string>().c_str(),
                      cell["loss"].get<std::string>().c_str(),
                      cell["median_overall"].get<double>(),
                      cell["median_class_accuracy"].get<double>());
        csv += buf;
      }
    } else if (j.contains("confusion_percent") || j.contains("train_set")) {
      std::array<std::array<double, 4>, 4> conf{};
      const auto& jc = j.contains("confusion_percent")
                           ? j["confusion_percent"]
                           : j["train_set"]["confusion_percent"];
      for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) conf[r][c] = jc[r][c].get<double>();
      csv = confusion_csv(conf);
    } else if (j.contains("folds")) {
      csv = "fold,overall_accuracy,class_accuracy\n";
      for (const auto& f : j["folds"]) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%d,%.1f,%.1f\n", f["fold"].get<int>(),
                      f["overall_accuracy"].get<double>(),
                      f["class_accuracy"].get<double>());
        csv += buf;
      }
      char buf[96];
      std::snprintf(buf, sizeof(buf), "mean,%.1f,%.1f\nstd,%.1f,%.1f\n",
                    j["mean_overall"].get<double>(), j["mean_class"].get<double>(),
                    j["std_overall"].get<double>(), j["std_class"].get<double>());
      csv += buf;
    } else {
      throw parse_error("metrics json: unrecognized schema");
    }
    write_text(a.table_out, csv);
    did = true;
  }
  if (!did) throw usage_error("report: nothing to do (pass --features/--png or --metrics/--table)");
  return 0;
}

void add_train_options(CLI::App* cmd, train::TrainConfig& cfg, std::string& loss_str,
                       std::string& opt_str, bool& no_standardize, int& workers) {
  cmd->add_option("--loss", loss_str, "loss function: focal|softmax");
  cmd->add_option("--gamma", cfg.gamma, "focal focusing parameter (>= 0)");
  cmd->add_option("--epochs", cfg.epochs, "training epochs");
  cmd->add_option("--batch-size", cfg.batch_size, "mini-batch size");
  cmd->add_option("--lr", cfg.learning_rate, "learning rate");
  cmd->add_option("--optimizer", opt_str, "adam|sgd (sgd uses momentum 0.9)");
  cmd->add_option("--seed", cfg.seed, "rng seed (SER_SEED overrides the default)");
  cmd->add_option("--width-scale", cfg.width_scale, "channel width multiplier");
  cmd->add_flag("--no-standardize", no_standardize,
                "skip train-split input standardization");
  cmd->add_option("--workers", workers, "worker threads (0 = all cores)");
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"speech emotion recognition pipeline: synthesize, featurize, "
               "train, evaluate, cross-validate, ablate, report"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  c_synth->add_option("--spec", synth.spec_path, "synthesis spec json");
  c_synth->add_option("--out", synth.out_dir, "output directory")->required();
  auto* synth_seed = c_synth->add_option("--seed", synth.seed, "seed override");
  c_synth->add_option("--n-total", synth.n_total, "clip count override");

  FeaturizeArgs feat;
  int feat_workers = 0;
  auto* c_feat = app.add_subcommand("featurize", "extract features for a manifest");
  c_feat->add_option("--manifest", feat.manifest_path, "manifest csv")->required();
  c_feat->add_option("--kind", feat.kind_str, "spectrogram|mfcc")->required();
  c_feat->add_option("--out", feat.out_dir, "output directory")->required();
  c_feat->add_option("--workers", feat_workers, "worker threads (0 = all cores)");

  TrainArgs tr;
  std::string tr_loss = "focal", tr_opt = "adam";
  bool tr_nostd = false;
  int tr_workers = 0;
  auto* c_train = app.add_subcommand("train", "train on all manifest records");
  c_train->add_option("--features", tr.features_dir, "feature directory")->required();
  c_train->add_option("--manifest", tr.manifest_path, "manifest csv")->required();
  c_train->add_option("--out", tr.out_dir, "output directory")->required();
  add_train_options(c_train, tr.cfg, tr_loss, tr_opt, tr_nostd, tr_workers);

  EvalArgs ev;
  int ev_workers = 0;
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  c_eval->add_option("--features", ev.features_dir, "feature directory")->required();
  c_eval->add_option("--manifest", ev.manifest_path, "manifest csv")->required();
  c_eval->add_option("--checkpoint", ev.checkpoint_path, "checkpoint file")->required();
  c_eval->add_option("--out", ev.out_dir, "output directory")->required();
  c_eval->add_option("--workers", ev_workers, "worker threads (0 = all cores)");

  KfoldArgs kf;
  std::string kf_loss = "focal", kf_opt = "adam";
  bool kf_nostd = false;
  int kf_workers = 0;
  auto* c_kfold = app.add_subcommand("kfold", "stratified k-fold cross-validation");
  c_kfold->add_option("--features", kf.features_dir, "feature directory")->required();
  c_kfold->add_option("--manifest", kf.manifest_path, "manifest csv")->required();
  c_kfold->add_option("--out", kf.out_dir, "output directory")->required();
  c_kfold->add_option("--folds", kf.folds, "fold count");
  c_kfold->add_flag("--group-by-session", kf.group_by_session,
                    "fold by session instead of stratified shuffle");
  add_train_options(c_kfold, kf.cfg, kf_loss, kf_opt, kf_nostd, kf_workers);

  AblateArgs ab;
  std::string ab_loss = "focal", ab_opt = "adam";
  bool ab_nostd = false;
  int ab_workers = 0;
  auto* c_ablate = app.add_subcommand(
      "ablate", "loss-function grid: {spectrogram,mfcc} x {softmax,focal}");
  c_ablate->add_option("--features-spectrogram", ab.features_spec_dir,
                       "spectrogram feature directory");
  c_ablate->add_option("--features-mfcc", ab.features_mfcc_dir,
                       "mfcc feature directory");
  c_ablate->add_option("--manifest", ab.manifest_path, "manifest csv")->required();
  c_ablate->add_option("--out", ab.out_dir, "output directory")->required();
  c_ablate->add_option("--seeds", ab.seeds_str, "comma-separated seed list");
  c_ablate->add_option("--holdout-fold", ab.holdout_fold, "held-out fold index");
  c_ablate->add_option("--folds", ab.folds, "fold count");
  add_train_options(c_ablate, ab.cfg, ab_loss, ab_opt, ab_nostd, ab_workers);

  ReportArgs rp;
  auto* c_report = app.add_subcommand("report", "render feature pngs and csv tables");
  c_report->add_option("--features", rp.features_file, "feature file (.serf)");
  c_report->add_option("--png", rp.png_out, "output png path");
  c_report->add_option("--scale", rp.scale, "integer upscale factor");
  c_report->add_option("--metrics", rp.metrics_file, "metrics json");
  c_report->add_option("--table", rp.table_out, "output csv path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*c_synth) {
      synth.seed_set = synth_seed->count() > 0;
      if (!synth.seed_set && std::getenv("SER_SEED")) {
        synth.seed = default_seed();
        synth.seed_set = true;
      }
      return cmd_synth(synth);
    }
    if (*c_feat) {
      set_worker_count(feat_workers);
      return cmd_featurize(feat);
    }
    auto fill = [&](train::TrainConfig& cfg, CLI::App* cmd, const std::string& loss,
                    const std::string& opt, bool nostd, int workers) {
      cfg.loss = parse_loss(loss);
      cfg.optimizer = parse_optimizer(opt);
      cfg.standardize = !nostd;
      if (cmd->count("--seed") == 0) cfg.seed = default_seed();
      set_worker_count(workers);
    };
    if (*c_train) {
      fill(tr.cfg, c_train, tr_loss, tr_opt, tr_nostd, tr_workers);
      return cmd_train(tr);
    }
    if (*c_eval) {
      set_worker_count(ev_workers);
      return cmd_eval(ev);
    }
    if (*c_kfold) {
      fill(kf.cfg, c_kfold, kf_loss, kf_opt, kf_nostd, kf_workers);
      return cmd_kfold(kf);
    }
    if (*c_ablate) {
      fill(ab.cfg, c_ablate, ab_loss, ab_opt, ab_nostd, ab_workers);
      return cmd_ablate(ab);
    }
    if (*c_report) return cmd_report(rp);
    return 2;
  } catch (const usage_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("ser");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace ser::cli
