#include "ser/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "ser/audio.hpp"

namespace ser::data {

namespace {

const std::set<std::string> kRawLabels = {
    "Happiness", "Surprise", "Fear",    "Sadness", "Frustration",
    "Excited",   "Anger",    "Disgust", "Neutral", "other"};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

const char* class_name(EmotionClass c) {
  static constexpr std::array<const char*, 4> names = {"Neutral", "Happiness",
                                                       "Sadness", "Anger"};
  return names[static_cast<std::size_t>(c)];
}

std::optional<EmotionClass> parse_kept_label(const std::string& s) {
  if (s == "Neutral") return EmotionClass::kNeutral;
  if (s == "Happiness") return EmotionClass::kHappiness;
  if (s == "Sadness") return EmotionClass::kSadness;
  if (s == "Anger") return EmotionClass::kAnger;
  return std::nullopt;
}

bool is_known_raw_label(const std::string& s) { return kRawLabels.count(s) > 0; }

DatasetManifest load_manifest(const std::filesystem::path& csv_path) {
  std::ifstream is(csv_path);
  if (!is) throw io_error("cannot open manifest: " + csv_path.string());

  std::string line;
  if (!std::getline(is, line)) throw usage_error("manifest: empty file");

  static const std::vector<std::string> kColumns = {
      "utterance_id", "wav_path", "label",     "session",
      "speaker",      "agreement", "topic_type"};
  const auto header = split_csv_line(trim(line));
  if (header.size() < kColumns.size())
    throw usage_error("manifest: expected " + std::to_string(kColumns.size()) +
                      " columns, got " + std::to_string(header.size()));
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;
  for (const auto& c : kColumns)
    if (!col.count(c)) throw usage_error("manifest: missing column '" + c + "'");

  DatasetManifest m;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    const std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    const auto fields = split_csv_line(trimmed);
    if (fields.size() < kColumns.size())
      throw parse_error("manifest row " + std::to_string(row) + ": expected " +
                        std::to_string(kColumns.size()) + " fields");
    auto f = [&](const std::string& name) { return trim(fields[col.at(name)]); };

    if (f("topic_type") != "improvised") continue;  // scripted/other dropped

    const std::string label_str = f("label");
    const auto kept = parse_kept_label(label_str);
    if (!kept) {
      if (is_known_raw_label(label_str)) continue;  // excluded raw class
      throw parse_error("manifest row " + std::to_string(row) +
                        ": unknown label '" + label_str + "'");
    }

    UtteranceRecord rec;
    rec.utterance_id = f("utterance_id");
    rec.wav_path = f("wav_path");
    rec.label = *kept;
    try {
      rec.session = std::stoi(f("session"));
      rec.agreement = std::stoi(f("agreement"));
    } catch (const std::exception&) {
      throw parse_error("manifest row " + std::to_string(row) +
                        ": non-numeric session/agreement");
    }
    if (rec.session < 1 || rec.session > 5)
      throw parse_error("manifest row " + std::to_string(row) +
                        ": session must be 1..5");
    rec.speaker = f("speaker");
    if (rec.speaker != "M" && rec.speaker != "F")
      throw parse_error("manifest row " + std::to_string(row) +
                        ": speaker must be M or F");
    if (rec.agreement < 2) continue;  // below annotator-agreement threshold

    ++m.counts[static_cast<std::size_t>(rec.label)];
    m.records.push_back(std::move(rec));
  }

  if (m.records.empty()) throw usage_error("manifest: no records after filtering");
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& csv_path) {
  std::ofstream os(csv_path);
  if (!os) throw io_error("cannot write manifest: " + csv_path.string());
  os << "utterance_id,wav_path,label,session,speaker,agreement,topic_type\n";
  for (const auto& r : m.records) {
    os << r.utterance_id << ',' << r.wav_path << ',' << class_name(r.label) << ','
       << r.session << ',' << r.speaker << ',' << r.agreement << ",improvised\n";
  }
  if (!os) throw io_error("manifest write failed: " + csv_path.string());
}

std::array<double, 4> class_distribution(const DatasetManifest& m) {
  if (m.records.empty()) throw usage_error("class_distribution: empty manifest");
  std::array<double, 4> pct{};
  const double total = static_cast<double>(m.records.size());
  for (int c = 0; c < kNumClasses; ++c)
    pct[static_cast<std::size_t>(c)] =
        100.0 * static_cast<double>(m.counts[static_cast<std::size_t>(c)]) / total;
  return pct;
}

FoldAssignment stratified_kfold(const DatasetManifest& m, int k, std::uint64_t seed) {
  if (k < 2) throw usage_error("stratified_kfold: k must be >= 2");
  for (int c = 0; c < kNumClasses; ++c) {
    if (m.counts[static_cast<std::size_t>(c)] < static_cast<std::size_t>(k))
      throw usage_error(std::string("stratified_kfold: class ") +
                        class_name(static_cast<EmotionClass>(c)) + " has " +
                        std::to_string(m.counts[static_cast<std::size_t>(c)]) +
                        " records, fewer than k=" + std::to_string(k));
  }

  FoldAssignment fa;
  fa.k = k;
  fa.seed = seed;
  fa.fold_of.assign(m.records.size(), -1);

  Rng rng(seed);
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < m.records.size(); ++i)
      if (static_cast<int>(m.records[i].label) == c) idx.push_back(i);
    rng.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i)
      fa.fold_of[idx[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return fa;
}

FoldAssignment session_kfold(const DatasetManifest& m) {
  FoldAssignment fa;
  fa.k = 5;
  fa.seed = 0;
  fa.fold_of.resize(m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i)
    fa.fold_of[i] = m.records[i].session - 1;
  return fa;
}

SyntheticSpec SyntheticSpec::defaults() {
  SyntheticSpec s;
  s.n_total = 600;
  s.proportions = {0.488, 0.123, 0.269, 0.12};
  // Happiness deliberately shares most of its carrier band with Neutral and
  // differs mainly in modulation rate; Sadness sits low, Anger high.
  s.recipes[0] = {200.0, 600.0, 2.0, 0.10};   // Neutral
  s.recipes[1] = {250.0, 700.0, 7.0, 0.10};   // Happiness
  s.recipes[2] = {60.0, 180.0, 1.0, 0.08};    // Sadness
  s.recipes[3] = {1400.0, 3200.0, 10.0, 0.20};  // Anger
  s.seed = 0;
  return s;
}

void SyntheticSpec::validate() const {
  if (n_total == 0) throw usage_error("synthetic spec: n_total must be positive");
  double sum = 0.0;
  for (double p : proportions) {
    if (p < 0.0) throw usage_error("synthetic spec: negative proportion");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw usage_error("synthetic spec: proportions sum to " + std::to_string(sum) +
                      ", expected 1");
  for (const auto& r : recipes) {
    if (!(r.band_lo_hz >= 0.0) || !(r.band_hi_hz > r.band_lo_hz))
      throw usage_error("synthetic spec: invalid carrier band");
    if (r.band_hi_hz >= audio::kSampleRate / 2.0)
      throw usage_error("synthetic spec: carrier band exceeds Nyquist");
    if (r.mod_rate_hz <= 0.0 || r.noise_level < 0.0)
      throw usage_error("synthetic spec: invalid modulation/noise");
  }
}

std::array<std::size_t, 4> largest_remainder_counts(
    std::size_t n, const std::array<double, 4>& proportions) {
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> frac{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    const double quota = static_cast<double>(n) * proportions[c];
    counts[c] = static_cast<std::size_t>(std::floor(quota));
    frac[c] = quota - std::floor(quota);
    assigned += counts[c];
  }
  std::array<std::size_t, 4> order = {0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % 4]];
  return counts;
}

namespace {

// phase-rotation oscillator: value(i) = Im(z_i), z_{i+1} = z_i * w
struct Osc {
  double zr, zi, wr, wi;
  Osc(double freq_hz, double phase, double sample_rate) {
    const double step = 2.0 * M_PI * freq_hz / sample_rate;
    wr = std::cos(step);
    wi = std::sin(step);
    zr = std::cos(phase);
    zi = std::sin(phase);
  }
  double next() {
    const double v = zi;
    const double r = zr * wr - zi * wi;
    zi = zr * wi + zi * wr;
    zr = r;
    return v;
  }
  void renormalize() {
    const double norm = std::sqrt(zr * zr + zi * zi);
    zr /= norm;
    zi /= norm;
  }
};

}  // namespace

std::vector<double> synth_signal(const ClassRecipe& recipe, std::uint64_t file_seed) {
  Rng rng(file_seed);
  const std::size_t n = audio::kClipSamples;
  const double sr = audio::kSampleRate;
  std::vector<double> sig(n, 0.0);

  // amplitude-modulated carrier inside the class band
  const double carrier_hz = rng.uniform(recipe.band_lo_hz, recipe.band_hi_hz);
  const double mod_hz = recipe.mod_rate_hz * rng.uniform(0.8, 1.2);
  const double depth = rng.uniform(0.6, 0.9);
  const double amp = rng.uniform(0.35, 0.5);
  Osc carrier(carrier_hz, rng.uniform(0.0, 2.0 * M_PI), sr);
  Osc mod(mod_hz, rng.uniform(0.0, 2.0 * M_PI), sr);
  for (std::size_t i = 0; i < n; ++i) {
    const double env = 1.0 + depth * mod.next();
    sig[i] = amp * 0.5 * env * carrier.next();
    if ((i & 0xfff) == 0xfff) {
      carrier.renormalize();
      mod.renormalize();
    }
  }

  // band-limited noise: random-phase sinusoids drawn from the class band
  constexpr int kNoiseTones = 32;
  for (int tone = 0; tone < kNoiseTones; ++tone) {
    Osc osc(rng.uniform(recipe.band_lo_hz, recipe.band_hi_hz),
            rng.uniform(0.0, 2.0 * M_PI), sr);
    const double a = recipe.noise_level * rng.uniform(0.2, 1.0) / kNoiseTones * 8.0;
    for (std::size_t i = 0; i < n; ++i) {
      sig[i] += a * osc.next();
      if ((i & 0xfff) == 0xfff) osc.renormalize();
    }
  }

  // broadband floor so frames are never silent
  for (std::size_t i = 0; i < n; ++i) sig[i] += 0.01 * rng.normal();
  return sig;
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec,
                                   const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create output dir: " + out_dir.string());

  const auto counts = largest_remainder_counts(spec.n_total, spec.proportions);

  struct Item {
    std::size_t index;
    int cls;
  };
  std::vector<Item> items;
  items.reserve(spec.n_total);
  {
    std::size_t idx = 0;
    for (int c = 0; c < kNumClasses; ++c)
      for (std::size_t i = 0; i < counts[static_cast<std::size_t>(c)]; ++i)
        items.push_back({idx++, c});
  }

  DatasetManifest m;
  m.records.resize(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const int c = items[i].cls;
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%04zu", items[i].index);
    UtteranceRecord rec;
    rec.utterance_id = name;
    rec.wav_path = (out_dir / (std::string(name) + ".wav")).string();
    rec.label = static_cast<EmotionClass>(c);
    rec.session = static_cast<int>(items[i].index % 5) + 1;
    rec.speaker = items[i].index % 2 == 0 ? "M" : "F";
    rec.agreement = 3;
    m.records[i] = std::move(rec);
    ++m.counts[static_cast<std::size_t>(c)];
  }

  // per-file seeds depend only on (spec seed, file index): parallel-safe
  parallel_for(items.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto file_seed = splitmix64(spec.seed ^ (0x5e5e5e5eULL + items[i].index));
      const auto sig =
          synth_signal(spec.recipes[static_cast<std::size_t>(items[i].cls)], file_seed);
      const auto bytes = audio::encode_wav16(sig, audio::kSampleRate);
      audio::write_file(m.records[i].wav_path, bytes);
    }
  });

  save_manifest(m, out_dir / "manifest.csv");
  return m;
}

}  // namespace ser::data
