#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ser/common.hpp"

namespace ser::data {

// Fixed class order: [Neutral, Happiness, Sadness, Anger].
inline constexpr int kNumClasses = 4;

enum class EmotionClass : int { kNeutral = 0, kHappiness = 1, kSadness = 2, kAnger = 3 };

const char* class_name(EmotionClass c);
std::optional<EmotionClass> parse_kept_label(const std::string& s);
bool is_known_raw_label(const std::string& s);

struct UtteranceRecord {
  std::string utterance_id;
  std::string wav_path;
  EmotionClass label = EmotionClass::kNeutral;
  int session = 1;       // 1..5
  std::string speaker;   // M | F
  int agreement = 0;     // annotator-agreement count, >= 2 after filtering
};

struct DatasetManifest {
  std::vector<UtteranceRecord> records;
  std::array<std::size_t, 4> counts = {0, 0, 0, 0};
  std::size_t size() const { return records.size(); }
};

// CSV header: utterance_id,wav_path,label,session,speaker,agreement,topic_type
// Drops non-improvised rows, labels outside the four kept classes, and
// agreement < 2. A label that is not one of the ten known raw classes is a
// parse error carrying the row number.
DatasetManifest load_manifest(const std::filesystem::path& csv_path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& csv_path);

// Per-class percentages (sum 100 within rounding). Empty manifest throws.
std::array<double, 4> class_distribution(const DatasetManifest& m);

struct FoldAssignment {
  int k = 5;
  std::vector<int> fold_of;  // parallel to manifest.records
  std::uint64_t seed = 0;
};

// Within each class, records are shuffled by seed then dealt round-robin,
// so per-class fold counts differ by at most 1. A class with fewer than k
// members raises a usage_error naming the class.
FoldAssignment stratified_kfold(const DatasetManifest& m, int k, std::uint64_t seed);

// Speaker-independent alternative: fold = session - 1 (requires k == 5).
FoldAssignment session_kfold(const DatasetManifest& m);

struct ClassRecipe {
  double band_lo_hz = 100.0;
  double band_hi_hz = 500.0;
  double mod_rate_hz = 3.0;
  double noise_level = 0.1;
};

struct SyntheticSpec {
  std::size_t n_total = 100;
  std::array<double, 4> proportions = {0.488, 0.123, 0.269, 0.12};
  std::array<ClassRecipe, 4> recipes;
  std::uint64_t seed = 0;

  static SyntheticSpec defaults();
  void validate() const;  // throws usage_error
};

// Exact integer apportionment of n by proportions (largest remainder).
std::array<std::size_t, 4> largest_remainder_counts(
    std::size_t n, const std::array<double, 4>& proportions);

// Writes n_total six-second 16-bit mono WAVs at 22050 Hz plus manifest.csv
// into out_dir. Byte-identical for identical spec + seed.
DatasetManifest generate_synthetic(const SyntheticSpec& spec,
                                   const std::filesystem::path& out_dir);

// One synthetic clip (exposed so tests can probe separability).
std::vector<double> synth_signal(const ClassRecipe& recipe, std::uint64_t file_seed);

}  // namespace ser::data
