#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <vector>

#include "tram/data_model.hpp"
#include "tram/labeling.hpp"

namespace tram {

/// Synthetic cohort. Each user-day has latent survey answers and sleep
/// quantities; sensor channels encode them:
///   Q1 -> heart-rate level, Q2 -> acc_z level, Q3 -> acc_y oscillation amplitude,
///   total sleep -> acc_x level, sleep efficiency -> acc_y level,
///   onset latency -> gps lon offset, wake after onset -> gps lat offset.
struct SynthSpec {
  int n_users = 4;
  int n_days = 30;
  Date start_date{2024, 3, 1};
  EpochSeconds tz_offset = 0;
  std::uint64_t seed = 42;
  /// Per-user mood baseline is drawn uniformly from this integer range.
  int baseline_min = 2;
  int baseline_max = 4;
  /// Std of Gaussian noise added to every sensor value (in sensor units).
  double sensor_noise = 0.0;
  /// Std of Gaussian noise added to the latent mood before rounding to 1-5.
  double survey_noise = 0.0;
  /// Daytime recording window, local seconds after midnight.
  EpochSeconds active_start = 8 * 3600;
  EpochSeconds active_end = 22 * 3600;

  void validate() const;
  static SynthSpec from_json(const nlohmann::json& j, SynthSpec base);
  [[nodiscard]] nlohmann::json to_json() const;
};

struct SynthData {
  std::vector<SensorStream> accel;
  std::vector<SensorStream> gps;
  std::vector<SensorStream> heart_rate;
  std::vector<SensorStream> activity;
  std::vector<SleepSession> sleep;
  std::vector<SurveyResponse> survey;
  /// Labels computed from the latents with per-user means over all days.
  std::vector<LabelVector> labels;
};

/// Deterministic in `spec`. Throws std::invalid_argument on a bad spec.
[[nodiscard]] SynthData generate_synthetic(const SynthSpec& spec);

/// File names used inside a data directory.
struct DataFiles {
  std::filesystem::path dir;
  [[nodiscard]] std::filesystem::path sensor(SensorKind kind) const { return dir / (to_string(kind) + ".csv"); }
  [[nodiscard]] std::filesystem::path sleep() const { return dir / "sleep.csv"; }
  [[nodiscard]] std::filesystem::path survey() const { return dir / "survey.csv"; }
  [[nodiscard]] std::filesystem::path truth_labels() const { return dir / "truth_labels.csv"; }
};

void write_synthetic(const SynthData& data, const DataFiles& files);

}  // namespace tram
