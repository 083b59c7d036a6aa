#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tram/data_model.hpp"

namespace tram {

inline constexpr std::size_t kNumLabels = 7;
inline constexpr std::array<const char*, kNumLabels> kLabelNames{"Q1", "Q2", "Q3", "S1",
                                                                 "S2", "S3", "S4"};

/// Sleep-metric thresholds in seconds / percent. Every comparison is strict.
inline constexpr std::int64_t kMinTotalSleep = 7 * 60 * 60;
inline constexpr std::int64_t kMaxTotalSleep = 9 * 60 * 60;
inline constexpr double kMinEfficiencyPercent = 85.0;
inline constexpr std::int64_t kMaxOnsetLatency = 30 * 60;
inline constexpr std::int64_t kMaxWakeAfterOnset = 20 * 60;

struct LabelVector {
  UserDay user_day;
  std::array<int, kNumLabels> values{};  // Q1 Q2 Q3 S1 S2 S3 S4

  bool operator==(const LabelVector&) const = default;
};

struct SLabels {
  int s1 = 0;
  int s2 = 0;
  int s3 = 0;
  int s4 = 0;

  bool operator==(const SLabels&) const = default;
};

/// Per-user mean survey responses, plus the global mean of all responses
/// used when a user has no training days.
struct UserMeans {
  std::map<std::string, std::array<double, 3>> per_user;
  std::array<double, 3> global{3.0, 3.0, 3.0};

  /// Throws std::out_of_range for unknown users.
  [[nodiscard]] const std::array<double, 3>& at(const std::string& user_id) const;
  /// Per-user mean when known, otherwise the global mean.
  [[nodiscard]] double threshold(const std::string& user_id, int question) const;

  void save(const std::filesystem::path& path) const;
  [[nodiscard]] static UserMeans load(const std::filesystem::path& path);
};

[[nodiscard]] UserMeans compute_user_means(const std::vector<SurveyResponse>& responses);

/// 1 iff the response is strictly above the user's mean.
[[nodiscard]] constexpr int q_label(double response, double mean) { return response > mean ? 1 : 0; }

[[nodiscard]] SLabels s_labels(const SleepSession& session);

/// Throws std::invalid_argument when either record is missing or keys
/// disagree, std::out_of_range when the user has no mean.
[[nodiscard]] LabelVector label_all(const UserDay& user_day,
                                    const std::optional<SurveyResponse>& survey,
                                    const std::optional<SleepSession>& session,
                                    const UserMeans& means);

void write_labels_file(const std::filesystem::path& path, const std::vector<LabelVector>& labels);
/// Reads `user_id,date,Q1..S4`; used for both truth and prediction files.
[[nodiscard]] std::vector<LabelVector> read_labels_file(const std::filesystem::path& path);

}  // namespace tram
