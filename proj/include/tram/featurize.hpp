#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tram/data_model.hpp"

namespace tram {

inline constexpr EpochSeconds kWindowSeconds = 600;
inline constexpr std::size_t kWindowsPerDay = 144;  // 24 h / 10 min
inline constexpr std::size_t kSequenceFeatures = 33;
inline constexpr std::size_t kDailyFeatures = 10;
inline constexpr EpochSeconds kDailyGridSeconds = 60;

/// Column names of the day-sequence matrix, in order.
[[nodiscard]] const std::array<std::string, kSequenceFeatures>& sequence_feature_names();
/// Column names of the daily statistics vector, in order.
[[nodiscard]] const std::array<std::string, kDailyFeatures>& daily_feature_names();

/// Regularly sampled channel. Missing entries hold 0.
struct DenseSeries {
  std::vector<double> values;
  std::vector<std::uint8_t> present;

  [[nodiscard]] std::size_t size() const { return values.size(); }
};

/// One value per `step` seconds over [start, end): each point takes the latest
/// sample at or before it; points before the first sample are missing.
[[nodiscard]] DenseSeries resample_forward_fill(const SensorStream& stream, std::size_t channel,
                                                EpochSeconds start, EpochSeconds end,
                                                EpochSeconds step = 1);

struct WindowStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  bool padded = true;  // no present values in the window

  bool operator==(const WindowStats&) const = default;
};

/// Statistics over present entries of consecutive windows; a short tail
/// window counts as a window with its missing remainder.
[[nodiscard]] std::vector<WindowStats> window_stats(const DenseSeries& series,
                                                    std::size_t window = kWindowSeconds);

/// Slot c is 1 iff category c occurs among present entries of the window.
/// Throws std::out_of_range on codes outside [0, n_categories).
[[nodiscard]] std::vector<std::vector<std::uint8_t>> one_hot_activity(
    const DenseSeries& series, std::size_t window = kWindowSeconds,
    int n_categories = kDefaultActivityCategories);

/// Raw streams of one user-day. Absent kinds are std::nullopt.
struct DayStreams {
  UserDay user_day;
  EpochSeconds day_start = 0;  // UTC instant of local midnight
  std::optional<SensorStream> accel;
  std::optional<SensorStream> gps;
  std::optional<SensorStream> heart_rate;
  std::optional<SensorStream> activity;

  [[nodiscard]] bool empty() const;
  [[nodiscard]] const std::optional<SensorStream>& get(SensorKind kind) const;
  [[nodiscard]] std::optional<SensorStream>& get(SensorKind kind);
};

struct DaySequence {
  UserDay user_day;
  std::vector<double> matrix;         // kWindowsPerDay x kSequenceFeatures, row-major
  std::vector<std::uint8_t> pad_mask;  // 1 = window holds real data

  [[nodiscard]] double at(std::size_t window, std::size_t feature) const {
    return matrix[window * kSequenceFeatures + feature];
  }
  bool operator==(const DaySequence&) const = default;
};

struct DailyStats {
  UserDay user_day;
  std::array<double, kDailyFeatures> values{};

  bool operator==(const DailyStats&) const = default;
};

/// 144 ten-minute windows. A stream only covers the seconds between its first
/// and last sample; windows outside every stream's coverage are padding.
/// Throws std::invalid_argument("empty day") if no stream has samples.
[[nodiscard]] DaySequence build_day_sequence(const DayStreams& day,
                                             int n_categories = kDefaultActivityCategories);

/// Minute grid, per-channel moments over present minutes, zero when a channel
/// is entirely missing.
[[nodiscard]] DailyStats build_daily_stats(const DayStreams& day,
                                           int n_categories = kDefaultActivityCategories);

/// Groups parsed streams into per-day bundles keyed by user-day.
[[nodiscard]] std::map<UserDay, DayStreams> group_by_day(const std::vector<SensorStream>& streams,
                                                         EpochSeconds tz_offset = 0);

void write_sequences_file(const std::filesystem::path& path,
                          const std::vector<DaySequence>& sequences);
[[nodiscard]] std::vector<DaySequence> read_sequences_file(const std::filesystem::path& path);
void write_daily_stats_file(const std::filesystem::path& path,
                            const std::vector<DailyStats>& stats);
[[nodiscard]] std::vector<DailyStats> read_daily_stats_file(const std::filesystem::path& path);

}  // namespace tram
