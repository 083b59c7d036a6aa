#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tram {

/// Seconds since the Unix epoch, UTC.
using EpochSeconds = std::int64_t;

inline constexpr EpochSeconds kSecondsPerDay = 86400;

/// Proleptic Gregorian calendar date.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  auto operator<=>(const Date&) const = default;

  /// Days since 1970-01-01.
  [[nodiscard]] std::int64_t days_since_epoch() const;
  [[nodiscard]] static Date from_days_since_epoch(std::int64_t days);
  /// Parses `YYYY-MM-DD`; throws std::invalid_argument on bad input.
  [[nodiscard]] static Date parse(const std::string& text);
  [[nodiscard]] std::string to_string() const;
};

struct UserDay {
  std::string user_id;
  Date date;

  auto operator<=>(const UserDay&) const = default;
  [[nodiscard]] std::string to_string() const;
};

enum class SensorKind { Accel, Gps, HeartRate, Activity };

/// Number of value columns carried by a sensor kind.
[[nodiscard]] constexpr std::size_t channel_count(SensorKind kind) {
  switch (kind) {
    case SensorKind::Accel: return 3;
    case SensorKind::Gps: return 2;
    case SensorKind::HeartRate: return 1;
    case SensorKind::Activity: return 1;
  }
  return 0;
}

[[nodiscard]] std::string to_string(SensorKind kind);
[[nodiscard]] SensorKind sensor_kind_from_string(const std::string& name);
[[nodiscard]] std::vector<std::string> channel_names(SensorKind kind);

inline constexpr std::size_t kMaxChannels = 3;
inline constexpr int kDefaultActivityCategories = 9;

struct SensorSample {
  EpochSeconds time = 0;
  /// Only the first channel_count(kind) entries are meaningful. Activity
  /// codes are stored as exact small integers.
  std::array<double, kMaxChannels> values{};

  bool operator==(const SensorSample&) const = default;
};

struct SensorStream {
  std::string user_id;
  SensorKind kind = SensorKind::Accel;
  std::vector<SensorSample> samples;  // sorted by time, unique times

  bool operator==(const SensorStream&) const = default;
};

struct SleepSession {
  std::string user_id;
  Date date;
  std::int64_t wakeupduration = 0;
  std::int64_t deepsleepduration = 0;
  std::int64_t lightsleepduration = 0;
  std::int64_t remsleepduration = 0;
  std::int64_t durationtosleep = 0;
  std::int64_t durationtowakeup = 0;

  bool operator==(const SleepSession&) const = default;
  [[nodiscard]] UserDay key() const { return {user_id, date}; }
};

struct SurveyResponse {
  std::string user_id;
  Date date;
  int q1 = 3;
  int q2 = 3;
  int q3 = 3;

  bool operator==(const SurveyResponse&) const = default;
  [[nodiscard]] UserDay key() const { return {user_id, date}; }
  [[nodiscard]] int question(int index) const;  // index 0..2
};

/// Malformed input that cannot be skipped (bad header, bad sensor row).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what);
  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A row that failed validation and was skipped.
struct RejectedRow {
  std::size_t line = 0;
  std::string reason;
};

template <typename T>
struct ParseResult {
  std::vector<T> records;
  std::vector<RejectedRow> rejected;
};

struct SensorParseOptions {
  int activity_categories = kDefaultActivityCategories;
};

/// One stream per user; samples sorted, duplicate timestamps keep the last
/// occurrence in file order.
[[nodiscard]] std::vector<SensorStream> parse_sensor_file(const std::filesystem::path& path,
                                                          SensorKind kind,
                                                          const SensorParseOptions& options = {});

/// Returns a description of why the session is invalid, or nullopt.
[[nodiscard]] std::optional<std::string> validate(const SleepSession& session);
[[nodiscard]] std::optional<std::string> validate(const SurveyResponse& response);

[[nodiscard]] ParseResult<SleepSession> parse_sleep_file(const std::filesystem::path& path);
[[nodiscard]] ParseResult<SurveyResponse> parse_survey_file(const std::filesystem::path& path);

void write_sensor_file(const std::filesystem::path& path, SensorKind kind,
                       const std::vector<SensorStream>& streams);
void write_sleep_file(const std::filesystem::path& path, const std::vector<SleepSession>& sessions);
void write_survey_file(const std::filesystem::path& path,
                       const std::vector<SurveyResponse>& responses);

/// Local calendar date of an instant, with tz_offset added to UTC.
[[nodiscard]] Date local_date(EpochSeconds t, EpochSeconds tz_offset);
/// UTC instant of local midnight starting `date`.
[[nodiscard]] EpochSeconds local_day_start(const Date& date, EpochSeconds tz_offset);

/// Partitions samples into local calendar days [00:00, 24:00).
[[nodiscard]] std::map<UserDay, SensorStream> segment_by_day(const SensorStream& stream,
                                                             EpochSeconds tz_offset = 0);

}  // namespace tram
