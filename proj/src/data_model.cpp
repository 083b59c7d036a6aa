#include "tram/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "tram/io.hpp"

namespace tram {

namespace {

// Howard Hinnant's civil-from-days / days-from-civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

Date civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

void expect_header(io::CsvReader& reader, const std::vector<std::string>& expected) {
  std::vector<std::string> fields;
  if (!reader.next(fields)) throw ParseError(reader.path().string(), 0, "empty file");
  if (fields != expected) {
    std::string want;
    for (const auto& f : expected) want += (want.empty() ? "" : ",") + f;
    throw ParseError(reader.path().string(), reader.line_number(), "expected header '" + want + "'");
  }
}

const std::vector<std::string>& sleep_header() {
  static const std::vector<std::string> header{
      "user_id",           "date",           "wakeupduration",  "deepsleepduration",
      "lightsleepduration", "remsleepduration", "durationtosleep", "durationtowakeup"};
  return header;
}

const std::vector<std::string>& survey_header() {
  static const std::vector<std::string> header{"user_id", "date", "q1", "q2", "q3"};
  return header;
}

}  // namespace

std::int64_t Date::days_since_epoch() const {
  return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
}

Date Date::from_days_since_epoch(std::int64_t days) { return civil_from_days(days); }

Date Date::parse(const std::string& text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw std::invalid_argument("bad date '" + text + "', expected YYYY-MM-DD");
  }
  Date d;
  d.year = static_cast<int>(io::parse_int(text.substr(0, 4)));
  d.month = static_cast<int>(io::parse_int(text.substr(5, 2)));
  d.day = static_cast<int>(io::parse_int(text.substr(8, 2)));
  if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31 ||
      from_days_since_epoch(d.days_since_epoch()) != d) {
    throw std::invalid_argument("bad date '" + text + "'");
  }
  return d;
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

std::string UserDay::to_string() const { return user_id + "@" + date.to_string(); }

std::string to_string(SensorKind kind) {
  switch (kind) {
    case SensorKind::Accel: return "accel";
    case SensorKind::Gps: return "gps";
    case SensorKind::HeartRate: return "heart_rate";
    case SensorKind::Activity: return "activity";
  }
  return "?";
}

SensorKind sensor_kind_from_string(const std::string& name) {
  for (auto kind : {SensorKind::Accel, SensorKind::Gps, SensorKind::HeartRate, SensorKind::Activity}) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown sensor kind '" + name + "'");
}

std::vector<std::string> channel_names(SensorKind kind) {
  switch (kind) {
    case SensorKind::Accel: return {"x", "y", "z"};
    case SensorKind::Gps: return {"lat", "lon"};
    case SensorKind::HeartRate: return {"hr"};
    case SensorKind::Activity: return {"activity"};
  }
  return {};
}

int SurveyResponse::question(int index) const {
  switch (index) {
    case 0: return q1;
    case 1: return q2;
    case 2: return q3;
    default: throw std::out_of_range("survey question index");
  }
}

ParseError::ParseError(const std::string& path, std::size_t line, const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

std::vector<SensorStream> parse_sensor_file(const std::filesystem::path& path, SensorKind kind,
                                            const SensorParseOptions& options) {
  io::CsvReader reader(path);
  const std::size_t arity = channel_count(kind);
  std::vector<std::string> fields;
  if (!reader.next(fields)) throw ParseError(path.string(), 0, "empty file");
  if (fields.size() != 2 + arity || fields[0] != "user_id" || fields[1] != "timestamp") {
    throw ParseError(path.string(), reader.line_number(),
                     "expected header 'user_id,timestamp' plus " + std::to_string(arity) +
                         " channel column(s) for " + to_string(kind));
  }

  // Per user: timestamp -> values; later rows overwrite earlier ones.
  std::map<std::string, std::map<EpochSeconds, std::array<double, kMaxChannels>>> by_user;
  while (reader.next(fields)) {
    const auto line = reader.line_number();
    if (fields.size() != 2 + arity) {
      throw ParseError(path.string(), line,
                       "expected " + std::to_string(2 + arity) + " columns, got " +
                           std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw ParseError(path.string(), line, "empty user_id");
    std::array<double, kMaxChannels> values{};
    EpochSeconds t = 0;
    try {
      t = io::parse_int(fields[1]);
      for (std::size_t c = 0; c < arity; ++c) values[c] = io::parse_double(fields[2 + c]);
    } catch (const std::invalid_argument& e) {
      throw ParseError(path.string(), line, e.what());
    }
    if (t < 0) throw ParseError(path.string(), line, "negative timestamp");
    for (std::size_t c = 0; c < arity; ++c) {
      if (!std::isfinite(values[c])) throw ParseError(path.string(), line, "non-finite value");
    }
    if (kind == SensorKind::Activity) {
      const double code = values[0];
      if (code < 0 || code != std::floor(code) || code >= options.activity_categories) {
        throw ParseError(path.string(), line,
                         "activity code must be an integer in [0," +
                             std::to_string(options.activity_categories) + ")");
      }
    }
    by_user[fields[0]][t] = values;
  }

  std::vector<SensorStream> streams;
  streams.reserve(by_user.size());
  for (auto& [user, samples] : by_user) {
    SensorStream s{user, kind, {}};
    s.samples.reserve(samples.size());
    for (const auto& [t, v] : samples) s.samples.push_back({t, v});
    streams.push_back(std::move(s));
  }
  return streams;
}

std::optional<std::string> validate(const SleepSession& s) {
  const std::pair<const char*, std::int64_t> fields[] = {
      {"wakeupduration", s.wakeupduration},         {"deepsleepduration", s.deepsleepduration},
      {"lightsleepduration", s.lightsleepduration}, {"remsleepduration", s.remsleepduration},
      {"durationtosleep", s.durationtosleep},       {"durationtowakeup", s.durationtowakeup}};
  for (const auto& [name, value] : fields) {
    if (value < 0) return std::string(name) + " is negative";
  }
  if (s.durationtosleep + s.durationtowakeup > s.wakeupduration) {
    return "durationtosleep + durationtowakeup exceeds wakeupduration";
  }
  return std::nullopt;
}

std::optional<std::string> validate(const SurveyResponse& r) {
  for (int q = 0; q < 3; ++q) {
    const int v = r.question(q);
    if (v < 1 || v > 5) return "q" + std::to_string(q + 1) + " outside [1,5]";
  }
  return std::nullopt;
}

ParseResult<SleepSession> parse_sleep_file(const std::filesystem::path& path) {
  io::CsvReader reader(path);
  expect_header(reader, sleep_header());
  ParseResult<SleepSession> result;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const auto line = reader.line_number();
    if (fields.size() != sleep_header().size()) {
      result.rejected.push_back({line, "wrong column count"});
      continue;
    }
    SleepSession s;
    try {
      s.user_id = fields[0];
      s.date = Date::parse(fields[1]);
      s.wakeupduration = io::parse_int(fields[2]);
      s.deepsleepduration = io::parse_int(fields[3]);
      s.lightsleepduration = io::parse_int(fields[4]);
      s.remsleepduration = io::parse_int(fields[5]);
      s.durationtosleep = io::parse_int(fields[6]);
      s.durationtowakeup = io::parse_int(fields[7]);
    } catch (const std::invalid_argument& e) {
      result.rejected.push_back({line, e.what()});
      continue;
    }
    if (auto problem = validate(s)) {
      result.rejected.push_back({line, *problem});
      continue;
    }
    result.records.push_back(std::move(s));
  }
  return result;
}

ParseResult<SurveyResponse> parse_survey_file(const std::filesystem::path& path) {
  io::CsvReader reader(path);
  expect_header(reader, survey_header());
  ParseResult<SurveyResponse> result;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const auto line = reader.line_number();
    if (fields.size() != survey_header().size()) {
      result.rejected.push_back({line, "wrong column count"});
      continue;
    }
    SurveyResponse r;
    try {
      r.user_id = fields[0];
      r.date = Date::parse(fields[1]);
      r.q1 = static_cast<int>(io::parse_int(fields[2]));
      r.q2 = static_cast<int>(io::parse_int(fields[3]));
      r.q3 = static_cast<int>(io::parse_int(fields[4]));
    } catch (const std::invalid_argument& e) {
      result.rejected.push_back({line, e.what()});
      continue;
    }
    if (auto problem = validate(r)) {
      result.rejected.push_back({line, *problem});
      continue;
    }
    result.records.push_back(std::move(r));
  }
  return result;
}

void write_sensor_file(const std::filesystem::path& path, SensorKind kind,
                       const std::vector<SensorStream>& streams) {
  io::write_atomically(path, [&](std::ostream& out) {
    out << "user_id,timestamp";
    for (const auto& name : channel_names(kind)) out << ',' << name;
    out << '\n';
    const std::size_t arity = channel_count(kind);
    for (const auto& stream : streams) {
      if (stream.kind != kind) throw std::invalid_argument("stream kind mismatch");
      for (const auto& s : stream.samples) {
        out << stream.user_id << ',' << s.time;
        for (std::size_t c = 0; c < arity; ++c) out << ',' << io::format_double(s.values[c]);
        out << '\n';
      }
    }
  });
}

void write_sleep_file(const std::filesystem::path& path, const std::vector<SleepSession>& sessions) {
  io::write_atomically(path, [&](std::ostream& out) {
    const auto& header = sleep_header();
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& s : sessions) {
      out << s.user_id << ',' << s.date.to_string() << ',' << s.wakeupduration << ','
          << s.deepsleepduration << ',' << s.lightsleepduration << ',' << s.remsleepduration << ','
          << s.durationtosleep << ',' << s.durationtowakeup << '\n';
    }
  });
}

void write_survey_file(const std::filesystem::path& path,
                       const std::vector<SurveyResponse>& responses) {
  io::write_atomically(path, [&](std::ostream& out) {
    out << "user_id,date,q1,q2,q3\n";
    for (const auto& r : responses) {
      out << r.user_id << ',' << r.date.to_string() << ',' << r.q1 << ',' << r.q2 << ',' << r.q3
          << '\n';
    }
  });
}

Date local_date(EpochSeconds t, EpochSeconds tz_offset) {
  return Date::from_days_since_epoch(floor_div(t + tz_offset, kSecondsPerDay));
}

EpochSeconds local_day_start(const Date& date, EpochSeconds tz_offset) {
  return date.days_since_epoch() * kSecondsPerDay - tz_offset;
}

std::map<UserDay, SensorStream> segment_by_day(const SensorStream& stream, EpochSeconds tz_offset) {
  std::map<UserDay, SensorStream> days;
  for (const auto& sample : stream.samples) {
    UserDay key{stream.user_id, local_date(sample.time, tz_offset)};
    auto [it, inserted] = days.try_emplace(key);
    if (inserted) {
      it->second.user_id = stream.user_id;
      it->second.kind = stream.kind;
    }
    it->second.samples.push_back(sample);
  }
  return days;
}

}  // namespace tram
