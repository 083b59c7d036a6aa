#include "tram/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tram/io.hpp"

namespace tram {

namespace {

constexpr std::array<SensorKind, 4> kKinds{SensorKind::Accel, SensorKind::Gps,
                                           SensorKind::HeartRate, SensorKind::Activity};

// Dense one-second series for a stream over one day. Coverage stops at the
// last sample so a day with a short recording does not extend to midnight.
DenseSeries day_series(const SensorStream& stream, std::size_t channel, EpochSeconds day_start,
                       EpochSeconds span) {
  DenseSeries series{std::vector<double>(static_cast<std::size_t>(span), 0.0),
                     std::vector<std::uint8_t>(static_cast<std::size_t>(span), 0)};
  if (stream.samples.empty()) return series;
  const EpochSeconds covered_end =
      std::clamp(stream.samples.back().time + 1, day_start, day_start + span);
  const auto covered = resample_forward_fill(stream, channel, day_start, covered_end);
  std::copy(covered.values.begin(), covered.values.end(), series.values.begin());
  std::copy(covered.present.begin(), covered.present.end(), series.present.begin());
  return series;
}

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

template <typename Values, typename Present>
Moments moments(const Values& values, const Present& present, std::size_t begin, std::size_t end) {
  Moments m;
  double sum = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    if (!present[i]) continue;
    const double v = values[i];
    if (m.count == 0) {
      m.min = v;
      m.max = v;
    } else {
      m.min = std::min(m.min, v);
      m.max = std::max(m.max, v);
    }
    sum += v;
    ++m.count;
  }
  if (m.count == 0) return m;
  const double n = static_cast<double>(m.count);
  // Rounding can push the quotient one ulp outside the observed range.
  m.mean = std::clamp(sum / n, m.min, m.max);
  double sq = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    if (!present[i]) continue;
    const double d = values[i] - m.mean;
    sq += d * d;
  }
  m.variance = sq / n;
  return m;
}

void check_code(double code, int n_categories) {
  if (code < 0 || code >= n_categories || code != std::floor(code)) {
    throw std::out_of_range("activity code " + io::format_double(code) + " outside [0," +
                            std::to_string(n_categories) + ")");
  }
}

}  // namespace

const std::array<std::string, kSequenceFeatures>& sequence_feature_names() {
  static const auto names = [] {
    std::array<std::string, kSequenceFeatures> out;
    std::size_t i = 0;
    const char* stats[] = {"mean", "std", "min", "max"};
    for (const char* ch : {"acc_x", "acc_y", "acc_z", "gps_lat", "gps_lon", "hr"}) {
      for (const char* st : stats) out[i++] = std::string(ch) + "_" + st;
    }
    for (int c = 0; c < 9; ++c) out[i++] = "activity_" + std::to_string(c);
    return out;
  }();
  return names;
}

const std::array<std::string, kDailyFeatures>& daily_feature_names() {
  static const std::array<std::string, kDailyFeatures> names{
      "acc_x_mean", "acc_x_var", "acc_y_mean", "acc_y_var", "acc_z_mean",
      "acc_z_var",  "activity_mode", "hr_mean", "gps_lat_mean", "gps_lon_mean"};
  return names;
}

DenseSeries resample_forward_fill(const SensorStream& stream, std::size_t channel,
                                  EpochSeconds start, EpochSeconds end, EpochSeconds step) {
  if (step <= 0) throw std::invalid_argument("resample step must be positive");
  if (channel >= channel_count(stream.kind)) throw std::out_of_range("channel index");
  const EpochSeconds span = std::max<EpochSeconds>(0, end - start);
  const auto n = static_cast<std::size_t>((span + step - 1) / step);
  DenseSeries out{std::vector<double>(n, 0.0), std::vector<std::uint8_t>(n, 0)};
  const auto& samples = stream.samples;
  std::size_t next = 0;  // first sample with time > current point
  for (std::size_t i = 0; i < n; ++i) {
    const EpochSeconds t = start + static_cast<EpochSeconds>(i) * step;
    while (next < samples.size() && samples[next].time <= t) ++next;
    if (next == 0) continue;
    out.values[i] = samples[next - 1].values[channel];
    out.present[i] = 1;
  }
  return out;
}

std::vector<WindowStats> window_stats(const DenseSeries& series, std::size_t window) {
  if (window == 0) throw std::invalid_argument("window must be positive");
  const std::size_t n_windows = (series.size() + window - 1) / window;
  std::vector<WindowStats> out(n_windows);
  for (std::size_t w = 0; w < n_windows; ++w) {
    const std::size_t begin = w * window;
    const std::size_t end = std::min(series.size(), begin + window);
    const auto m = moments(series.values, series.present, begin, end);
    if (m.count == 0) continue;
    out[w] = {m.mean, std::sqrt(m.variance), m.min, m.max, false};
  }
  return out;
}

std::vector<std::vector<std::uint8_t>> one_hot_activity(const DenseSeries& series,
                                                        std::size_t window, int n_categories) {
  if (window == 0) throw std::invalid_argument("window must be positive");
  const std::size_t n_windows = (series.size() + window - 1) / window;
  std::vector<std::vector<std::uint8_t>> out(
      n_windows, std::vector<std::uint8_t>(static_cast<std::size_t>(n_categories), 0));
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!series.present[i]) continue;
    check_code(series.values[i], n_categories);
    out[i / window][static_cast<std::size_t>(series.values[i])] = 1;
  }
  return out;
}

bool DayStreams::empty() const {
  for (auto kind : kKinds) {
    const auto& s = get(kind);
    if (s && !s->samples.empty()) return false;
  }
  return true;
}

const std::optional<SensorStream>& DayStreams::get(SensorKind kind) const {
  switch (kind) {
    case SensorKind::Accel: return accel;
    case SensorKind::Gps: return gps;
    case SensorKind::HeartRate: return heart_rate;
    case SensorKind::Activity: return activity;
  }
  throw std::invalid_argument("sensor kind");
}

std::optional<SensorStream>& DayStreams::get(SensorKind kind) {
  return const_cast<std::optional<SensorStream>&>(std::as_const(*this).get(kind));
}

DaySequence build_day_sequence(const DayStreams& day, int n_categories) {
  if (day.empty()) throw std::invalid_argument("empty day: " + day.user_day.to_string());
  if (n_categories != 9) {
    throw std::invalid_argument("the 33-column day sequence layout needs 9 activity categories");
  }
  DaySequence seq{day.user_day, std::vector<double>(kWindowsPerDay * kSequenceFeatures, 0.0),
                  std::vector<std::uint8_t>(kWindowsPerDay, 0)};

  std::size_t column = 0;
  for (auto kind : {SensorKind::Accel, SensorKind::Gps, SensorKind::HeartRate}) {
    const auto& stream = day.get(kind);
    for (std::size_t ch = 0; ch < channel_count(kind); ++ch, column += 4) {
      if (!stream) continue;
      const auto stats = window_stats(day_series(*stream, ch, day.day_start, kSecondsPerDay));
      for (std::size_t w = 0; w < kWindowsPerDay; ++w) {
        if (stats[w].padded) continue;
        double* row = &seq.matrix[w * kSequenceFeatures + column];
        row[0] = stats[w].mean;
        row[1] = stats[w].std;
        row[2] = stats[w].min;
        row[3] = stats[w].max;
        seq.pad_mask[w] = 1;
      }
    }
  }
  if (const auto& stream = day.activity) {
    const auto series = day_series(*stream, 0, day.day_start, kSecondsPerDay);
    const auto hot = one_hot_activity(series, kWindowSeconds, n_categories);
    for (std::size_t w = 0; w < kWindowsPerDay; ++w) {
      const bool any = std::any_of(series.present.begin() + static_cast<std::ptrdiff_t>(w * kWindowSeconds),
                                   series.present.begin() + static_cast<std::ptrdiff_t>((w + 1) * kWindowSeconds),
                                   [](std::uint8_t p) { return p != 0; });
      if (!any) continue;
      seq.pad_mask[w] = 1;
      for (std::size_t c = 0; c < hot[w].size(); ++c) {
        seq.matrix[w * kSequenceFeatures + column + c] = hot[w][c];
      }
    }
  }
  return seq;
}

DailyStats build_daily_stats(const DayStreams& day, int n_categories) {
  DailyStats out{day.user_day, {}};
  constexpr auto minutes = static_cast<std::size_t>(kSecondsPerDay / kDailyGridSeconds);
  constexpr auto grid = static_cast<std::size_t>(kDailyGridSeconds);

  // Each minute takes the value at its last covered second.
  auto minute_series = [&](const SensorStream& stream, std::size_t ch) {
    const auto dense = day_series(stream, ch, day.day_start, kSecondsPerDay);
    DenseSeries m{std::vector<double>(minutes, 0.0), std::vector<std::uint8_t>(minutes, 0)};
    for (std::size_t i = 0; i < minutes; ++i) {
      for (std::size_t s = (i + 1) * grid; s-- > i * grid;) {
        if (dense.present[s]) {
          m.values[i] = dense.values[s];
          m.present[i] = 1;
          break;
        }
      }
    }
    return m;
  };

  if (day.accel) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const auto m = minute_series(*day.accel, ch);
      const auto mo = moments(m.values, m.present, 0, minutes);
      out.values[2 * ch] = mo.mean;
      out.values[2 * ch + 1] = mo.variance;
    }
  }
  if (day.activity) {
    const auto m = minute_series(*day.activity, 0);
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_categories), 0);
    for (std::size_t i = 0; i < minutes; ++i) {
      if (!m.present[i]) continue;
      check_code(m.values[i], n_categories);
      ++counts[static_cast<std::size_t>(m.values[i])];
    }
    const auto best = std::max_element(counts.begin(), counts.end());  // first max = smallest code
    if (*best > 0) out.values[6] = static_cast<double>(best - counts.begin());
  }
  if (day.heart_rate) {
    const auto m = minute_series(*day.heart_rate, 0);
    out.values[7] = moments(m.values, m.present, 0, minutes).mean;
  }
  if (day.gps) {
    for (std::size_t ch = 0; ch < 2; ++ch) {
      const auto m = minute_series(*day.gps, ch);
      out.values[8 + ch] = moments(m.values, m.present, 0, minutes).mean;
    }
  }
  return out;
}

std::map<UserDay, DayStreams> group_by_day(const std::vector<SensorStream>& streams,
                                           EpochSeconds tz_offset) {
  std::map<UserDay, DayStreams> days;
  for (const auto& stream : streams) {
    for (auto& [key, part] : segment_by_day(stream, tz_offset)) {
      auto& day = days[key];
      day.user_day = key;
      day.day_start = local_day_start(key.date, tz_offset);
      auto& slot = day.get(stream.kind);
      if (slot) throw std::invalid_argument("duplicate " + to_string(stream.kind) + " stream for " +
                                            key.to_string());
      slot = std::move(part);
    }
  }
  return days;
}

void write_sequences_file(const std::filesystem::path& path,
                          const std::vector<DaySequence>& sequences) {
  io::write_atomically(path, [&](std::ostream& out) {
    out << "user_id,date,window,pad";
    for (const auto& name : sequence_feature_names()) out << ',' << name;
    out << '\n';
    for (const auto& seq : sequences) {
      for (std::size_t w = 0; w < kWindowsPerDay; ++w) {
        out << seq.user_day.user_id << ',' << seq.user_day.date.to_string() << ',' << w << ','
            << (seq.pad_mask[w] ? 0 : 1);
        for (std::size_t f = 0; f < kSequenceFeatures; ++f) out << ',' << io::format_double(seq.at(w, f));
        out << '\n';
      }
    }
  });
}

std::vector<DaySequence> read_sequences_file(const std::filesystem::path& path) {
  io::CsvReader reader(path);
  std::vector<std::string> fields;
  if (!reader.next(fields) || fields.size() != 4 + kSequenceFeatures || fields[0] != "user_id") {
    throw ParseError(path.string(), reader.line_number(), "not a day-sequence file");
  }
  std::vector<DaySequence> out;
  while (reader.next(fields)) {
    const auto line = reader.line_number();
    if (fields.size() != 4 + kSequenceFeatures) throw ParseError(path.string(), line, "wrong column count");
    try {
      const UserDay key{fields[0], Date::parse(fields[1])};
      const auto w = static_cast<std::size_t>(io::parse_int(fields[2]));
      if (w == 0) {
        out.push_back({key, std::vector<double>(kWindowsPerDay * kSequenceFeatures, 0.0),
                       std::vector<std::uint8_t>(kWindowsPerDay, 0)});
      }
      if (out.empty() || out.back().user_day != key || w >= kWindowsPerDay) {
        throw std::invalid_argument("windows must run 0..143 per user-day");
      }
      auto& seq = out.back();
      seq.pad_mask[w] = io::parse_int(fields[3]) == 0 ? 1 : 0;
      for (std::size_t f = 0; f < kSequenceFeatures; ++f) {
        seq.matrix[w * kSequenceFeatures + f] = io::parse_double(fields[4 + f]);
      }
    } catch (const std::invalid_argument& e) {
      throw ParseError(path.string(), line, e.what());
    }
  }
  return out;
}

void write_daily_stats_file(const std::filesystem::path& path, const std::vector<DailyStats>& stats) {
  io::write_atomically(path, [&](std::ostream& out) {
    out << "user_id,date";
    for (const auto& name : daily_feature_names()) out << ',' << name;
    out << '\n';
    for (const auto& s : stats) {
      out << s.user_day.user_id << ',' << s.user_day.date.to_string();
      for (double v : s.values) out << ',' << io::format_double(v);
      out << '\n';
    }
  });
}

std::vector<DailyStats> read_daily_stats_file(const std::filesystem::path& path) {
  io::CsvReader reader(path);
  std::vector<std::string> fields;
  if (!reader.next(fields) || fields.size() != 2 + kDailyFeatures || fields[0] != "user_id") {
    throw ParseError(path.string(), reader.line_number(), "not a daily-stats file");
  }
  std::vector<DailyStats> out;
  while (reader.next(fields)) {
    if (fields.size() != 2 + kDailyFeatures) {
      throw ParseError(path.string(), reader.line_number(), "wrong column count");
    }
    try {
      DailyStats s{{fields[0], Date::parse(fields[1])}, {}};
      for (std::size_t f = 0; f < kDailyFeatures; ++f) s.values[f] = io::parse_double(fields[2 + f]);
      out.push_back(std::move(s));
    } catch (const std::invalid_argument& e) {
      throw ParseError(path.string(), reader.line_number(), e.what());
    }
  }
  return out;
}

}  // namespace tram
