#include "generators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace tram::oracle {

DayStreams random_day(std::mt19937_64& rng, std::size_t max_samples) {
  DayStreams day;
  day.user_day = {"u" + std::to_string(rng() % 5), {2024, 5, 1 + static_cast<int>(rng() % 28)}};
  day.day_start = local_day_start(day.user_day.date, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t budget = 1 + rng() % max_samples;
  const SensorKind kinds[] = {SensorKind::Accel, SensorKind::Gps, SensorKind::HeartRate,
                              SensorKind::Activity};
  bool any = false;
  for (std::size_t k = 0; k < 4; ++k) {
    const bool last_chance = k == 3 && !any;
    if (!last_chance && unit(rng) < 0.3) continue;
    const std::size_t n = 1 + rng() % std::max<std::size_t>(1, budget / 4);
    // Either clustered in a random span or spread across the day.
    const EpochSeconds span_start = static_cast<EpochSeconds>(rng() % kSecondsPerDay);
    const EpochSeconds span_len =
        unit(rng) < 0.5 ? 1 + static_cast<EpochSeconds>(rng() % 7200) : kSecondsPerDay - span_start;
    std::set<EpochSeconds> times;
    for (std::size_t i = 0; i < n; ++i) {
      const auto offset = static_cast<EpochSeconds>(rng() % static_cast<std::uint64_t>(std::max<EpochSeconds>(1, span_len)));
      times.insert(std::min(span_start + offset, kSecondsPerDay - 1));
    }
    SensorStream stream{day.user_day.user_id, kinds[k], {}};
    for (auto t : times) {
      SensorSample s{day.day_start + t, {}};
      if (kinds[k] == SensorKind::Activity) {
        s.values[0] = static_cast<double>(rng() % 9);
      } else {
        for (std::size_t c = 0; c < channel_count(kinds[k]); ++c) s.values[c] = 3.0 * noise(rng) + c;
      }
      stream.samples.push_back(s);
    }
    day.get(kinds[k]) = std::move(stream);
    any = true;
  }
  return day;
}

std::vector<DaySequence> sinusoid_sequences(std::size_t count, std::mt19937_64& rng, bool with_padding) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<DaySequence> out;
  for (std::size_t n = 0; n < count; ++n) {
    DaySequence seq{{"s" + std::to_string(n), {2024, 1, 1}},
                    std::vector<double>(kWindowsPerDay * kSequenceFeatures, 0.0),
                    std::vector<std::uint8_t>(kWindowsPerDay, 0)};
    std::size_t first = 0, last = kWindowsPerDay;
    if (with_padding) {
      first = rng() % 24;
      last = kWindowsPerDay - rng() % 24;
    }
    for (std::size_t f = 0; f < kSequenceFeatures; ++f) {
      const double period = 12.0 + 60.0 * unit(rng);
      const double phase = 2.0 * std::numbers::pi * unit(rng);
      const double amp = 0.5 + unit(rng);
      const double offset = unit(rng) - 0.5;
      for (std::size_t w = first; w < last; ++w) {
        seq.matrix[w * kSequenceFeatures + f] =
            offset + amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(w) / period + phase) +
            noise(rng);
      }
    }
    for (std::size_t w = first; w < last; ++w) seq.pad_mask[w] = 1;
    out.push_back(std::move(seq));
  }
  return out;
}

nn::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale) {
  nn::Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace tram::oracle
