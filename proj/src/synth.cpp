#include "tram/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <numbers>
#include <random>
#include <stdexcept>

namespace tram {

namespace {

constexpr EpochSeconds kAccelStep = 20;
constexpr EpochSeconds kHeartRateStep = 60;
constexpr EpochSeconds kGpsStep = 300;
constexpr EpochSeconds kActivityStep = 600;
constexpr double kOscillationPeriod = 250.0;

struct DayLatent {
  std::array<int, 3> answers{};
  std::int64_t total_sleep = 0;
  std::int64_t to_sleep = 0;
  std::int64_t to_wake = 0;
  std::int64_t waso = 0;
  int activity_base = 0;
};

std::int64_t uniform_minutes(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
  std::uniform_int_distribution<std::int64_t> d(lo / 60, hi / 60);
  return d(rng) * 60;
}

SensorStream& stream_for(std::vector<SensorStream>& streams, const std::string& user, SensorKind kind) {
  if (streams.empty() || streams.back().user_id != user) streams.push_back({user, kind, {}});
  return streams.back();
}

}  // namespace

void SynthSpec::validate() const {
  if (n_users < 1) throw std::invalid_argument("synth: n_users must be >= 1");
  if (n_days < 1) throw std::invalid_argument("synth: n_days must be >= 1");
  if (baseline_min < 1 || baseline_max > 5 || baseline_min > baseline_max) {
    throw std::invalid_argument("synth: baseline range must lie within 1..5");
  }
  if (!(sensor_noise >= 0.0) || !(survey_noise >= 0.0)) throw std::invalid_argument("synth: noise must be >= 0");
  if (active_start < 0 || active_end > 86400 || active_start >= active_end) {
    throw std::invalid_argument("synth: active window must satisfy 0 <= start < end <= 86400");
  }
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j, SynthSpec s) {
  if (!j.is_object()) throw std::invalid_argument("synth: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "n_users") s.n_users = value.get<int>();
    else if (key == "n_days") s.n_days = value.get<int>();
    else if (key == "start_date") s.start_date = Date::parse(value.get<std::string>());
    else if (key == "tz_offset") s.tz_offset = value.get<EpochSeconds>();
    else if (key == "seed") s.seed = value.get<std::uint64_t>();
    else if (key == "baseline_min") s.baseline_min = value.get<int>();
    else if (key == "baseline_max") s.baseline_max = value.get<int>();
    else if (key == "sensor_noise") s.sensor_noise = value.get<double>();
    else if (key == "survey_noise") s.survey_noise = value.get<double>();
    else if (key == "active_start") s.active_start = value.get<EpochSeconds>();
    else if (key == "active_end") s.active_end = value.get<EpochSeconds>();
    else throw std::invalid_argument("synth: unknown key '" + key + "'");
  }
  s.validate();
  return s;
}

nlohmann::json SynthSpec::to_json() const {
  return {{"n_users", n_users},           {"n_days", n_days},
          {"start_date", start_date.to_string()}, {"tz_offset", tz_offset},
          {"seed", seed},                 {"baseline_min", baseline_min},
          {"baseline_max", baseline_max}, {"sensor_noise", sensor_noise},
          {"survey_noise", survey_noise}, {"active_start", active_start},
          {"active_end", active_end}};
}

SynthData generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> offset(-2, 2);
  const auto noise = [&](double scale) { return scale > 0.0 ? scale * gauss(rng) : 0.0; };

  SynthData out;
  const std::int64_t first_day = spec.start_date.days_since_epoch();
  for (int u = 0; u < spec.n_users; ++u) {
    char name[16];
    std::snprintf(name, sizeof name, "u%02d", u + 1);
    const std::string user = name;
    const int baseline = std::uniform_int_distribution<int>(spec.baseline_min, spec.baseline_max)(rng);
    const int intensity = std::uniform_int_distribution<int>(0, 6)(rng);

    std::vector<DayLatent> days(static_cast<std::size_t>(spec.n_days));
    for (auto& day : days) {
      for (auto& a : day.answers) {
        const double mood = baseline + offset(rng) + noise(spec.survey_noise);
        a = static_cast<int>(std::clamp(std::lround(mood), 1L, 5L));
      }
      day.total_sleep = uniform_minutes(rng, 6 * 3600, 10 * 3600);
      day.to_sleep = uniform_minutes(rng, 300, 3300);
      day.to_wake = uniform_minutes(rng, 60, 900);
      day.waso = uniform_minutes(rng, 300, 2100);
      day.activity_base = intensity;
    }

    std::array<double, 3> mean{};
    for (const auto& day : days)
      for (std::size_t q = 0; q < 3; ++q) mean[q] += day.answers[q];
    for (auto& m : mean) m /= static_cast<double>(days.size());

    for (std::size_t d = 0; d < days.size(); ++d) {
      const auto& day = days[d];
      const Date date = Date::from_days_since_epoch(first_day + static_cast<std::int64_t>(d));
      const EpochSeconds midnight = local_day_start(date, spec.tz_offset);

      const std::int64_t wake = day.to_sleep + day.to_wake + day.waso;
      const std::int64_t deep = day.total_sleep / 5;
      const std::int64_t rem = day.total_sleep / 4;
      SleepSession session{user, date, wake, deep, day.total_sleep - deep - rem, rem, day.to_sleep, day.to_wake};
      out.sleep.push_back(session);
      out.survey.push_back({user, date, day.answers[0], day.answers[1], day.answers[2]});

      const double t = static_cast<double>(day.total_sleep);
      const double efficiency = t / (static_cast<double>(wake) + t) * 100.0;
      LabelVector labels{{user, date}, {}};
      for (std::size_t q = 0; q < 3; ++q) labels.values[q] = day.answers[q] > mean[q] ? 1 : 0;
      labels.values[3] = (25200 < day.total_sleep && day.total_sleep < 32400) ? 1 : 0;
      labels.values[4] = efficiency > 85.0 ? 1 : 0;
      labels.values[5] = day.to_sleep < 1800 ? 1 : 0;
      labels.values[6] = day.waso < 1200 ? 1 : 0;
      out.labels.push_back(labels);

      const double acc_x = t / 3600.0 - 8.0;
      const double acc_y = (efficiency - 85.0) / 5.0;
      const double amplitude = 0.25 * day.answers[2];
      const double acc_z = 9.8 + 0.5 * (day.answers[1] - 3);
      const double hr = 50.0 + 6.0 * day.answers[0];
      const double lat = 36.35 + 0.1 * static_cast<double>(day.waso) / 3600.0;
      const double lon = 127.38 + 0.1 * static_cast<double>(day.to_sleep) / 3600.0;

      auto& accel = stream_for(out.accel, user, SensorKind::Accel);
      auto& heart = stream_for(out.heart_rate, user, SensorKind::HeartRate);
      auto& gps = stream_for(out.gps, user, SensorKind::Gps);
      auto& activity = stream_for(out.activity, user, SensorKind::Activity);
      for (EpochSeconds s = spec.active_start; s < spec.active_end; s += kAccelStep) {
        const double wave = std::sin(2.0 * std::numbers::pi * static_cast<double>(s) / kOscillationPeriod);
        accel.samples.push_back({midnight + s,
                                 {acc_x + noise(spec.sensor_noise), acc_y + amplitude * wave + noise(spec.sensor_noise),
                                  acc_z + noise(spec.sensor_noise)}});
        if (s % kHeartRateStep == 0) heart.samples.push_back({midnight + s, {hr + noise(spec.sensor_noise), 0, 0}});
        if (s % kGpsStep == 0) {
          gps.samples.push_back(
              {midnight + s, {lat + 0.01 * noise(spec.sensor_noise), lon + 0.01 * noise(spec.sensor_noise), 0}});
        }
        if (s % kActivityStep == 0) {
          const int code = day.activity_base + static_cast<int>(rng() % 3);
          activity.samples.push_back({midnight + s, {static_cast<double>(code), 0, 0}});
        }
      }
    }
  }
  return out;
}

void write_synthetic(const SynthData& data, const DataFiles& files) {
  std::filesystem::create_directories(files.dir);
  write_sensor_file(files.sensor(SensorKind::Accel), SensorKind::Accel, data.accel);
  write_sensor_file(files.sensor(SensorKind::Gps), SensorKind::Gps, data.gps);
  write_sensor_file(files.sensor(SensorKind::HeartRate), SensorKind::HeartRate, data.heart_rate);
  write_sensor_file(files.sensor(SensorKind::Activity), SensorKind::Activity, data.activity);
  write_sleep_file(files.sleep(), data.sleep);
  write_survey_file(files.survey(), data.survey);
  write_labels_file(files.truth_labels(), data.labels);
}

}  // namespace tram
