#include <doctest.h>

#include <cmath>
#include <random>

#include "generators.hpp"
#include "oracles.hpp"
#include "test_support.hpp"
#include "tram/featurize.hpp"

using namespace tram;

namespace {

SensorStream hr_stream(std::vector<std::pair<EpochSeconds, double>> samples) {
  SensorStream s{"u1", SensorKind::HeartRate, {}};
  for (auto [t, v] : samples) s.samples.push_back({t, {v}});
  return s;
}

DenseSeries series(std::vector<double> values, std::vector<std::uint8_t> present) {
  return {std::move(values), std::move(present)};
}

DayStreams empty_day() {
  DayStreams day;
  day.user_day = {"u1", {2024, 1, 1}};
  day.day_start = local_day_start(day.user_day.date, 0);
  return day;
}

}  // namespace

TEST_CASE("resample_forward_fill") {
  SUBCASE("forward fill") {
    const auto out = resample_forward_fill(hr_stream({{0, 5}, {3, 7}}), 0, 0, 5);
    CHECK(out.values == std::vector<double>{5, 5, 5, 7, 7});
    CHECK(out.present == std::vector<std::uint8_t>{1, 1, 1, 1, 1});
  }
  SUBCASE("leading gap is zero and missing") {
    const auto out = resample_forward_fill(hr_stream({{2, 1}}), 0, 0, 4);
    CHECK(out.values == std::vector<double>{0, 0, 1, 1});
    CHECK(out.present == std::vector<std::uint8_t>{0, 0, 1, 1});
  }
  SUBCASE("empty stream") {
    const auto out = resample_forward_fill(hr_stream({}), 0, 0, 3);
    CHECK(out.values == std::vector<double>{0, 0, 0});
    CHECK(out.present == std::vector<std::uint8_t>{0, 0, 0});
  }
  SUBCASE("coarser step") {
    const auto out = resample_forward_fill(hr_stream({{0, 1}, {61, 2}}), 0, 0, 180, 60);
    CHECK(out.values == std::vector<double>{1, 1, 2});
  }
}

TEST_CASE("window_stats") {
  SUBCASE("partial window uses present seconds only, population std") {
    const auto out = window_stats(series({1, 2, 3, 0, 0}, {1, 1, 1, 0, 0}), 5);
    REQUIRE(out.size() == 1);
    CHECK(out[0].mean == 2.0);
    CHECK(out[0].std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    CHECK(out[0].std == doctest::Approx(0.8165).epsilon(1e-4));
    CHECK(out[0].min == 1.0);
    CHECK(out[0].max == 3.0);
    CHECK_FALSE(out[0].padded);
  }
  SUBCASE("constant window") {
    const auto out = window_stats(series({4, 4, 4, 4}, {1, 1, 1, 1}), 4);
    CHECK(out[0] == WindowStats{4, 0, 4, 4, false});
  }
  SUBCASE("all-missing window is padded zeros") {
    const auto out = window_stats(series({0, 0, 9, 9}, {0, 0, 1, 1}), 2);
    CHECK(out[0] == WindowStats{0, 0, 0, 0, true});
    CHECK_FALSE(out[1].padded);
  }
  SUBCASE("tail window shorter than the window length") {
    const auto out = window_stats(series({1, 1, 1, 5, 7}, {1, 1, 1, 1, 1}), 3);
    REQUIRE(out.size() == 2);
    CHECK(out[1].mean == 6.0);
  }
}

TEST_CASE("one_hot_activity") {
  CHECK(one_hot_activity(series({2, 2, 2}, {1, 1, 1}), 3)[0] ==
        std::vector<std::uint8_t>{0, 0, 1, 0, 0, 0, 0, 0, 0});
  CHECK(one_hot_activity(series({1, 3, 1}, {1, 1, 1}), 3)[0] ==
        std::vector<std::uint8_t>{0, 1, 0, 1, 0, 0, 0, 0, 0});
  CHECK(one_hot_activity(series({0, 0, 0}, {0, 0, 0}), 3)[0] == std::vector<std::uint8_t>(9, 0));
  CHECK_THROWS_AS((void)one_hot_activity(series({9}, {1}), 1), std::out_of_range);
}

TEST_CASE("build_day_sequence") {
  SUBCASE("data only between 08:00 and 09:00 populates windows 48-53") {
    auto day = empty_day();
    SensorStream acc{"u1", SensorKind::Accel, {}};
    for (EpochSeconds t = 8 * 3600; t < 9 * 3600; t += 30) {
      acc.samples.push_back({day.day_start + t, {0.1, 0.2, 0.3}});
    }
    day.accel = acc;
    const auto seq = build_day_sequence(day);
    for (std::size_t w = 0; w < kWindowsPerDay; ++w) {
      CHECK_MESSAGE(seq.pad_mask[w] == (w >= 48 && w <= 53 ? 1 : 0), "window ", w);
    }
  }

  SUBCASE("full coverage") {
    auto day = empty_day();
    SensorStream hr{"u1", SensorKind::HeartRate, {}};
    for (EpochSeconds t = 0; t < kSecondsPerDay; t += 45) hr.samples.push_back({day.day_start + t, {60.0 + t % 7}});
    day.heart_rate = hr;
    const auto seq = build_day_sequence(day);
    CHECK(std::all_of(seq.pad_mask.begin(), seq.pad_mask.end(), [](auto p) { return p == 1; }));
    CHECK(std::all_of(seq.matrix.begin(), seq.matrix.end(), [](double v) { return std::isfinite(v); }));
  }

  SUBCASE("accel-only day leaves other columns zero") {
    auto day = empty_day();
    SensorStream acc{"u1", SensorKind::Accel, {}};
    for (EpochSeconds t = 0; t < kSecondsPerDay; t += 100) acc.samples.push_back({day.day_start + t, {1, 2, 3}});
    day.accel = acc;
    const auto seq = build_day_sequence(day);
    for (std::size_t w = 0; w < kWindowsPerDay; ++w) {
      CHECK(seq.at(w, 0) == 1.0);
      CHECK(seq.at(w, 8) == 3.0);
      for (std::size_t f = 12; f < kSequenceFeatures; ++f) CHECK(seq.at(w, f) == 0.0);
    }
  }

  SUBCASE("empty day") {
    CHECK_THROWS_WITH_AS((void)build_day_sequence(empty_day()), doctest::Contains("empty day"),
                         std::invalid_argument);
  }

  SUBCASE("single sample at midnight covers only the first second") {
    auto day = empty_day();
    day.heart_rate = hr_stream({{day.day_start, 72.0}});
    const auto seq = build_day_sequence(day);
    CHECK(seq.pad_mask[0] == 1);
    CHECK(seq.at(0, 20) == 72.0);
    CHECK(seq.at(0, 21) == 0.0);
    CHECK(seq.pad_mask[1] == 0);
  }
}

TEST_CASE("build_day_sequence matches the materialising oracle") {
  std::mt19937_64 rng(20240501);
  for (int trial = 0; trial < 30; ++trial) {
    const auto day = oracle::random_day(rng, 2000);
    const auto main = build_day_sequence(day);
    const auto ref = oracle::featurize(day);
    CHECK(main == ref);
    // min <= mean <= max and one-hot row sums.
    for (std::size_t w = 0; w < kWindowsPerDay; ++w) {
      if (!main.pad_mask[w]) {
        for (std::size_t f = 0; f < kSequenceFeatures; ++f) CHECK(main.at(w, f) == 0.0);
        continue;
      }
      for (std::size_t c = 0; c < 6; ++c) {
        CHECK(main.at(w, 4 * c + 2) <= main.at(w, 4 * c));
        CHECK(main.at(w, 4 * c) <= main.at(w, 4 * c + 3));
        CHECK(main.at(w, 4 * c + 1) >= 0.0);
      }
      double hot = 0;
      for (std::size_t c = 24; c < 33; ++c) hot += main.at(w, c);
      CHECK(hot <= 9.0);
    }
  }
}

TEST_CASE("build_day_sequence is deterministic") {
  std::mt19937_64 rng(1);
  const auto day = oracle::random_day(rng);
  CHECK(build_day_sequence(day) == build_day_sequence(day));
}

TEST_CASE("build_daily_stats") {
  SUBCASE("constant accel gives zero variance") {
    auto day = empty_day();
    SensorStream acc{"u1", SensorKind::Accel, {}};
    for (EpochSeconds t = 0; t < kSecondsPerDay; t += 10) acc.samples.push_back({day.day_start + t, {0.5, 0.5, 0.5}});
    day.accel = acc;
    const auto st = build_daily_stats(day);
    CHECK(st.values[0] == 0.5);
    CHECK(st.values[1] == 0.0);
  }
  SUBCASE("activity mode ties go to the smallest code") {
    auto day = empty_day();
    SensorStream act{"u1", SensorKind::Activity, {}};
    for (EpochSeconds m = 0; m < 1400; ++m) act.samples.push_back({day.day_start + m * 60, {m < 700 ? 2.0 : 1.0}});
    day.activity = act;
    const auto st = build_daily_stats(day);
    CHECK(st.values[6] == 1.0);
  }
  SUBCASE("missing heart rate imputes zero") {
    auto day = empty_day();
    day.gps = SensorStream{"u1", SensorKind::Gps, {{day.day_start + 5, {37.5, 127.0}}}};
    const auto st = build_daily_stats(day);
    CHECK(st.values[7] == 0.0);
    CHECK(st.values[8] == 37.5);
    CHECK(st.values[9] == 127.0);
  }
  SUBCASE("minute grid takes the last covered second") {
    auto day = empty_day();
    day.heart_rate = hr_stream({{day.day_start + 10, 60.0}, {day.day_start + 50, 80.0}, {day.day_start + 70, 100.0}});
    // minute 0 -> 80, minute 1 -> 100 (covered up to second 70 only)
    CHECK(build_daily_stats(day).values[7] == 90.0);
  }
}

TEST_CASE("sequence and daily-stats files round-trip exactly") {
  tram::test::TempDir dir("features");
  std::mt19937_64 rng(9);
  std::vector<DaySequence> seqs;
  std::vector<DailyStats> stats;
  for (int i = 0; i < 3; ++i) {
    auto day = oracle::random_day(rng, 500);
    day.user_day.date = {2024, 2, 1 + i};
    seqs.push_back(build_day_sequence(day));
    stats.push_back(build_daily_stats(day));
  }
  write_sequences_file(dir.file("seq.csv"), seqs);
  write_daily_stats_file(dir.file("daily.csv"), stats);
  CHECK(read_sequences_file(dir.file("seq.csv")) == seqs);
  CHECK(read_daily_stats_file(dir.file("daily.csv")) == stats);
}
