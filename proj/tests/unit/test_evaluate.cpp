#include <doctest.h>

#include <nlohmann/json.hpp>
#include <random>

#include "oracles.hpp"
#include "test_support.hpp"
#include "tram/evaluate.hpp"

using namespace tram;

TEST_CASE("f1_macro examples") {
  CHECK(f1_macro({0, 1, 0, 1}, {0, 1, 0, 1}) == 1.0);
  CHECK(f1_macro({0, 1}, {1, 1}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(f1_macro({0, 0}, {0, 0}) == 1.0);
  CHECK(f1_macro({1, 1}, {0, 0}) == 0.0);
  CHECK_THROWS_AS((void)f1_macro({0, 1}, {0}), std::invalid_argument);
  CHECK_THROWS_AS((void)f1_macro({}, {}), std::invalid_argument);
  CHECK_THROWS_AS((void)f1_macro({2}, {0}), std::invalid_argument);
}

TEST_CASE("f1_macro matches the definition-level oracle") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    // Skewed rates make single-class and absent-class cases common.
    const double rate_t = (rng() % 5) / 4.0, rate_p = (rng() % 5) / 4.0;
    std::bernoulli_distribution bt(rate_t), bp(rate_p);
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = bt(rng);
      p[i] = bp(rng);
    }
    const double got = f1_macro(t, p);
    CHECK(got == oracle::f1_macro(t, p));
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
    std::vector<int> tf(n), pf(n);
    for (std::size_t i = 0; i < n; ++i) {
      tf[i] = 1 - t[i];
      pf[i] = 1 - p[i];
    }
    CHECK(f1_macro(tf, pf) == got);
  }
}

TEST_CASE("competition_score") {
  CHECK(competition_score(std::vector<double>(7, 0.61)) == doctest::Approx(6.1).epsilon(1e-12));
  CHECK(competition_score(std::vector<double>(7, 1.0)) == 10.0);
  CHECK(competition_score(std::vector<double>(7, 0.0)) == 0.0);
  CHECK_THROWS_AS((void)competition_score(std::vector<double>(6, 0.5)), std::invalid_argument);
  CHECK_THROWS_AS((void)competition_score({0, 0, 0, 0, 0, 0, 1.5}), std::invalid_argument);
}

namespace {

std::vector<LabelVector> balanced_truth() {
  std::vector<LabelVector> rows;
  for (int d = 0; d < 8; ++d) {
    LabelVector v{{d < 4 ? "a" : "b", Date::from_days_since_epoch(19000 + d)}, {}};
    for (std::size_t i = 0; i < kNumLabels; ++i) v.values[i] = (d + static_cast<int>(i)) % 2;
    rows.push_back(v);
  }
  return rows;
}

}  // namespace

TEST_CASE("score_labels") {
  const auto truth = balanced_truth();
  SUBCASE("perfect") {
    const auto r = score_labels(truth, truth);
    CHECK(r.aggregate == 10.0);
    CHECK(r.confusion[0].total() == 8);
  }
  SUBCASE("complement on balanced data") {
    auto pred = truth;
    for (auto& v : pred)
      for (auto& x : v.values) x = 1 - x;
    CHECK(score_labels(truth, pred).aggregate == 0.0);
  }
  SUBCASE("order of prediction rows is irrelevant") {
    auto pred = truth;
    std::reverse(pred.begin(), pred.end());
    pred[2].values[4] = 1 - pred[2].values[4];
    auto sorted = truth;
    sorted[5].values[4] = 1 - sorted[5].values[4];
    CHECK(score_labels(truth, pred) == score_labels(truth, sorted));
  }
  SUBCASE("missing prediction names the key") {
    auto pred = truth;
    pred.erase(pred.begin() + 3);
    const std::string key = truth[3].user_day.to_string();
    CHECK_THROWS_WITH_AS((void)score_labels(truth, pred), doctest::Contains(key.c_str()), std::invalid_argument);
  }
  SUBCASE("extra prediction") {
    auto pred = truth;
    pred.push_back({{"zz", {2024, 1, 1}}, {}});
    CHECK_THROWS_WITH_AS((void)score_labels(truth, pred), doctest::Contains("zz"), std::invalid_argument);
  }
  SUBCASE("json and table") {
    const auto r = score_labels(truth, truth);
    const auto j = r.to_json();
    CHECK(j["aggregate"] == 10.0);
    CHECK(j["per_label"]["S4"] == 1.0);
    CHECK(j["confusion"]["Q1"]["tp"] == 4);
    CHECK(r.table().find("10.00 / 10") != std::string::npos);
  }
}

TEST_CASE("evaluate_run reads label files") {
  tram::test::TempDir dir("evaluate");
  const auto truth = balanced_truth();
  write_labels_file(dir.file("truth.csv"), truth);
  write_labels_file(dir.file("pred.csv"), truth);
  const auto a = evaluate_run(dir.file("truth.csv"), dir.file("pred.csv"));
  CHECK(a.aggregate == 10.0);
  CHECK(evaluate_run(dir.file("truth.csv"), dir.file("pred.csv")) == a);
}
