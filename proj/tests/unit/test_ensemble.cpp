#include <doctest.h>

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <random>

#include "oracles.hpp"
#include "test_support.hpp"
#include "tram/ensemble.hpp"

using namespace tram;

namespace {

struct Data {
  std::vector<FeatureRow> x;
  std::vector<int> y;
};

Data labelled_rows(std::mt19937_64& rng, std::size_t n, std::size_t nf) {
  std::normal_distribution<double> g(0.0, 1.0);
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureRow row(nf);
    for (auto& v : row) v = g(rng);
    d.y.push_back(row[0] + 0.5 * g(rng) > 0 ? 1 : 0);
    d.x.push_back(std::move(row));
  }
  d.y[0] = 0;
  d.y[1] = 1;
  return d;
}

// Two well separated 2-D blobs.
Data separable(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 0.4);
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double c = label ? 2.0 : -2.0;
    d.x.push_back({c + g(rng), c + g(rng)});
    d.y.push_back(label);
  }
  return d;
}

TrainedClassifier with_state(ClassifierKind kind, ClassifierState state, std::size_t nf) {
  TrainedClassifier c;
  c.kind = kind;
  c.state = std::move(state);
  c.n_features = nf;
  return c;
}

Tree leaf(double v) { return Tree{{-1}, {0.0}, {-1}, {-1}, {v}}; }

EnsembleParams small_params() {
  EnsembleParams p;
  p.forest_trees = 20;
  p.boosting_stages = 30;
  return p;
}

}  // namespace

TEST_CASE("impute_zeros") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(impute_zeros({{1.0, nan, 2.0}}) == std::vector<FeatureRow>{{1.0, 0.0, 2.0}});
  CHECK(impute_zeros({{1.5, -2.0}}) == std::vector<FeatureRow>{{1.5, -2.0}});
  CHECK(impute_zeros({{nan, nan}}) == std::vector<FeatureRow>{{0.0, 0.0}});
}

TEST_CASE("every family separates two points") {
  const std::vector<FeatureRow> x{{0, 0, 0}, {1, 1, 1}};
  const std::vector<int> y{0, 1};
  for (auto kind : kAllClassifierKinds) {
    auto params = small_params();
    params.knn_k = 1;
    const auto c = fit(kind, x, y, params);
    CHECK_MESSAGE(c.predict(x[0]) == 0, to_string(kind));
    CHECK_MESSAGE(c.predict(x[1]) == 1, to_string(kind));
  }
}

TEST_CASE("XOR") {
  const std::vector<FeatureRow> x{{0, 0}, {1, 1}, {0, 1}, {1, 0}};
  const std::vector<int> y{0, 0, 1, 1};
  const auto accuracy = [&](const TrainedClassifier& c) {
    int ok = 0;
    for (std::size_t i = 0; i < 4; ++i) ok += c.predict(x[i]) == y[i];
    return ok / 4.0;
  };
  CHECK(accuracy(fit(ClassifierKind::DecisionTree, x, y)) == 1.0);
  CHECK(accuracy(fit(ClassifierKind::SupportVectorMachine, x, y)) == 1.0);
  CHECK(accuracy(fit(ClassifierKind::LogisticRegression, x, y)) <= 0.75);
}

TEST_CASE("k nearest neighbours") {
  SUBCASE("k = 1 on a training point") {
    EnsembleParams p;
    p.knn_k = 1;
    const auto c = fit(ClassifierKind::KNearestNeighbors, {{0, 0}, {5, 5}, {1, 0}}, {0, 1, 1}, p);
    CHECK(c.predict_proba({5, 5}).second == 1.0);
    CHECK(c.predict_proba({0, 0}).second == 0.0);
  }
  SUBCASE("neighbour labels 1,1,1,0,0 give 0.6") {
    const auto c = fit(ClassifierKind::KNearestNeighbors,
                       {{0}, {1}, {2}, {3}, {4}, {100}}, {1, 1, 1, 0, 0, 0});
    CHECK(c.predict_proba({2}).second == 0.6);
  }
  SUBCASE("distance ties go to the lower index") {
    EnsembleParams p;
    p.knn_k = 1;
    const auto c = fit(ClassifierKind::KNearestNeighbors, {{-1}, {1}}, {1, 0}, p);
    CHECK(c.predict_proba({0}).second == 1.0);
  }
  SUBCASE("agrees with the exhaustive oracle on 100 random datasets") {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> coarse(-3, 3);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 5 + rng() % 196;
      Data d;
      for (std::size_t i = 0; i < n; ++i) {
        // Integer grid so that exact distance ties are common.
        d.x.push_back({double(coarse(rng)), double(coarse(rng)), double(coarse(rng))});
        d.y.push_back(static_cast<int>(rng() % 2));
      }
      d.y[0] = 0;
      d.y[1] = 1;
      EnsembleParams p;
      p.knn_k = 1 + rng() % 7;
      const auto c = fit(ClassifierKind::KNearestNeighbors, d.x, d.y, p);
      for (int q = 0; q < 10; ++q) {
        const FeatureRow query{double(coarse(rng)), double(coarse(rng)), double(coarse(rng))};
        CHECK(c.predict_proba(query).second == oracle::knn_p1(d.x, d.y, query, p.knn_k));
      }
    }
  }
}

TEST_CASE("predict_proba definitions") {
  SUBCASE("forest vote fraction") {
    RandomForestModel forest;
    for (int t = 0; t < 100; ++t) forest.trees.push_back(leaf(t < 80 ? 1.0 : 0.0));
    const auto c = with_state(ClassifierKind::RandomForest, forest, 2);
    CHECK(c.predict_proba({0, 0}).second == 0.8);
    CHECK(c.predict_proba({0, 0}).first == doctest::Approx(0.2));
  }
  SUBCASE("zero-weight logistic regression") {
    const auto c = with_state(ClassifierKind::LogisticRegression, LogisticModel{{0, 0}, {1, 1}, {0, 0}, 0.0, 0}, 2);
    CHECK(c.predict_proba({3, -7}) == std::pair<double, double>{0.5, 0.5});
  }
  SUBCASE("non-finite or wrong-width input") {
    const auto c = fit(ClassifierKind::DecisionTree, {{0.0}, {1.0}}, {0, 1});
    CHECK_THROWS_AS((void)c.predict_proba({std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS((void)c.predict_proba({INFINITY}), std::invalid_argument);
    CHECK_THROWS_AS((void)c.predict_proba({1.0, 2.0}), std::invalid_argument);
  }
  SUBCASE("probability axioms on random data") {
    std::mt19937_64 rng(4);
    const auto d = labelled_rows(rng, 60, 4);
    for (auto kind : kAllClassifierKinds) {
      const auto c = fit(kind, d.x, d.y, small_params());
      const auto probe = labelled_rows(rng, 30, 4);
      for (const auto& x : probe.x) {
        const auto [p0, p1] = c.predict_proba(x);
        CHECK(p0 >= 0.0);
        CHECK(p1 >= 0.0);
        CHECK(p0 <= 1.0);
        CHECK(p1 <= 1.0);
        CHECK(std::abs(p0 + p1 - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("single-class training data gives a constant classifier") {
  const auto c = fit(ClassifierKind::SupportVectorMachine, {{1, 2}, {3, 4}}, {1, 1});
  CHECK(std::holds_alternative<ConstantModel>(c.state));
  REQUIRE(c.warning.has_value());
  CHECK(c.warning->find("constant") != std::string::npos);
  CHECK(c.predict_proba({0, 0}).second == 1.0);
}

TEST_CASE("forest with one unsampled tree equals the decision tree") {
  std::mt19937_64 rng(5);
  const auto d = labelled_rows(rng, 80, 5);
  EnsembleParams p;
  p.forest_trees = 1;
  p.forest_bootstrap = false;
  p.forest_max_features = 5;
  const auto forest = fit(ClassifierKind::RandomForest, d.x, d.y, p);
  const auto tree = fit(ClassifierKind::DecisionTree, d.x, d.y, p);
  CHECK(std::get<RandomForestModel>(forest.state).trees.front() == std::get<DecisionTreeModel>(tree.state).tree);
  const auto probe = labelled_rows(rng, 100, 5);
  for (const auto& x : probe.x) CHECK(forest.predict(x) == tree.predict(x));
}

TEST_CASE("decision tree memorises distinct points") {
  std::mt19937_64 rng(6);
  const auto d = labelled_rows(rng, 50, 3);
  const auto c = fit(ClassifierKind::DecisionTree, d.x, d.y);
  for (std::size_t i = 0; i < d.x.size(); ++i) CHECK(c.predict(d.x[i]) == d.y[i]);
}

TEST_CASE("gradient boosting training loss never increases") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto d = labelled_rows(rng, 40 + 10 * trial, 3);
    const auto c = fit(ClassifierKind::GradientBoosting, d.x, d.y);
    const auto& loss = std::get<GradientBoostingModel>(c.state).train_loss;
    REQUIRE(loss.size() == 100);
    for (std::size_t s = 1; s < loss.size(); ++s) CHECK(loss[s] <= loss[s - 1] + 1e-12);
  }
}

TEST_CASE("SVM") {
  SUBCASE("separable blobs: zero training errors and KKT within tolerance") {
    std::mt19937_64 rng(8);
    const auto d = separable(rng, 50);
    const auto c = fit(ClassifierKind::SupportVectorMachine, d.x, d.y);
    const auto& m = std::get<SvmModel>(c.state);
    for (std::size_t i = 0; i < d.x.size(); ++i) CHECK((m.decision(d.x[i]) > 0) == (d.y[i] == 1));
    CHECK(m.max_kkt_violation <= 1e-3);
  }
  SUBCASE("KKT on noisy small datasets") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 5; ++trial) {
      const auto d = labelled_rows(rng, 20 + 20 * trial, 3);
      const auto c = fit(ClassifierKind::SupportVectorMachine, d.x, d.y);
      CHECK(std::get<SvmModel>(c.state).max_kkt_violation <= 1e-3);
    }
  }
  SUBCASE("default gamma") {
    const std::vector<FeatureRow> x{{0, 0}, {2, 2}};
    const auto c = fit(ClassifierKind::SupportVectorMachine, x, {0, 1});
    // Var over all entries = 1, two features.
    CHECK(std::get<SvmModel>(c.state).gamma == 0.5);
  }
}

TEST_CASE("voting") {
  CHECK(soft_vote(std::vector<double>{0.9, 0.9, 0.9, 0.2, 0.2, 0.2}).label == 1);
  CHECK(soft_vote(std::vector<double>{0.9, 0.9, 0.9, 0.2, 0.2, 0.2}).p1 == doctest::Approx(0.55));
  CHECK(soft_vote(std::vector<double>(6, 0.5)).label == 0);
  CHECK(soft_vote(std::vector<double>{0, 0, 0, 0, 0, 1}).label == 0);
  CHECK(hard_vote({1, 1, 0}) == 1);
  CHECK(hard_vote({0, 1}) == 0);
  CHECK(hard_vote({0, 0, 0, 1}) == 0);
  CHECK_THROWS_AS((void)hard_vote({}), std::invalid_argument);

  std::mt19937_64 rng(10);
  const auto d = labelled_rows(rng, 40, 3);
  const auto member = fit(ClassifierKind::LogisticRegression, d.x, d.y);
  const std::vector<TrainedClassifier> six(6, member);
  for (const auto& x : d.x) CHECK(soft_vote(six, x).label == member.predict(x));
}

TEST_CASE("fit_multi_output") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TabularDataset data;
  for (int i = 0; i < 80; ++i) {
    FeatureRow row(kDailyFeatures);
    for (auto& v : row) v = u(rng);
    data.x.push_back(row);
    data.y.push_back({row[0] > 0.5, row[2] > 0.3, row[5] > 0.6, row[8] > 0.4});
    data.keys.push_back({"u", Date::from_days_since_epoch(19000 + i)});
  }
  const auto model = fit_multi_output(data, small_params());
  CHECK(model.feature_names.size() == kDailyFeatures);
  for (std::size_t s = 0; s < kNumSLabels; ++s) {
    REQUIRE(model.labels[s].members.size() == 6);
    int ok = 0;
    for (std::size_t i = 0; i < data.size(); ++i) ok += model.labels[s].predict(data.x[i]).label == data.y[i][s];
    CHECK(ok >= 0.95 * static_cast<double>(data.size()));
  }

  SUBCASE("permuting label columns permutes the ensembles") {
    auto swapped = data;
    for (auto& y : swapped.y) std::swap(y[0], y[3]);
    const auto other = fit_multi_output(swapped, small_params());
    CHECK(to_json(other)["labels"][0]["members"] == to_json(model)["labels"][3]["members"]);
    CHECK(to_json(other)["labels"][3]["members"] == to_json(model)["labels"][0]["members"]);
  }
  SUBCASE("seeded refits are identical") {
    CHECK(to_json(fit_multi_output(data, small_params())) == to_json(model));
  }
  SUBCASE("bundle round trip") {
    tram::test::TempDir dir("ensemble");
    save_ensemble(model, dir.file("e.json"));
    const auto back = load_ensemble(dir.file("e.json"));
    CHECK(to_json(back) == to_json(model));
    for (const auto& x : data.x) {
      const auto a = model.predict(x), b = back.predict(x);
      for (std::size_t s = 0; s < kNumSLabels; ++s) CHECK(a[s].p1 == b[s].p1);
    }
    auto j = to_json(model);
    j["version"] = 7;
    CHECK_THROWS_WITH_AS((void)multi_output_from_json(j), doctest::Contains("version 7"), std::runtime_error);
  }
  SUBCASE("one-row dataset") {
    TabularDataset one;
    one.x = {data.x[0]};
    one.y = {{1, 0, 1, 0}};
    one.keys = {data.keys[0]};
    const auto m = fit_multi_output(one, small_params());
    CHECK(m.warnings().size() == 24);
    CHECK(m.predict(data.x[5])[0].label == 1);
    CHECK(m.predict(data.x[5])[1].label == 0);
  }
}

TEST_CASE("make_dataset joins on user-day") {
  std::vector<DailyStats> stats{{{"a", {2024, 1, 1}}, {}}, {{"a", {2024, 1, 2}}, {}}, {{"b", {2024, 1, 1}}, {}}};
  stats[0].values[0] = std::nan("");
  std::vector<LabelVector> labels{{{"b", {2024, 1, 1}}, {1, 1, 1, 1, 0, 1, 0}},
                                  {{"a", {2024, 1, 1}}, {0, 0, 0, 0, 1, 1, 1}}};
  const auto d = make_dataset(stats, labels);
  REQUIRE(d.size() == 2);
  CHECK(d.keys[0].user_id == "a");
  CHECK(d.x[0][0] == 0.0);
  CHECK(d.y[0] == std::array<int, 4>{0, 1, 1, 1});
  CHECK(d.y[1] == std::array<int, 4>{1, 0, 1, 0});
}
