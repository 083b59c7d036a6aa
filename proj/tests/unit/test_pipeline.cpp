#include <doctest.h>

#include <map>
#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "tram/io.hpp"
#include "tram/pipeline.hpp"

using namespace tram;
namespace fs = std::filesystem;

namespace {

PipelineConfig tiny_config(const tram::test::TempDir& dir) {
  auto c = PipelineConfig::from_json(nlohmann::json::parse(R"({
    "synth": {"n_users": 2, "n_days": 6},
    "tst": {"d_model": 8, "n_heads": 2, "n_layers": 1, "ff_dim": 16, "batch_size": 4,
            "pretrain_epochs": 2, "finetune_epochs": 2, "finetune_lr": 0.001, "conv_kernel": 3},
    "ensemble": {"forest_trees": 5, "boosting_stages": 5, "knn_k": 3}
  })"));
  c.paths.data_dir = dir.file("data");
  c.paths.work_dir = dir.file("work");
  return c;
}

void quiet(const std::string&) {}

}  // namespace

TEST_CASE("synthetic cohort") {
  SynthSpec spec;
  const auto data = generate_synthetic(spec);
  CHECK(data.survey.size() == 120);
  CHECK(data.sleep.size() == 120);
  CHECK(data.labels.size() == 120);
  CHECK(data.accel.size() == 4);

  SUBCASE("files pass ingestion") {
    tram::test::TempDir dir("synth");
    write_synthetic(data, {dir.path()});
    const auto sleep = parse_sleep_file(dir.file("sleep.csv"));
    const auto survey = parse_survey_file(dir.file("survey.csv"));
    CHECK(sleep.rejected.empty());
    CHECK(survey.rejected.empty());
    CHECK(sleep.records == data.sleep);
    CHECK(survey.records == data.survey);
    CHECK(parse_sensor_file(dir.file("heart_rate.csv"), SensorKind::HeartRate) == data.heart_rate);
  }
  SUBCASE("same seed gives byte-identical files") {
    tram::test::TempDir a("synth_a"), b("synth_b");
    write_synthetic(generate_synthetic(spec), {a.path()});
    write_synthetic(generate_synthetic(spec), {b.path()});
    for (const char* f : {"accel.csv", "gps.csv", "heart_rate.csv", "activity.csv", "sleep.csv", "survey.csv"}) {
      CHECK(io::read_file(a.file(f)) == io::read_file(b.file(f)));
    }
    spec.seed = 43;
    CHECK(generate_synthetic(spec).survey != data.survey);
  }
  SUBCASE("noiseless heart rate is a function of the Q1 answer") {
    std::map<UserDay, int> q1;
    for (const auto& r : data.survey) q1[r.key()] = r.q1;
    for (const auto& stream : data.heart_rate) {
      for (const auto& s : stream.samples) {
        CHECK(s.values[0] == 50.0 + 6.0 * q1.at({stream.user_id, local_date(s.time, 0)}));
      }
    }
  }
  SUBCASE("labels match the labeling module") {
    const auto means = compute_user_means(data.survey);
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
      CHECK(label_all(data.labels[i].user_day, data.survey[i], data.sleep[i], means) == data.labels[i]);
    }
  }
  SUBCASE("bad specs") {
    spec.n_users = 0;
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
    spec.n_users = 1;
    spec.n_days = 0;
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
    CHECK_THROWS_AS(SynthSpec::from_json(nlohmann::json{{"n_user", 3}}, {}), std::invalid_argument);
  }
}

TEST_CASE("pipeline config") {
  const auto c = PipelineConfig::from_json(nlohmann::json::parse(R"({
    "seed": 7, "tz_offset": 32400, "paths": {"work_dir": "w", "predictions": "out/p.csv"},
    "split": {"train": ["u01@2024-03-01"], "validation": ["u01@2024-03-02"]}
  })"));
  CHECK(c.seed == 7);
  CHECK(c.tst.seed == 7);
  CHECK(c.ensemble.seed == 7);
  CHECK(c.synth.seed == 7);
  CHECK(c.tz_offset == 32400);
  CHECK(c.paths.labels() == fs::path("w") / "labels.csv");
  CHECK(c.paths.predictions() == fs::path("out/p.csv"));
  CHECK(c.split.is_train({"u01", {2024, 3, 1}}));
  CHECK_FALSE(c.split.is_train({"u01", {2024, 3, 2}}));
  CHECK(c.split.is_evaluated({"u01", {2024, 3, 2}}));
  CHECK_FALSE(c.split.is_evaluated({"u01", {2024, 3, 1}}));
  CHECK(PipelineConfig{}.split.is_train({"x", {}}));

  CHECK_THROWS_WITH_AS(PipelineConfig::from_json({{"sed", 1}}), doctest::Contains("sed"), std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json::parse(R"({"split": {"train": ["nodate"]}})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json::parse(R"({"tst": {"d_model": 30}})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::load("/nonexistent/config.json"), MissingInput);
}

TEST_CASE("pipeline stages") {
  tram::test::TempDir dir("pipeline");
  const auto config = tiny_config(dir);

  CHECK_THROWS_WITH_AS(run_label(config, quiet), doctest::Contains("sleep.csv"), MissingInput);
  CHECK_THROWS_WITH_AS(run_featurize(config, quiet), doctest::Contains("accel.csv"), std::runtime_error);

  run_synth(config, quiet);
  run_label(config, quiet);
  CHECK(io::read_file(config.paths.labels()) == io::read_file(config.paths.data().truth_labels()));
  run_featurize(config, quiet);
  CHECK(read_sequences_file(config.paths.sequences()).size() == 12);

  CHECK_THROWS_WITH_AS(run_finetune(config, quiet), doctest::Contains("tst_pretrained.bin"), MissingInput);
  run_pretrain(config, quiet);
  CHECK(read_loss_curve(config.paths.pretrain_curve()).size() == 2);
  run_finetune(config, quiet);

  SUBCASE("predict without the ensemble bundle") {
    CHECK_THROWS_WITH_AS(run_predict(config, quiet), doctest::Contains("ensemble"), std::runtime_error);
  }
  SUBCASE("full run and rerun") {
    run_train_ensemble(config, quiet);
    run_predict(config, quiet);
    const auto predictions = read_labels_file(config.paths.predictions());
    CHECK(predictions.size() == 12);
    const auto report = run_score(config, quiet);
    CHECK(report.aggregate >= 0.0);
    CHECK(report.aggregate <= 10.0);
    const auto first = io::read_file(config.paths.report());
    CHECK(run_score(config, quiet) == report);
    CHECK(io::read_file(config.paths.report()) == first);

    // Rerunning a stage with the same seed reproduces its output.
    const auto ensemble = io::read_file(config.paths.ensemble());
    run_train_ensemble(config, quiet);
    CHECK(io::read_file(config.paths.ensemble()) == ensemble);
    const auto q1 = io::read_file(config.paths.question_model(0));
    run_finetune(config, quiet);
    CHECK(io::read_file(config.paths.question_model(0)) == q1);
  }
  SUBCASE("no-pretrain skips the pretrained model") {
    auto c = config;
    c.pretrain = false;
    c.paths.models_dir = dir.file("other_models");
    run_pretrain(c, quiet);
    CHECK_FALSE(fs::exists(c.paths.pretrained_model()));
    run_finetune(c, quiet);
    CHECK(fs::exists(c.paths.question_model(2)));
  }
  SUBCASE("validation split") {
    auto c = config;
    const auto labels = read_labels_file(c.paths.labels());
    for (std::size_t i = 0; i < labels.size(); ++i) (i % 3 == 0 ? c.split.validation : c.split.train).insert(labels[i].user_day);
    c.paths.models_dir = dir.file("split_models");
    c.paths.predictions_file = dir.file("split_predictions.csv");
    run_label(c, quiet);
    run_pretrain(c, quiet);
    run_finetune(c, quiet);
    run_train_ensemble(c, quiet);
    run_predict(c, quiet);
    CHECK(read_labels_file(c.paths.predictions()).size() == c.split.validation.size());
    CHECK(run_score(c, quiet).confusion[0].total() == c.split.validation.size());
  }
}
