#include "tram/pipeline.hpp"

#include <map>
#include <sstream>

#include "tram/featurize.hpp"
#include "tram/io.hpp"
#include "tram/labeling.hpp"

namespace tram {

namespace fs = std::filesystem;

namespace {

constexpr std::array<SensorKind, 4> kSensorKinds{SensorKind::Accel, SensorKind::Gps, SensorKind::HeartRate,
                                                 SensorKind::Activity};

void require(const fs::path& path, const std::string& hint = "") {
  if (!fs::exists(path)) throw MissingInput(path, hint);
}

std::set<UserDay> parse_keys(const nlohmann::json& list, const std::string& what) {
  if (!list.is_array()) throw std::invalid_argument("split." + what + ": expected an array of user@YYYY-MM-DD");
  std::set<UserDay> keys;
  for (const auto& item : list) {
    const auto text = item.get<std::string>();
    const auto at = text.rfind('@');
    if (at == std::string::npos || at == 0) {
      throw std::invalid_argument("split." + what + ": '" + text + "' is not user@YYYY-MM-DD");
    }
    keys.insert({text.substr(0, at), Date::parse(text.substr(at + 1))});
  }
  return keys;
}

template <typename T>
void log_rejected(const ParseResult<T>& result, const fs::path& path, const Logger& log) {
  for (const auto& r : result.rejected) {
    log("warning: " + path.string() + ":" + std::to_string(r.line) + ": skipped row: " + r.reason);
  }
}

std::vector<DaySequence> training_sequences(const PipelineConfig& config) {
  require(config.paths.sequences(), "run featurize first");
  auto all = read_sequences_file(config.paths.sequences());
  std::vector<DaySequence> train;
  for (auto& s : all)
    if (config.split.is_train(s.user_day)) train.push_back(std::move(s));
  if (train.empty()) throw std::runtime_error("no training day sequences in " + config.paths.sequences().string());
  return train;
}

PretrainOptions progress(const Logger& log, const std::string& tag, std::size_t epochs) {
  const std::size_t every = std::max<std::size_t>(1, epochs / 10);
  PretrainOptions opts;
  opts.on_epoch = [log, tag, every, epochs](std::size_t epoch, double loss) {
    if (epoch % every == 0 || epoch == epochs) {
      log(tag + " epoch " + std::to_string(epoch) + "/" + std::to_string(epochs) + " loss " + io::format_double(loss));
    }
  };
  return opts;
}

}  // namespace

fs::path PipelinePaths::question_model(int question) const {
  return models() / ("tst_q" + std::to_string(question + 1) + ".bin");
}

fs::path PipelinePaths::finetune_curve(int question) const {
  return models() / ("finetune_q" + std::to_string(question + 1) + "_loss.csv");
}

MissingInput::MissingInput(const fs::path& path, const std::string& hint)
    : std::runtime_error("missing input file " + path.string() + (hint.empty() ? "" : " (" + hint + ")")) {}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  PipelineConfig c;
  std::optional<std::uint64_t> seed;
  for (const auto& [key, value] : j.items()) {
    if (key == "paths") {
      for (const auto& [name, v] : value.items()) {
        const fs::path p = v.get<std::string>();
        if (name == "data_dir") c.paths.data_dir = p;
        else if (name == "work_dir") c.paths.work_dir = p;
        else if (name == "sleep") c.paths.sleep_file = p;
        else if (name == "survey") c.paths.survey_file = p;
        else if (name == "labels") c.paths.labels_file = p;
        else if (name == "models") c.paths.models_dir = p;
        else if (name == "predictions") c.paths.predictions_file = p;
        else throw std::invalid_argument("config: unknown path '" + name + "'");
      }
    } else if (key == "tz_offset") {
      c.tz_offset = value.get<EpochSeconds>();
    } else if (key == "seed") {
      seed = value.get<std::uint64_t>();
    } else if (key == "pretrain") {
      c.pretrain = value.get<bool>();
    } else if (key == "tst") {
      c.tst = TSTConfig::from_json(value, c.tst);
    } else if (key == "ensemble") {
      c.ensemble = EnsembleParams::from_json(value, c.ensemble);
    } else if (key == "synth") {
      c.synth = SynthSpec::from_json(value, c.synth);
    } else if (key == "split") {
      for (const auto& [name, v] : value.items()) {
        if (name == "train") c.split.train = parse_keys(v, name);
        else if (name == "validation") c.split.validation = parse_keys(v, name);
        else throw std::invalid_argument("config: unknown split key '" + name + "'");
      }
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  c.set_seed(seed.value_or(c.seed));
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  require(path);
  try {
    return from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void PipelineConfig::set_seed(std::uint64_t value) {
  seed = value;
  tst.seed = value;
  ensemble.seed = value;
  synth.seed = value;
}

void run_synth(const PipelineConfig& config, const Logger& log) {
  auto spec = config.synth;
  spec.tz_offset = config.tz_offset;
  const auto data = generate_synthetic(spec);
  write_synthetic(data, config.paths.data());
  log("synth: " + std::to_string(data.survey.size()) + " user-days for " + std::to_string(spec.n_users) +
      " users written to " + config.paths.data_dir.string());
}

void run_label(const PipelineConfig& config, const Logger& log) {
  require(config.paths.sleep());
  require(config.paths.survey());
  const auto sleep = parse_sleep_file(config.paths.sleep());
  const auto survey = parse_survey_file(config.paths.survey());
  log_rejected(sleep, config.paths.sleep(), log);
  log_rejected(survey, config.paths.survey(), log);

  std::vector<SurveyResponse> train_responses;
  for (const auto& r : survey.records)
    if (config.split.is_train(r.key())) train_responses.push_back(r);
  auto means = compute_user_means(train_responses);

  std::map<UserDay, std::pair<std::optional<SurveyResponse>, std::optional<SleepSession>>> days;
  for (const auto& r : survey.records) days[r.key()].first = r;
  for (const auto& s : sleep.records) days[s.key()].second = s;

  // Users without training days are thresholded at the global mean.
  UserMeans lookup = means;
  for (const auto& [key, _] : days)
    if (!lookup.per_user.contains(key.user_id)) lookup.per_user[key.user_id] = means.global;

  std::vector<LabelVector> labels;
  for (const auto& [key, records] : days) {
    if (!records.first || !records.second) {
      log("warning: " + key.to_string() + ": no " + (records.first ? "sleep session" : "survey response") +
          ", day not labelled");
      continue;
    }
    labels.push_back(label_all(key, records.first, records.second, lookup));
  }
  fs::create_directories(config.paths.work_dir);
  means.save(config.paths.means());
  if (config.paths.labels().has_parent_path()) fs::create_directories(config.paths.labels().parent_path());
  write_labels_file(config.paths.labels(), labels);
  log("label: " + std::to_string(labels.size()) + " user-days labelled");
}

void run_featurize(const PipelineConfig& config, const Logger& log) {
  std::vector<SensorStream> streams;
  std::string searched;
  for (auto kind : kSensorKinds) {
    const auto path = config.paths.sensor(kind);
    searched += (searched.empty() ? "" : ", ") + path.string();
    if (!fs::exists(path)) continue;
    auto parsed = parse_sensor_file(path, kind);
    streams.insert(streams.end(), std::make_move_iterator(parsed.begin()), std::make_move_iterator(parsed.end()));
  }
  if (streams.empty()) throw std::runtime_error("featurize: no sensor files found (looked for " + searched + ")");

  std::vector<DaySequence> sequences;
  std::vector<DailyStats> stats;
  for (const auto& [key, day] : group_by_day(streams, config.tz_offset)) {
    if (day.empty()) continue;
    sequences.push_back(build_day_sequence(day));
    stats.push_back(build_daily_stats(day));
  }
  fs::create_directories(config.paths.work_dir);
  write_sequences_file(config.paths.sequences(), sequences);
  write_daily_stats_file(config.paths.daily_stats(), stats);
  log("featurize: " + std::to_string(sequences.size()) + " user-days");
}

void run_pretrain(const PipelineConfig& config, const Logger& log) {
  if (!config.pretrain) {
    log("pretrain: skipped (--no-pretrain)");
    return;
  }
  const auto sequences = training_sequences(config);
  TSTModel model(config.tst);
  const auto curve = pretrain(model, sequences, progress(log, "pretrain:", config.tst.pretrain_epochs));
  fs::create_directories(config.paths.models());
  save_model(model, config.paths.pretrained_model());
  write_loss_curve(config.paths.pretrain_curve(), curve);
  log("pretrain: saved " + config.paths.pretrained_model().string());
}

void run_finetune(const PipelineConfig& config, const Logger& log) {
  if (config.pretrain) require(config.paths.pretrained_model(), "run pretrain first or pass --no-pretrain");
  require(config.paths.survey());
  const auto sequences = training_sequences(config);
  const auto survey = parse_survey_file(config.paths.survey());
  log_rejected(survey, config.paths.survey(), log);
  std::map<UserDay, SurveyResponse> by_key;
  for (const auto& r : survey.records) by_key.emplace(r.key(), r);

  std::vector<DaySequence> inputs;
  std::vector<const SurveyResponse*> answers;
  for (const auto& s : sequences) {
    const auto it = by_key.find(s.user_day);
    if (it == by_key.end()) continue;
    inputs.push_back(s);
    answers.push_back(&it->second);
  }
  if (inputs.empty()) throw std::runtime_error("finetune: no training day has both a sequence and a survey response");

  fs::create_directories(config.paths.models());
  for (int q = 0; q < 3; ++q) {
    TSTModel model = config.pretrain ? load_model(config.paths.pretrained_model()) : TSTModel(config.tst);
    auto& cfg = model.mutable_config();
    cfg.finetune_epochs = config.tst.finetune_epochs;
    cfg.finetune_lr = config.tst.finetune_lr;
    cfg.batch_size = config.tst.batch_size;
    std::vector<double> targets;
    for (const auto* a : answers) targets.push_back(a->question(q));
    const std::string tag = std::string("finetune ") + kLabelNames[static_cast<std::size_t>(q)] + ":";
    const auto curve = finetune(model, inputs, targets, progress(log, tag, cfg.finetune_epochs));
    save_model(model, config.paths.question_model(q));
    write_loss_curve(config.paths.finetune_curve(q), curve);
  }
  log("finetune: saved Q1-Q3 models to " + config.paths.models().string());
}

void run_train_ensemble(const PipelineConfig& config, const Logger& log) {
  require(config.paths.daily_stats(), "run featurize first");
  require(config.paths.labels(), "run label first");
  std::vector<DailyStats> stats;
  for (auto& s : read_daily_stats_file(config.paths.daily_stats()))
    if (config.split.is_train(s.user_day)) stats.push_back(std::move(s));
  const auto data = make_dataset(stats, read_labels_file(config.paths.labels()));
  if (data.size() == 0) throw std::runtime_error("train-ensemble: no training day has both daily stats and labels");
  const auto model = fit_multi_output(data, config.ensemble);
  for (const auto& w : model.warnings()) log("warning: " + w);
  fs::create_directories(config.paths.models());
  save_ensemble(model, config.paths.ensemble());
  log("train-ensemble: " + std::to_string(data.size()) + " training rows, saved " + config.paths.ensemble().string());
}

void run_predict(const PipelineConfig& config, const Logger& log) {
  std::vector<fs::path> missing;
  for (int q = 0; q < 3; ++q)
    if (!fs::exists(config.paths.question_model(q))) missing.push_back(config.paths.question_model(q));
  if (!fs::exists(config.paths.ensemble())) missing.push_back(config.paths.ensemble());
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m.string();
    throw std::runtime_error("predict: missing model file(s): " + list +
                             (fs::exists(config.paths.ensemble()) ? "" : "; the S1-S4 ensemble bundle is required"));
  }
  require(config.paths.sequences(), "run featurize first");
  require(config.paths.daily_stats(), "run featurize first");
  require(config.paths.means(), "run label first");

  std::map<UserDay, DailyStats> stats;
  for (auto& s : read_daily_stats_file(config.paths.daily_stats())) stats.emplace(s.user_day, s);
  std::vector<DaySequence> sequences;
  for (auto& s : read_sequences_file(config.paths.sequences()))
    if (config.split.is_evaluated(s.user_day) && stats.contains(s.user_day)) sequences.push_back(std::move(s));
  const auto means = UserMeans::load(config.paths.means());
  const auto ensemble = load_ensemble(config.paths.ensemble());

  std::vector<LabelVector> predictions(sequences.size());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& key = sequences[i].user_day;
    predictions[i].user_day = key;
    const auto row = impute_zeros({feature_row(stats.at(key))}).front();
    const auto s = ensemble.predict(row);
    for (std::size_t k = 0; k < kNumSLabels; ++k) predictions[i].values[3 + k] = s[k].label;
  }
  for (int q = 0; q < 3; ++q) {
    auto model = load_model(config.paths.question_model(q));
    const auto raw = predict_raw(model, sequences);
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      predictions[i].values[static_cast<std::size_t>(q)] =
          threshold_prediction(raw[i], means.threshold(sequences[i].user_day.user_id, q));
    }
  }
  const auto out = config.paths.predictions();
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_labels_file(out, predictions);
  log("predict: " + std::to_string(predictions.size()) + " user-days written to " + out.string());
}

ScoreReport run_score(const PipelineConfig& config, const Logger& log) {
  require(config.paths.labels(), "run label first");
  require(config.paths.predictions(), "run predict first");
  std::vector<LabelVector> truth;
  for (auto& l : read_labels_file(config.paths.labels()))
    if (config.split.is_evaluated(l.user_day)) truth.push_back(std::move(l));
  const auto report = score_labels(truth, read_labels_file(config.paths.predictions()));
  fs::create_directories(config.paths.work_dir);
  io::write_atomically(config.paths.report(), [&](std::ostream& out) { out << report.to_json().dump(2) << '\n'; });
  log("score: report written to " + config.paths.report().string());
  return report;
}

}  // namespace tram
