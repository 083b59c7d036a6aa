#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>

#include "tram/ensemble.hpp"
#include "tram/evaluate.hpp"
#include "tram/synth.hpp"
#include "tram/tst.hpp"

namespace tram {

/// Every file a stage reads or writes. Unset entries derive from data_dir
/// (raw inputs) or work_dir (everything produced by the pipeline).
struct PipelinePaths {
  std::filesystem::path data_dir = "data";
  std::filesystem::path work_dir = "work";
  std::optional<std::filesystem::path> sleep_file;
  std::optional<std::filesystem::path> survey_file;
  std::optional<std::filesystem::path> labels_file;
  std::optional<std::filesystem::path> models_dir;
  std::optional<std::filesystem::path> predictions_file;

  [[nodiscard]] DataFiles data() const { return {data_dir}; }
  [[nodiscard]] std::filesystem::path sensor(SensorKind kind) const { return data().sensor(kind); }
  [[nodiscard]] std::filesystem::path sleep() const { return sleep_file.value_or(data().sleep()); }
  [[nodiscard]] std::filesystem::path survey() const { return survey_file.value_or(data().survey()); }
  [[nodiscard]] std::filesystem::path labels() const { return labels_file.value_or(work_dir / "labels.csv"); }
  [[nodiscard]] std::filesystem::path means() const { return work_dir / "user_means.json"; }
  [[nodiscard]] std::filesystem::path sequences() const { return work_dir / "sequences.csv"; }
  [[nodiscard]] std::filesystem::path daily_stats() const { return work_dir / "daily_stats.csv"; }
  [[nodiscard]] std::filesystem::path models() const { return models_dir.value_or(work_dir / "models"); }
  [[nodiscard]] std::filesystem::path pretrained_model() const { return models() / "tst_pretrained.bin"; }
  [[nodiscard]] std::filesystem::path pretrain_curve() const { return models() / "pretrain_loss.csv"; }
  /// question 0..2
  [[nodiscard]] std::filesystem::path question_model(int question) const;
  [[nodiscard]] std::filesystem::path finetune_curve(int question) const;
  [[nodiscard]] std::filesystem::path ensemble() const { return models() / "ensemble.json"; }
  [[nodiscard]] std::filesystem::path predictions() const {
    return predictions_file.value_or(work_dir / "predictions.csv");
  }
  [[nodiscard]] std::filesystem::path report() const { return work_dir / "report.json"; }
};

/// Optional train/validation partition. Without one, every user-day is used
/// for training and is also the evaluation set.
struct SplitSpec {
  std::set<UserDay> train;
  std::set<UserDay> validation;

  [[nodiscard]] bool empty() const { return train.empty() && validation.empty(); }
  [[nodiscard]] bool is_train(const UserDay& key) const { return train.empty() || train.contains(key); }
  [[nodiscard]] bool is_evaluated(const UserDay& key) const {
    return validation.empty() || validation.contains(key);
  }
};

struct PipelineConfig {
  PipelinePaths paths;
  EpochSeconds tz_offset = 0;
  std::uint64_t seed = 42;
  bool pretrain = true;
  TSTConfig tst;
  EnsembleParams ensemble;
  SynthSpec synth;
  SplitSpec split;

  /// Unknown keys are errors. The top-level seed overrides the seeds of the
  /// model, ensemble and generator sections.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  void set_seed(std::uint64_t value);
};

/// Messages for the user (progress, skipped rows, warnings).
using Logger = std::function<void(const std::string&)>;

/// Error raised when a stage input is missing; the message names the file.
class MissingInput : public std::runtime_error {
 public:
  explicit MissingInput(const std::filesystem::path& path, const std::string& hint = "");
};

void run_synth(const PipelineConfig& config, const Logger& log);
void run_label(const PipelineConfig& config, const Logger& log);
void run_featurize(const PipelineConfig& config, const Logger& log);
void run_pretrain(const PipelineConfig& config, const Logger& log);
void run_finetune(const PipelineConfig& config, const Logger& log);
void run_train_ensemble(const PipelineConfig& config, const Logger& log);
void run_predict(const PipelineConfig& config, const Logger& log);
/// Writes report.json and returns the report.
ScoreReport run_score(const PipelineConfig& config, const Logger& log);

}  // namespace tram
