#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>

#include "tram/pipeline.hpp"

namespace {

void log_line(const std::string& line) { std::cerr << line << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tram: wearable-sensor sleep and mood label pipeline"};
  app.fallthrough();
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool no_pretrain = false;
  app.add_option("--config", config_path, "Pipeline configuration (JSON)");
  app.add_option("--seed", seed, "Seed for every random number generator (default 42)");
  app.add_flag("--no-pretrain", no_pretrain, "Skip masked pre-training; fine-tune from random weights");

  using Stage = std::function<void(const tram::PipelineConfig&)>;
  std::vector<std::pair<CLI::App*, Stage>> stages;
  const auto stage = [&](const std::string& name, const std::string& help, Stage run) {
    stages.emplace_back(app.add_subcommand(name, help), std::move(run));
  };
  stage("synth", "Generate a synthetic cohort into the data directory",
        [](const auto& c) { tram::run_synth(c, log_line); });
  stage("label", "Compute Q1-Q3 and S1-S4 labels from surveys and sleep sessions",
        [](const auto& c) { tram::run_label(c, log_line); });
  stage("featurize", "Build day sequences and daily statistics from sensor files",
        [](const auto& c) { tram::run_featurize(c, log_line); });
  stage("pretrain", "Masked-value pre-training of the time-series transformer",
        [](const auto& c) { tram::run_pretrain(c, log_line); });
  stage("finetune", "Fine-tune one regression model per question",
        [](const auto& c) { tram::run_finetune(c, log_line); });
  stage("train-ensemble", "Fit the soft-voting ensembles for S1-S4",
        [](const auto& c) { tram::run_train_ensemble(c, log_line); });
  stage("predict", "Write predictions.csv with all seven labels",
        [](const auto& c) { tram::run_predict(c, log_line); });
  stage("score", "Macro F1 per label and the 0-10 aggregate", [](const auto& c) {
    const auto report = tram::run_score(c, log_line);
    std::cout << report.to_json().dump(2) << '\n' << report.table();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    auto config = config_path.empty() ? tram::PipelineConfig{} : tram::PipelineConfig::load(config_path);
    if (seed) config.set_seed(*seed);
    if (no_pretrain) config.pretrain = false;
    for (const auto& [sub, run] : stages) {
      if (sub->parsed()) run(config);
    }
  } catch (const std::exception& e) {
    std::cerr << "tram: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
