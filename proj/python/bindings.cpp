#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "tram/ensemble.hpp"
#include "tram/evaluate.hpp"
#include "tram/featurize.hpp"
#include "tram/labeling.hpp"
#include "tram/pipeline.hpp"
#include "tram/tst.hpp"

namespace py = pybind11;
using namespace tram;

namespace {

py::dict report_dict(const ScoreReport& r) {
  py::dict per_label;
  for (std::size_t i = 0; i < kNumLabels; ++i) per_label[kLabelNames[i]] = r.per_label[i];
  py::dict out;
  out["per_label"] = per_label;
  out["aggregate"] = r.aggregate;
  return out;
}

PipelineConfig config_from(const std::string& json_text) {
  return json_text.empty() ? PipelineConfig{} : PipelineConfig::from_json(nlohmann::json::parse(json_text));
}

}  // namespace

PYBIND11_MODULE(_tram, m) {
  m.doc() = "Bindings for the tram sleep and mood label pipeline";

  m.attr("LABEL_NAMES") = std::vector<std::string>(kLabelNames.begin(), kLabelNames.end());
  m.attr("SEQUENCE_FEATURES") = std::vector<std::string>(sequence_feature_names().begin(), sequence_feature_names().end());
  m.attr("DAILY_FEATURES") = std::vector<std::string>(daily_feature_names().begin(), daily_feature_names().end());

  m.def("q_label", &q_label, py::arg("response"), py::arg("mean"));
  m.def(
      "s_labels",
      [](std::int64_t wake, std::int64_t deep, std::int64_t light, std::int64_t rem, std::int64_t to_sleep,
         std::int64_t to_wake) {
        SleepSession s{"", {}, wake, deep, light, rem, to_sleep, to_wake};
        if (const auto err = validate(s)) throw py::value_error(*err);
        const auto l = s_labels(s);
        return std::make_tuple(l.s1, l.s2, l.s3, l.s4);
      },
      py::arg("wakeupduration"), py::arg("deepsleepduration"), py::arg("lightsleepduration"),
      py::arg("remsleepduration"), py::arg("durationtosleep"), py::arg("durationtowakeup"));

  m.def("f1_macro", py::overload_cast<const std::vector<int>&, const std::vector<int>&>(&f1_macro), py::arg("truth"),
        py::arg("pred"));
  m.def("competition_score", &competition_score, py::arg("per_label_f1"));
  m.def(
      "evaluate_run", [](const std::filesystem::path& t, const std::filesystem::path& p) { return report_dict(evaluate_run(t, p)); },
      py::arg("truth_file"), py::arg("prediction_file"));

  m.def(
      "geometric_mask",
      [](std::size_t rows, std::size_t cols, double ratio, double mean_len, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        const auto mask = sample_geometric_mask(rows, cols, ratio, mean_len, rng);
        py::array_t<std::uint8_t> out({rows, cols});
        std::copy(mask.masked.begin(), mask.masked.end(), out.mutable_data());
        return out;
      },
      py::arg("rows"), py::arg("cols"), py::arg("ratio") = 0.15, py::arg("mean_len") = 3.0, py::arg("seed") = 42);

  m.def(
      "read_sequences",
      [](const std::filesystem::path& path) {
        py::list out;
        for (const auto& s : read_sequences_file(path)) {
          py::array_t<double> matrix({kWindowsPerDay, kSequenceFeatures});
          std::copy(s.matrix.begin(), s.matrix.end(), matrix.mutable_data());
          py::array_t<std::uint8_t> pad(static_cast<py::ssize_t>(s.pad_mask.size()), s.pad_mask.data());
          out.append(py::make_tuple(s.user_day.user_id, s.user_day.date.to_string(), matrix, pad));
        }
        return out;
      },
      py::arg("path"), "List of (user_id, date, 144x33 matrix, pad mask with 1 = real data).");

  m.def(
      "predict_raw",
      [](const std::filesystem::path& model_path, const std::filesystem::path& sequences_path) {
        auto model = load_model(model_path);
        return predict_raw(model, read_sequences_file(sequences_path));
      },
      py::arg("model_path"), py::arg("sequences_path"));

  m.def(
      "run_stage",
      [](const std::string& stage, const std::string& config_json) {
        const auto config = config_from(config_json);
        std::vector<std::string> messages;
        const Logger log = [&](const std::string& line) { messages.push_back(line); };
        py::gil_scoped_release release;
        if (stage == "synth") run_synth(config, log);
        else if (stage == "label") run_label(config, log);
        else if (stage == "featurize") run_featurize(config, log);
        else if (stage == "pretrain") run_pretrain(config, log);
        else if (stage == "finetune") run_finetune(config, log);
        else if (stage == "train-ensemble") run_train_ensemble(config, log);
        else if (stage == "predict") run_predict(config, log);
        else if (stage == "score") (void)run_score(config, log);
        else throw std::invalid_argument("unknown stage '" + stage + "'");
        return messages;
      },
      py::arg("stage"), py::arg("config_json") = "",
      "Runs one pipeline stage with a JSON config (same schema as the CLI) and returns its log lines.");
}
