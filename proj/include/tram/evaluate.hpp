#pragma once

#include <array>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "tram/labeling.hpp"

namespace tram {

/// Binary confusion matrix with class 1 as the positive class.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  [[nodiscard]] std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Throws std::invalid_argument on a length mismatch, an empty input or a
/// value other than 0/1.
[[nodiscard]] ConfusionCounts confusion(const std::vector<int>& truth, const std::vector<int>& pred);

/// F1 of class 1 (`positive` true) or class 0. A class absent from both truth
/// and prediction scores 1; otherwise a zero denominator scores 0.
[[nodiscard]] double class_f1(const ConfusionCounts& counts, bool positive);

[[nodiscard]] double f1_macro(const ConfusionCounts& counts);
[[nodiscard]] double f1_macro(const std::vector<int>& truth, const std::vector<int>& pred);

/// 10 x mean of the seven per-label scores.
[[nodiscard]] double competition_score(const std::vector<double>& per_label_f1);

struct ScoreReport {
  std::array<double, kNumLabels> per_label{};
  std::array<ConfusionCounts, kNumLabels> confusion{};
  double aggregate = 0.0;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Fixed-width text table, one row per label plus the aggregate.
  [[nodiscard]] std::string table() const;
  bool operator==(const ScoreReport&) const = default;
};

/// Joins on user-day. Any truth row without a prediction, or prediction
/// without truth, is an error listing the unmatched keys.
[[nodiscard]] ScoreReport score_labels(const std::vector<LabelVector>& truth,
                                       const std::vector<LabelVector>& predictions);

[[nodiscard]] ScoreReport evaluate_run(const std::filesystem::path& truth_file,
                                       const std::filesystem::path& prediction_file);

}  // namespace tram
