#include "tram/evaluate.hpp"

#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace tram {

ConfusionCounts confusion(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size()) {
    throw std::invalid_argument("f1: truth has " + std::to_string(truth.size()) + " entries, prediction has " +
                                std::to_string(pred.size()));
  }
  if (truth.empty()) throw std::invalid_argument("f1: empty input");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = pred[i];
    if ((t != 0 && t != 1) || (p != 0 && p != 1)) {
      throw std::invalid_argument("f1: non-binary value at index " + std::to_string(i));
    }
    if (t == 1) {
      p == 1 ? ++c.tp : ++c.fn;
    } else {
      p == 1 ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

double class_f1(const ConfusionCounts& counts, bool positive) {
  // Swapping roles turns class 0 into the positive class.
  const std::size_t tp = positive ? counts.tp : counts.tn;
  const std::size_t fp = positive ? counts.fp : counts.fn;
  const std::size_t fn = positive ? counts.fn : counts.fp;
  if (tp + fp + fn == 0) return 1.0;
  if (tp == 0) return 0.0;
  return static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
}

double f1_macro(const ConfusionCounts& counts) {
  return (class_f1(counts, false) + class_f1(counts, true)) / 2.0;
}

double f1_macro(const std::vector<int>& truth, const std::vector<int>& pred) {
  return f1_macro(confusion(truth, pred));
}

double competition_score(const std::vector<double>& per_label_f1) {
  if (per_label_f1.size() != kNumLabels) {
    throw std::invalid_argument("competition_score: expected " + std::to_string(kNumLabels) + " values, got " +
                                std::to_string(per_label_f1.size()));
  }
  double sum = 0.0;
  for (double v : per_label_f1) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("competition_score: value outside [0, 1]");
    sum += v;
  }
  return 10.0 * sum / static_cast<double>(kNumLabels);
}

nlohmann::json ScoreReport::to_json() const {
  nlohmann::json per = nlohmann::json::object();
  nlohmann::json conf = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    per[kLabelNames[i]] = per_label[i];
    const auto& c = confusion[i];
    conf[kLabelNames[i]] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
  }
  return {{"per_label", per}, {"aggregate", aggregate}, {"confusion", conf}};
}

std::string ScoreReport::table() const {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-6s %8s %6s %6s %6s %6s\n", "label", "macroF1", "tp", "fp", "fn", "tn");
  out << line;
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    const auto& c = confusion[i];
    std::snprintf(line, sizeof line, "%-6s %8.4f %6zu %6zu %6zu %6zu\n", kLabelNames[i], per_label[i], c.tp, c.fp,
                  c.fn, c.tn);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-6s %8.2f / 10\n", "score", aggregate);
  out << line;
  return out.str();
}

ScoreReport score_labels(const std::vector<LabelVector>& truth, const std::vector<LabelVector>& predictions) {
  std::map<UserDay, const LabelVector*> pred_by_key;
  for (const auto& p : predictions) {
    if (!pred_by_key.emplace(p.user_day, &p).second) {
      throw std::invalid_argument("duplicate prediction for " + p.user_day.to_string());
    }
  }
  std::vector<std::string> unmatched;
  std::array<std::vector<int>, kNumLabels> t, p;
  std::map<UserDay, bool> seen;
  for (const auto& row : truth) {
    if (!seen.emplace(row.user_day, true).second) {
      throw std::invalid_argument("duplicate truth row for " + row.user_day.to_string());
    }
    const auto it = pred_by_key.find(row.user_day);
    if (it == pred_by_key.end()) {
      unmatched.push_back(row.user_day.to_string() + " (no prediction)");
      continue;
    }
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      t[i].push_back(row.values[i]);
      p[i].push_back(it->second->values[i]);
    }
  }
  for (const auto& row : predictions) {
    if (!seen.contains(row.user_day)) unmatched.push_back(row.user_day.to_string() + " (no truth)");
  }
  if (!unmatched.empty()) {
    std::string msg = "unmatched rows:";
    for (const auto& k : unmatched) msg += " " + k;
    throw std::invalid_argument(msg);
  }
  if (truth.empty()) throw std::invalid_argument("no rows to score");
  ScoreReport report;
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    report.confusion[i] = confusion(t[i], p[i]);
    report.per_label[i] = f1_macro(report.confusion[i]);
  }
  report.aggregate = competition_score({report.per_label.begin(), report.per_label.end()});
  return report;
}

ScoreReport evaluate_run(const std::filesystem::path& truth_file, const std::filesystem::path& prediction_file) {
  return score_labels(read_labels_file(truth_file), read_labels_file(prediction_file));
}

}  // namespace tram
