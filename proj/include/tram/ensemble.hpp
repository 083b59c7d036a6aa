#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tram/data_model.hpp"
#include "tram/featurize.hpp"
#include "tram/labeling.hpp"

namespace tram {

inline constexpr std::size_t kNumSLabels = 4;

using FeatureRow = std::vector<double>;

/// Rows of X (missing entries are NaN before imputation) and S1-S4 targets.
struct TabularDataset {
  std::vector<FeatureRow> x;
  std::vector<std::array<int, kNumSLabels>> y;
  std::vector<UserDay> keys;

  [[nodiscard]] std::size_t size() const { return x.size(); }
  [[nodiscard]] std::vector<int> label_column(std::size_t s) const;
};

/// Replaces every NaN with 0. Other values are untouched.
[[nodiscard]] std::vector<FeatureRow> impute_zeros(std::vector<FeatureRow> x);

[[nodiscard]] FeatureRow feature_row(const DailyStats& stats);

/// Inner join of daily statistics and label vectors on user-day, in the order
/// of `stats`.
[[nodiscard]] TabularDataset make_dataset(const std::vector<DailyStats>& stats,
                                          const std::vector<LabelVector>& labels);

enum class ClassifierKind : std::uint8_t {
  RandomForest,
  GradientBoosting,
  LogisticRegression,
  SupportVectorMachine,
  DecisionTree,
  KNearestNeighbors,
};

inline constexpr std::array<ClassifierKind, 6> kAllClassifierKinds = {
    ClassifierKind::RandomForest,       ClassifierKind::GradientBoosting,
    ClassifierKind::LogisticRegression, ClassifierKind::SupportVectorMachine,
    ClassifierKind::DecisionTree,       ClassifierKind::KNearestNeighbors};

[[nodiscard]] std::string to_string(ClassifierKind kind);
[[nodiscard]] ClassifierKind classifier_kind_from_string(const std::string& name);

struct EnsembleParams {
  std::size_t forest_trees = 100;
  bool forest_bootstrap = true;
  std::size_t forest_max_features = 0;  // 0 = floor(sqrt(n_features))
  std::size_t boosting_stages = 100;
  std::size_t boosting_depth = 3;
  double boosting_learning_rate = 0.1;
  double logistic_lambda = 1.0;
  double logistic_tolerance = 1e-6;
  std::size_t logistic_max_iter = 10000;
  double svm_c = 1.0;
  std::optional<double> svm_gamma;  // default 1 / (n_features * Var(X))
  double svm_tolerance = 1e-3;
  std::size_t svm_max_iter = 100000;
  std::size_t knn_k = 5;
  std::uint64_t seed = 42;

  static EnsembleParams from_json(const nlohmann::json& j, EnsembleParams base);
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Binary tree stored as parallel node arrays. Leaves have feature == -1 and
/// carry `value` (class-1 fraction for classification, the fitted output for
/// regression trees).
struct Tree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> value;

  [[nodiscard]] double predict(const FeatureRow& x) const;
  [[nodiscard]] std::size_t node_count() const { return feature.size(); }
  bool operator==(const Tree&) const = default;
};

struct ConstantModel {
  int label = 0;
};
struct DecisionTreeModel {
  Tree tree;
};
struct RandomForestModel {
  std::vector<Tree> trees;
};
struct GradientBoostingModel {
  double init = 0.0;  // log-odds
  double learning_rate = 0.1;
  std::vector<Tree> stages;
  std::vector<double> train_loss;  // after each stage
};
struct LogisticModel {
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t iterations = 0;
};
struct SvmModel {
  std::vector<FeatureRow> support;
  std::vector<double> coef;  // alpha_i * y_i with y in {-1, +1}
  double bias = 0.0;
  double gamma = 1.0;
  double platt_a = -1.0;
  double platt_b = 0.0;
  std::size_t iterations = 0;
  double max_kkt_violation = 0.0;  // on the training set at convergence

  [[nodiscard]] double decision(const FeatureRow& x) const;
};
struct KnnModel {
  std::vector<FeatureRow> x;
  std::vector<int> y;
  std::size_t k = 5;
};

using ClassifierState = std::variant<ConstantModel, DecisionTreeModel, RandomForestModel,
                                     GradientBoostingModel, LogisticModel, SvmModel, KnnModel>;

struct TrainedClassifier {
  ClassifierKind kind = ClassifierKind::DecisionTree;
  ClassifierState state;
  std::optional<std::string> warning;

  /// (p0, p1). Throws std::invalid_argument on a non-finite input or a width
  /// mismatch.
  [[nodiscard]] std::pair<double, double> predict_proba(const FeatureRow& x) const;
  [[nodiscard]] int predict(const FeatureRow& x) const { return predict_proba(x).second > 0.5 ? 1 : 0; }

  std::size_t n_features = 0;
};

/// Fits one family on binary labels. Single-class data yields a constant
/// classifier with `warning` set.
[[nodiscard]] TrainedClassifier fit(ClassifierKind kind, const std::vector<FeatureRow>& x,
                                    const std::vector<int>& y, const EnsembleParams& params = {});

/// CART with Gini impurity over `rows` (repeats allowed, as in a bootstrap
/// sample). `max_features` 0 considers every feature; otherwise that many
/// features are drawn per split from `rng`. `max_depth` 0 is unbounded.
[[nodiscard]] Tree fit_classification_tree(const std::vector<FeatureRow>& x, const std::vector<int>& y,
                                           const std::vector<std::size_t>& rows,
                                           std::size_t max_features, std::mt19937_64* rng,
                                           std::size_t max_depth = 0);

struct VoteResult {
  double p1 = 0.0;
  int label = 0;
};
/// Unweighted mean of member p1; label 1 iff the mean exceeds 0.5.
[[nodiscard]] VoteResult soft_vote(const std::vector<double>& member_p1);
[[nodiscard]] VoteResult soft_vote(const std::vector<TrainedClassifier>& members, const FeatureRow& x);
/// Majority label; ties go to 0. Throws on an empty list.
[[nodiscard]] int hard_vote(const std::vector<int>& labels);

struct VotingEnsemble {
  std::vector<TrainedClassifier> members;
  [[nodiscard]] VoteResult predict(const FeatureRow& x) const { return soft_vote(members, x); }
};

struct MultiOutputModel {
  std::array<VotingEnsemble, kNumSLabels> labels;
  std::vector<std::string> feature_names;
  EnsembleParams params;

  [[nodiscard]] std::array<VoteResult, kNumSLabels> predict(const FeatureRow& x) const;
  [[nodiscard]] std::vector<std::string> warnings() const;
};

/// Fits all six families for each S label on the (imputed) dataset.
[[nodiscard]] MultiOutputModel fit_multi_output(const TabularDataset& data, const EnsembleParams& params = {});

inline constexpr int kEnsembleFormatVersion = 1;

[[nodiscard]] nlohmann::json to_json(const MultiOutputModel& model);
[[nodiscard]] MultiOutputModel multi_output_from_json(const nlohmann::json& j);
void save_ensemble(const MultiOutputModel& model, const std::filesystem::path& path);
[[nodiscard]] MultiOutputModel load_ensemble(const std::filesystem::path& path);

/// Mean logistic loss of probabilities p against binary labels.
[[nodiscard]] double log_loss(const std::vector<int>& y, const std::vector<double>& p);

}  // namespace tram
