#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tram/featurize.hpp"
#include "tram/nn/layers.hpp"

namespace tram {

struct TSTConfig {
  std::size_t feat_dim = kSequenceFeatures;
  std::size_t max_len = kWindowsPerDay;
  std::size_t d_model = 128;
  std::size_t n_layers = 3;
  std::size_t n_heads = 8;
  std::size_t ff_dim = 256;
  std::size_t conv_kernel = 1;
  double dropout = 0.1;
  double mask_ratio = 0.15;
  double mean_mask_len = 3.0;
  std::size_t pretrain_epochs = 2000;
  double pretrain_lr = 0.001;
  std::size_t finetune_epochs = 400;
  double finetune_lr = 0.1;
  std::size_t batch_size = 128;
  std::uint64_t seed = 42;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Unknown keys are rejected so that typos do not silently fall back to
  /// defaults.
  static TSTConfig from_json(const nlohmann::json& j, TSTConfig base);
  static TSTConfig from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;

  bool operator==(const TSTConfig&) const = default;
};

/// Row-major T x F, 1 = masked.
struct MaskSpec {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> masked;

  [[nodiscard]] bool at(std::size_t t, std::size_t f) const { return masked[t * cols + f] != 0; }
  [[nodiscard]] std::vector<std::uint8_t> column(std::size_t f) const;
};

/// Independent two-state Markov chain per column. Masked runs have mean
/// length l_m, unmasked runs mean length l_m (1 - r) / r, and the first step is
/// masked with probability r.
[[nodiscard]] MaskSpec sample_geometric_mask(std::size_t rows, std::size_t cols, double r, double l_m,
                                             std::mt19937_64& rng);

/// Per-feature z-scoring fitted on unpadded windows. Zero-variance features
/// keep a unit divisor.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std;

  static Standardizer fit(const std::vector<DaySequence>& sequences, std::size_t feat_dim);
  [[nodiscard]] double apply(double value, std::size_t feature) const {
    return (value - mean[feature]) / std[feature];
  }
  bool operator==(const Standardizer&) const = default;
};

enum class TSTMode : std::uint8_t { Untrained = 0, Pretrained = 1, Finetuned = 2 };

/// One standardised batch in the stacked (batch * max_len) x feat_dim layout.
/// Padded rows are zero and flagged invalid.
struct TSTBatch {
  nn::Tensor inputs;
  std::vector<std::uint8_t> valid;
  std::size_t size = 0;
};

class TSTModel {
 public:
  TSTModel() = default;
  explicit TSTModel(const TSTConfig& config);

  [[nodiscard]] const TSTConfig& config() const { return config_; }
  TSTConfig& mutable_config() { return config_; }
  [[nodiscard]] TSTMode mode() const { return mode_; }
  void set_mode(TSTMode mode) { mode_ = mode; }
  [[nodiscard]] const Standardizer& standardizer() const { return stats_; }
  void set_standardizer(Standardizer stats) { stats_ = std::move(stats); }

  [[nodiscard]] TSTBatch make_batch(const std::vector<DaySequence>& sequences,
                                    const std::vector<std::size_t>& indices) const;

  /// Encoder output, (batch * max_len) x d_model. Invalid input rows are
  /// zeroed first, so their contents can never reach the output.
  [[nodiscard]] nn::Var encode(const nn::Var& inputs, const std::vector<std::uint8_t>& valid,
                               bool train);
  /// Reconstruction head applied per step: (batch * max_len) x feat_dim.
  [[nodiscard]] nn::Var reconstruct(const nn::Var& inputs, const std::vector<std::uint8_t>& valid,
                                    bool train);
  /// Regression head over the concatenated step representations: batch x 1.
  [[nodiscard]] nn::Var regress(const nn::Var& inputs, const std::vector<std::uint8_t>& valid,
                                bool train);

  [[nodiscard]] std::vector<nn::Parameter*> encoder_parameters();
  [[nodiscard]] std::vector<nn::Parameter*> pretrain_parameters();
  [[nodiscard]] std::vector<nn::Parameter*> finetune_parameters();
  [[nodiscard]] std::vector<nn::Parameter*> all_parameters();
  [[nodiscard]] std::vector<nn::BatchNormState*> batch_norm_states();

  [[nodiscard]] nn::Parameter& regression_weight() { return regression_head_.weight; }
  [[nodiscard]] nn::Parameter& regression_bias() { return regression_head_.bias; }
  [[nodiscard]] std::mt19937_64& rng() { return rng_; }

 private:
  friend void save_model(const TSTModel& model, const std::filesystem::path& path);
  friend TSTModel load_model(const std::filesystem::path& path);

  template <class Self, class F>
  static void visit_parameters(Self& self, F&& f);

  struct EncoderLayer {
    nn::MultiHeadAttention attention;
    nn::BatchNorm norm1;
    nn::Linear ff1;
    nn::Linear ff2;
    nn::BatchNorm norm2;
  };

  TSTConfig config_;
  TSTMode mode_ = TSTMode::Untrained;
  Standardizer stats_;
  nn::Conv1d projection_;
  nn::Parameter positional_;
  std::vector<EncoderLayer> layers_;
  nn::Linear reconstruction_head_;
  nn::Linear regression_head_;
  std::mt19937_64 rng_;
};

struct PretrainOptions {
  /// Called after each epoch with (epoch starting at 1, mean loss).
  std::function<void(std::size_t, double)> on_epoch;
};

/// Masked-value pre-training. Fits the standardiser on `sequences`, then for
/// each batch masks inputs (set to 0), reconstructs, and minimises MSE over
/// masked unpadded entries. Returns the mean batch loss per epoch. Throws
/// std::runtime_error on a non-finite loss.
std::vector<double> pretrain(TSTModel& model, const std::vector<DaySequence>& sequences,
                             const PretrainOptions& options = {});

/// Masked reconstruction MSE of the model (eval mode) and of the
/// predict-zero (training mean) baseline over the same freshly drawn masks.
struct ReconstructionScore {
  double model_mse = 0.0;
  double baseline_mse = 0.0;
  std::size_t masked_entries = 0;
};
[[nodiscard]] ReconstructionScore evaluate_reconstruction(TSTModel& model,
                                                          const std::vector<DaySequence>& sequences,
                                                          std::uint64_t mask_seed);

/// Regression fine-tuning of every weight against raw 1-5 targets. An
/// untrained model gets its standardiser fitted here. Returns mean batch loss
/// per epoch.
std::vector<double> finetune(TSTModel& model, const std::vector<DaySequence>& sequences,
                             const std::vector<double>& targets, const PretrainOptions& options = {});

[[nodiscard]] std::vector<double> predict_raw(TSTModel& model, const std::vector<DaySequence>& sequences);

struct QPrediction {
  double raw = 0.0;
  int label = 0;
};
[[nodiscard]] constexpr int threshold_prediction(double raw, double mu) { return raw > mu ? 1 : 0; }
[[nodiscard]] QPrediction predict_q(TSTModel& model, const DaySequence& sequence, double mu);

inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const TSTModel& model, const std::filesystem::path& path);
/// Throws std::runtime_error on bad magic, unknown version, truncation or
/// checksum mismatch.
[[nodiscard]] TSTModel load_model(const std::filesystem::path& path);

void write_loss_curve(const std::filesystem::path& path, const std::vector<double>& losses);
[[nodiscard]] std::vector<double> read_loss_curve(const std::filesystem::path& path);

}  // namespace tram
