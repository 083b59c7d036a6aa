#include "tram/tst.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tram/io.hpp"
#include "tram/nn/optim.hpp"

namespace tram {

using nn::Parameter;
using nn::Tensor;
using nn::Var;

namespace {

void require_config(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw std::invalid_argument("TSTConfig." + field + ": " + what);
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

Tensor row_mask(const std::vector<std::uint8_t>& valid, std::size_t cols) {
  Tensor m({valid.size(), cols}, 0.0);
  for (std::size_t r = 0; r < valid.size(); ++r) {
    if (!valid[r]) continue;
    std::fill_n(m.data().begin() + static_cast<std::ptrdiff_t>(r * cols), cols, 1.0);
  }
  return m;
}

void check_finite_loss(double loss, const char* stage, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << stage << ": non-finite loss " << loss << " at epoch " << epoch << ", batch " << batch
        << "; lower the learning rate";
    throw std::runtime_error(msg.str());
  }
}

}  // namespace

void TSTConfig::validate() const {
  require_config(feat_dim > 0, "feat_dim", "must be positive");
  require_config(max_len > 0, "max_len", "must be positive");
  require_config(d_model > 0, "d_model", "must be positive");
  require_config(n_heads > 0 && d_model % n_heads == 0, "n_heads", "must divide d_model");
  require_config(ff_dim > 0, "ff_dim", "must be positive");
  require_config(conv_kernel > 0, "conv_kernel", "must be positive");
  require_config(dropout >= 0.0 && dropout < 1.0, "dropout", "must be in [0, 1)");
  require_config(mask_ratio > 0.0 && mask_ratio < 1.0, "mask_ratio", "must be in (0, 1)");
  require_config(mean_mask_len >= 1.0, "mean_mask_len", "must be >= 1");
  require_config(pretrain_lr > 0.0, "pretrain_lr", "must be positive");
  require_config(finetune_lr > 0.0, "finetune_lr", "must be positive");
  require_config(batch_size > 0, "batch_size", "must be positive");
}

TSTConfig TSTConfig::from_json(const nlohmann::json& j, TSTConfig c) {
  if (!j.is_object()) throw std::invalid_argument("TSTConfig: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "feat_dim") c.feat_dim = value.get<std::size_t>();
    else if (key == "max_len") c.max_len = value.get<std::size_t>();
    else if (key == "d_model") c.d_model = value.get<std::size_t>();
    else if (key == "n_layers") c.n_layers = value.get<std::size_t>();
    else if (key == "n_heads") c.n_heads = value.get<std::size_t>();
    else if (key == "ff_dim") c.ff_dim = value.get<std::size_t>();
    else if (key == "conv_kernel") c.conv_kernel = value.get<std::size_t>();
    else if (key == "dropout") c.dropout = value.get<double>();
    else if (key == "mask_ratio") c.mask_ratio = value.get<double>();
    else if (key == "mean_mask_len") c.mean_mask_len = value.get<double>();
    else if (key == "pretrain_epochs") c.pretrain_epochs = value.get<std::size_t>();
    else if (key == "pretrain_lr") c.pretrain_lr = value.get<double>();
    else if (key == "finetune_epochs") c.finetune_epochs = value.get<std::size_t>();
    else if (key == "finetune_lr") c.finetune_lr = value.get<double>();
    else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw std::invalid_argument("TSTConfig: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

TSTConfig TSTConfig::from_json(const nlohmann::json& j) { return from_json(j, TSTConfig{}); }

nlohmann::json TSTConfig::to_json() const {
  return {{"feat_dim", feat_dim},
          {"max_len", max_len},
          {"d_model", d_model},
          {"n_layers", n_layers},
          {"n_heads", n_heads},
          {"ff_dim", ff_dim},
          {"conv_kernel", conv_kernel},
          {"dropout", dropout},
          {"mask_ratio", mask_ratio},
          {"mean_mask_len", mean_mask_len},
          {"pretrain_epochs", pretrain_epochs},
          {"pretrain_lr", pretrain_lr},
          {"finetune_epochs", finetune_epochs},
          {"finetune_lr", finetune_lr},
          {"batch_size", batch_size},
          {"seed", seed}};
}

std::vector<std::uint8_t> MaskSpec::column(std::size_t f) const {
  std::vector<std::uint8_t> out(rows);
  for (std::size_t t = 0; t < rows; ++t) out[t] = masked[t * cols + f];
  return out;
}

MaskSpec sample_geometric_mask(std::size_t rows, std::size_t cols, double r, double l_m,
                               std::mt19937_64& rng) {
  if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("mask ratio must be in (0, 1)");
  if (!(l_m >= 1.0)) throw std::invalid_argument("mean mask length must be >= 1");
  const double p_end_masked = 1.0 / l_m;
  const double p_end_unmasked = p_end_masked * r / (1.0 - r);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MaskSpec mask{rows, cols, std::vector<std::uint8_t>(rows * cols, 0)};
  for (std::size_t f = 0; f < cols; ++f) {
    bool masked = unit(rng) < r;
    for (std::size_t t = 0; t < rows; ++t) {
      mask.masked[t * cols + f] = masked ? 1 : 0;
      if (unit(rng) < (masked ? p_end_masked : p_end_unmasked)) masked = !masked;
    }
  }
  return mask;
}

Standardizer Standardizer::fit(const std::vector<DaySequence>& sequences, std::size_t feat_dim) {
  Standardizer s{std::vector<double>(feat_dim, 0.0), std::vector<double>(feat_dim, 1.0)};
  std::size_t n = 0;
  for (const auto& seq : sequences) {
    for (std::size_t w = 0; w < seq.pad_mask.size(); ++w) {
      if (!seq.pad_mask[w]) continue;
      ++n;
      for (std::size_t f = 0; f < feat_dim; ++f) s.mean[f] += seq.at(w, f);
    }
  }
  if (n == 0) throw std::invalid_argument("cannot standardise: no unpadded windows");
  for (auto& m : s.mean) m /= static_cast<double>(n);
  std::vector<double> ss(feat_dim, 0.0);
  for (const auto& seq : sequences) {
    for (std::size_t w = 0; w < seq.pad_mask.size(); ++w) {
      if (!seq.pad_mask[w]) continue;
      for (std::size_t f = 0; f < feat_dim; ++f) {
        const double d = seq.at(w, f) - s.mean[f];
        ss[f] += d * d;
      }
    }
  }
  for (std::size_t f = 0; f < feat_dim; ++f) {
    const double sd = std::sqrt(ss[f] / static_cast<double>(n));
    s.std[f] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

TSTModel::TSTModel(const TSTConfig& config) : config_(config), rng_(config.seed) {
  config_.validate();
  const std::size_t d = config_.d_model;
  projection_ = nn::Conv1d("projection", config_.feat_dim, d, config_.conv_kernel, rng_);
  {
    Tensor table({config_.max_len, d});
    std::uniform_real_distribution<double> init(-0.02, 0.02);
    for (auto& v : table.data()) v = init(rng_);
    positional_ = Parameter("positional", std::move(table));
  }
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    layers_.push_back({nn::MultiHeadAttention(p + ".attention", d, config_.n_heads, rng_),
                       nn::BatchNorm(p + ".norm1", d),
                       nn::Linear(p + ".ff1", d, config_.ff_dim, rng_),
                       nn::Linear(p + ".ff2", config_.ff_dim, d, rng_),
                       nn::BatchNorm(p + ".norm2", d)});
  }
  reconstruction_head_ = nn::Linear("reconstruction", d, config_.feat_dim, rng_);
  regression_head_ = nn::Linear("regression", config_.max_len * d, 1, rng_);
  stats_ = {std::vector<double>(config_.feat_dim, 0.0), std::vector<double>(config_.feat_dim, 1.0)};
}

template <class Self, class F>
void TSTModel::visit_parameters(Self& self, F&& f) {
  f(self.projection_.kernels);
  f(self.projection_.bias);
  f(self.positional_);
  for (auto& layer : self.layers_) {
    for (auto* lin : {&layer.attention.query, &layer.attention.key, &layer.attention.value,
                      &layer.attention.output}) {
      f(lin->weight);
      f(lin->bias);
    }
    f(layer.norm1.gamma);
    f(layer.norm1.beta);
    f(layer.ff1.weight);
    f(layer.ff1.bias);
    f(layer.ff2.weight);
    f(layer.ff2.bias);
    f(layer.norm2.gamma);
    f(layer.norm2.beta);
  }
  f(self.reconstruction_head_.weight);
  f(self.reconstruction_head_.bias);
  f(self.regression_head_.weight);
  f(self.regression_head_.bias);
}

std::vector<Parameter*> TSTModel::encoder_parameters() {
  std::vector<Parameter*> out;
  visit_parameters(*this, [&](Parameter& p) { out.push_back(&p); });
  out.resize(out.size() - 4);
  return out;
}

std::vector<Parameter*> TSTModel::pretrain_parameters() {
  auto out = encoder_parameters();
  reconstruction_head_.collect(out);
  return out;
}

std::vector<Parameter*> TSTModel::finetune_parameters() {
  auto out = encoder_parameters();
  regression_head_.collect(out);
  return out;
}

std::vector<Parameter*> TSTModel::all_parameters() {
  std::vector<Parameter*> out;
  visit_parameters(*this, [&](Parameter& p) { out.push_back(&p); });
  return out;
}

std::vector<nn::BatchNormState*> TSTModel::batch_norm_states() {
  std::vector<nn::BatchNormState*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.norm1.state);
    out.push_back(&layer.norm2.state);
  }
  return out;
}

TSTBatch TSTModel::make_batch(const std::vector<DaySequence>& sequences,
                              const std::vector<std::size_t>& indices) const {
  if (config_.feat_dim != kSequenceFeatures || config_.max_len != kWindowsPerDay) {
    throw std::invalid_argument("day sequences need feat_dim 33 and max_len 144");
  }
  const std::size_t T = config_.max_len, F = config_.feat_dim;
  TSTBatch batch{Tensor({indices.size() * T, F}, 0.0), std::vector<std::uint8_t>(indices.size() * T, 0),
                 indices.size()};
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& seq = sequences.at(indices[b]);
    for (std::size_t t = 0; t < T; ++t) {
      if (!seq.pad_mask[t]) continue;
      const std::size_t row = b * T + t;
      batch.valid[row] = 1;
      for (std::size_t f = 0; f < F; ++f) batch.inputs[row * F + f] = stats_.apply(seq.at(t, f), f);
    }
  }
  return batch;
}

Var TSTModel::encode(const Var& inputs, const std::vector<std::uint8_t>& valid, bool train) {
  const std::size_t T = config_.max_len;
  const double p = config_.dropout;
  if (inputs.value().rows() != valid.size() || valid.size() % T != 0) {
    throw std::invalid_argument("encode: inputs must be (batch * max_len) x feat_dim");
  }
  Var x = nn::mul_constant(inputs, row_mask(valid, config_.feat_dim));
  Var h = nn::scale(projection_(x, T), std::sqrt(static_cast<double>(config_.d_model)));
  h = nn::dropout(nn::add_positional(h, positional_.var, T), p, train, rng_);
  for (auto& layer : layers_) {
    h = nn::add(h, nn::dropout(layer.attention(h, T, valid), p, train, rng_));
    h = layer.norm1(h, train);
    Var ff = layer.ff2(nn::dropout(nn::gelu(layer.ff1(h)), p, train, rng_));
    h = nn::add(h, nn::dropout(ff, p, train, rng_));
    h = layer.norm2(h, train);
  }
  h = nn::mul_constant(nn::gelu(h), row_mask(valid, config_.d_model));
  return nn::dropout(h, p, train, rng_);
}

Var TSTModel::reconstruct(const Var& inputs, const std::vector<std::uint8_t>& valid, bool train) {
  return reconstruction_head_(encode(inputs, valid, train));
}

Var TSTModel::regress(const Var& inputs, const std::vector<std::uint8_t>& valid, bool train) {
  const std::size_t batch = valid.size() / config_.max_len;
  const Var flat = nn::reshape(encode(inputs, valid, train), {batch, config_.max_len * config_.d_model});
  return regression_head_(flat);
}

std::vector<double> pretrain(TSTModel& model, const std::vector<DaySequence>& sequences,
                             const PretrainOptions& options) {
  if (sequences.empty()) throw std::invalid_argument("pretrain: no sequences");
  const auto& cfg = model.config();
  model.set_standardizer(Standardizer::fit(sequences, cfg.feat_dim));
  nn::RAdam opt(model.pretrain_parameters(), {.lr = cfg.pretrain_lr});
  auto& rng = model.rng();
  const std::size_t T = cfg.max_len, F = cfg.feat_dim;

  std::vector<double> curve;
  for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    const auto order = shuffled_order(sequences.size(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch_size)));
      const TSTBatch batch = model.make_batch(sequences, idx);
      Tensor masked_inputs = batch.inputs;
      Tensor weight({batch.inputs.rows(), F}, 0.0);
      for (std::size_t b = 0; b < batch.size; ++b) {
        const MaskSpec mask = sample_geometric_mask(T, F, cfg.mask_ratio, cfg.mean_mask_len, rng);
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t row = b * T + t;
          for (std::size_t f = 0; f < F; ++f) {
            if (!mask.at(t, f)) continue;
            masked_inputs[row * F + f] = 0.0;
            if (batch.valid[row]) weight[row * F + f] = 1.0;
          }
        }
      }
      opt.zero_grad();
      const Var pred = model.reconstruct(nn::constant(std::move(masked_inputs)), batch.valid, true);
      const Var loss = nn::masked_mse(pred, batch.inputs, weight);
      check_finite_loss(loss.value()[0], "pretrain", epoch, batches);
      nn::backward(loss);
      opt.step();
      total += loss.value()[0];
      ++batches;
    }
    curve.push_back(total / static_cast<double>(batches));
    if (options.on_epoch) options.on_epoch(epoch, curve.back());
  }
  model.set_mode(TSTMode::Pretrained);
  return curve;
}

ReconstructionScore evaluate_reconstruction(TSTModel& model, const std::vector<DaySequence>& sequences,
                                            std::uint64_t mask_seed) {
  const auto& cfg = model.config();
  const std::size_t T = cfg.max_len, F = cfg.feat_dim;
  std::mt19937_64 rng(mask_seed);
  ReconstructionScore score;
  double model_sse = 0.0, baseline_sse = 0.0;
  for (std::size_t start = 0; start < sequences.size(); start += cfg.batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(sequences.size(), start + cfg.batch_size); ++i) idx.push_back(i);
    const TSTBatch batch = model.make_batch(sequences, idx);
    Tensor masked_inputs = batch.inputs;
    std::vector<std::uint8_t> selected(batch.inputs.size(), 0);
    for (std::size_t b = 0; b < batch.size; ++b) {
      const MaskSpec mask = sample_geometric_mask(T, F, cfg.mask_ratio, cfg.mean_mask_len, rng);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t f = 0; f < F; ++f) {
          if (!mask.at(t, f)) continue;
          const std::size_t i = (b * T + t) * F + f;
          masked_inputs[i] = 0.0;
          selected[i] = batch.valid[b * T + t];
        }
      }
    }
    const Tensor pred = model.reconstruct(nn::constant(std::move(masked_inputs)), batch.valid, false).value();
    for (std::size_t i = 0; i < selected.size(); ++i) {
      if (!selected[i]) continue;
      const double target = batch.inputs[i];
      model_sse += (pred[i] - target) * (pred[i] - target);
      baseline_sse += target * target;
      ++score.masked_entries;
    }
  }
  if (score.masked_entries > 0) {
    score.model_mse = model_sse / static_cast<double>(score.masked_entries);
    score.baseline_mse = baseline_sse / static_cast<double>(score.masked_entries);
  }
  return score;
}

std::vector<double> finetune(TSTModel& model, const std::vector<DaySequence>& sequences,
                             const std::vector<double>& targets, const PretrainOptions& options) {
  if (sequences.empty()) throw std::invalid_argument("finetune: no sequences");
  if (sequences.size() != targets.size()) throw std::invalid_argument("finetune: one target per sequence");
  for (double y : targets) {
    if (!(y >= 1.0 && y <= 5.0)) {
      throw std::invalid_argument("finetune: target " + io::format_double(y) + " outside the 1-5 scale");
    }
  }
  const auto& cfg = model.config();
  if (model.mode() == TSTMode::Untrained) model.set_standardizer(Standardizer::fit(sequences, cfg.feat_dim));
  if (model.mode() != TSTMode::Finetuned) {
    // Start the head at the mean predictor.
    model.regression_weight().value().fill(0.0);
    model.regression_bias().value()[0] =
        std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
  }
  nn::RAdam opt(model.finetune_parameters(), {.lr = cfg.finetune_lr});
  auto& rng = model.rng();

  std::vector<double> curve;
  for (std::size_t epoch = 1; epoch <= cfg.finetune_epochs; ++epoch) {
    const auto order = shuffled_order(sequences.size(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch_size)));
      const TSTBatch batch = model.make_batch(sequences, idx);
      Tensor y({idx.size(), 1});
      for (std::size_t b = 0; b < idx.size(); ++b) y[b] = targets[idx[b]];
      opt.zero_grad();
      const Var loss = nn::mse(model.regress(nn::constant(batch.inputs), batch.valid, true), y);
      check_finite_loss(loss.value()[0], "finetune", epoch, batches);
      nn::backward(loss);
      opt.step();
      total += loss.value()[0];
      ++batches;
    }
    curve.push_back(total / static_cast<double>(batches));
    if (options.on_epoch) options.on_epoch(epoch, curve.back());
  }
  model.set_mode(TSTMode::Finetuned);
  return curve;
}

std::vector<double> predict_raw(TSTModel& model, const std::vector<DaySequence>& sequences) {
  std::vector<double> out;
  out.reserve(sequences.size());
  const std::size_t bs = model.config().batch_size;
  for (std::size_t start = 0; start < sequences.size(); start += bs) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(sequences.size(), start + bs); ++i) idx.push_back(i);
    const TSTBatch batch = model.make_batch(sequences, idx);
    const Tensor pred = model.regress(nn::constant(batch.inputs), batch.valid, false).value();
    out.insert(out.end(), pred.data().begin(), pred.data().end());
  }
  return out;
}

QPrediction predict_q(TSTModel& model, const DaySequence& sequence, double mu) {
  const double raw = predict_raw(model, {sequence}).at(0);
  return {raw, threshold_prediction(raw, mu)};
}

// Model file layout (little-endian):
//   "TRAMTST\0" | u32 version | u8 mode | str config_json | vec mean | vec std
//   | u64 n_params, then per parameter: str name | u64 ndim | u64 dims... | f64 data...
//   | u64 n_norms, then per norm: vec running_mean | vec running_var | f64 momentum | f64 eps
//   | u64 FNV-1a checksum of every preceding byte
namespace {

constexpr char kMagic[8] = {'T', 'R', 'A', 'M', 'T', 'S', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_.append(s);
  }
  void vec(std::span<const double> v) {
    pod<std::uint64_t>(v.size());
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  [[nodiscard]] const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> vec() {
    const auto n = pod<std::uint64_t>();
    if (n > (end_ - pos_) / sizeof(double)) fail("truncated");
    std::vector<double> v(n);
    std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  [[nodiscard]] bool done() const { return pos_ == end_; }
  [[noreturn]] static void fail(const std::string& what) {
    throw std::runtime_error("model file: " + what);
  }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) fail("truncated");
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_model(const TSTModel& model, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kModelFormatVersion);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(model.mode_));
  w.str(model.config_.to_json().dump());
  w.vec(model.stats_.mean);
  w.vec(model.stats_.std);
  std::vector<const Parameter*> params;
  TSTModel::visit_parameters(model, [&](const Parameter& p) { params.push_back(&p); });
  w.pod<std::uint64_t>(params.size());
  for (const auto* p : params) {
    w.str(p->name);
    w.pod<std::uint64_t>(p->value().shape().size());
    for (auto d : p->value().shape()) w.pod<std::uint64_t>(d);
    w.raw(reinterpret_cast<const char*>(p->value().data().data()), p->value().size() * sizeof(double));
  }
  w.pod<std::uint64_t>(model.layers_.size() * 2);
  for (const auto& layer : model.layers_) {
    for (const auto* st : {&layer.norm1.state, &layer.norm2.state}) {
      w.vec(st->running_mean.data());
      w.vec(st->running_var.data());
      w.pod(st->momentum);
      w.pod(st->eps);
    }
  }
  const std::uint64_t sum = fnv1a(w.buffer().data(), w.buffer().size());
  w.pod(sum);
  io::write_atomically(path, [&](std::ostream& out) { out << w.buffer(); }, true);
}

TSTModel load_model(const std::filesystem::path& path) {
  const std::string buf = io::read_file(path);
  if (buf.size() < sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t)) {
    Reader::fail("truncated");
  }
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) Reader::fail("not a TST model (bad magic)");
  std::uint32_t version = 0;
  std::memcpy(&version, buf.data() + sizeof(kMagic), sizeof(version));
  if (version != kModelFormatVersion) {
    Reader::fail("unsupported format version " + std::to_string(version) + " (expected " +
                 std::to_string(kModelFormatVersion) + ")");
  }
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  if (stored != fnv1a(buf.data(), body)) Reader::fail("checksum mismatch (corrupt or truncated)");

  Reader r(buf, body);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) (void)r.pod<char>();
  (void)r.pod<std::uint32_t>();
  const auto mode = r.pod<std::uint8_t>();
  if (mode > static_cast<std::uint8_t>(TSTMode::Finetuned)) Reader::fail("unknown mode");
  TSTConfig cfg;
  try {
    cfg = TSTConfig::from_json(nlohmann::json::parse(r.str()));
  } catch (const std::exception& e) {
    Reader::fail(std::string("bad config: ") + e.what());
  }
  TSTModel model(cfg);
  model.mode_ = static_cast<TSTMode>(mode);
  model.stats_.mean = r.vec();
  model.stats_.std = r.vec();
  if (model.stats_.mean.size() != cfg.feat_dim || model.stats_.std.size() != cfg.feat_dim) {
    Reader::fail("standardiser size mismatch");
  }
  std::vector<Parameter*> params = model.all_parameters();
  if (r.pod<std::uint64_t>() != params.size()) Reader::fail("parameter count mismatch");
  for (auto* p : params) {
    if (r.str() != p->name) Reader::fail("unexpected parameter, wanted " + p->name);
    const auto ndim = r.pod<std::uint64_t>();
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = r.pod<std::uint64_t>();
    if (shape != p->value().shape()) Reader::fail("shape mismatch for " + p->name);
    for (auto& v : p->value().data()) v = r.pod<double>();
  }
  auto norms = model.batch_norm_states();
  if (r.pod<std::uint64_t>() != norms.size()) Reader::fail("batch norm count mismatch");
  for (auto* st : norms) {
    auto mean = r.vec();
    auto var = r.vec();
    if (mean.size() != cfg.d_model || var.size() != cfg.d_model) Reader::fail("batch norm size mismatch");
    st->running_mean = Tensor({cfg.d_model}, std::move(mean));
    st->running_var = Tensor({cfg.d_model}, std::move(var));
    st->momentum = r.pod<double>();
    st->eps = r.pod<double>();
  }
  if (!r.done()) Reader::fail("trailing bytes");
  return model;
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<double>& losses) {
  io::write_atomically(path, [&](std::ostream& out) {
    out << "epoch,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) out << i + 1 << ',' << io::format_double(losses[i]) << '\n';
  });
}

std::vector<double> read_loss_curve(const std::filesystem::path& path) {
  io::CsvReader reader(path);
  std::vector<std::string> fields;
  if (!reader.next(fields) || fields != std::vector<std::string>{"epoch", "loss"}) {
    throw std::runtime_error(path.string() + ": expected header epoch,loss");
  }
  std::vector<double> out;
  while (reader.next(fields)) {
    if (fields.size() != 2) throw std::runtime_error(path.string() + ": bad row");
    out.push_back(io::parse_double(fields[1]));
  }
  return out;
}

}  // namespace tram
