#pragma once

#include <random>
#include <vector>

#include "tram/nn/ops.hpp"

namespace tram::nn {

/// Fully connected layer, weight stored (in x out). Initialised
/// U(-1/sqrt(in), 1/sqrt(in)).
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);
  [[nodiscard]] Var operator()(const Var& x) const { return linear(x, weight.var, bias.var); }
  void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&weight, &bias}); }
};

struct Conv1d {
  Parameter kernels;  // c_out x c_in x k
  Parameter bias;
  Conv1dOptions options;

  Conv1d() = default;
  Conv1d(const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t kernel,
         std::mt19937_64& rng, Conv1dOptions opts = {});
  [[nodiscard]] Var operator()(const Var& x, std::size_t seq_len) const {
    return conv1d(x, kernels.var, bias.var, seq_len, options);
  }
  void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&kernels, &bias}); }
};

struct BatchNorm {
  Parameter gamma;
  Parameter beta;
  BatchNormState state;

  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t features);
  [[nodiscard]] Var operator()(const Var& x, bool train) {
    return batch_norm(x, gamma.var, beta.var, state, train);
  }
  void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&gamma, &beta}); }
};

/// Self-attention with input and output projections.
struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t n_heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t d_model, std::size_t heads,
                     std::mt19937_64& rng);
  /// x is (batch*seq_len) x d_model; key_valid marks real (unpadded) rows.
  [[nodiscard]] Var operator()(const Var& x, std::size_t seq_len,
                               const std::vector<std::uint8_t>& key_valid) const;
  void collect(std::vector<Parameter*>& out);
};

}  // namespace tram::nn
