#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "tram/nn/autograd.hpp"

namespace tram::nn {

// Sequence-shaped activations are stored as (batch * seq_len) x channels
// matrices: rows [b * seq_len, (b + 1) * seq_len) belong to sequence b.

/// a (m x k) * b (k x n).
[[nodiscard]] Var matmul(const Var& a, const Var& b);
/// x (n x in) * weight (in x out) + bias (out).
[[nodiscard]] Var linear(const Var& x, const Var& weight, const Var& bias);
[[nodiscard]] Var add(const Var& a, const Var& b);
[[nodiscard]] Var scale(const Var& x, double factor);
/// Elementwise product with a constant tensor of the same size.
[[nodiscard]] Var mul_constant(const Var& x, const Tensor& factor);
/// Adds a (seq_len x d) table to every sequence of x.
[[nodiscard]] Var add_positional(const Var& x, const Var& table, std::size_t seq_len);
/// Exact (erf) GELU.
[[nodiscard]] Var gelu(const Var& x);
/// Inverted dropout; identity when !train or p == 0.
[[nodiscard]] Var dropout(const Var& x, double p, bool train, std::mt19937_64& rng);
[[nodiscard]] Var reshape(const Var& x, std::vector<std::size_t> shape);
/// Sum of x * weights over all elements (scalar). Handy for gradient probes.
[[nodiscard]] Var weighted_sum(const Var& x, const Tensor& weights);

enum class Padding { Valid, Same };

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  Padding padding = Padding::Same;
};

/// Output length for a sequence of `length` steps.
[[nodiscard]] std::size_t conv1d_output_length(std::size_t length, std::size_t kernel,
                                               const Conv1dOptions& options);

/// Cross-correlation over time of each sequence in x ((batch*seq_len) x c_in)
/// with kernels (c_out x c_in x k); bias (c_out) may be empty. Same padding
/// puts floor(total/2) zeros before the sequence.
[[nodiscard]] Var conv1d(const Var& x, const Var& kernels, const Var& bias, std::size_t seq_len,
                         const Conv1dOptions& options = {});

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t features = 0)
      : running_mean({features}, 0.0), running_var({features}, 1.0) {}
};

/// Normalises each column of x (rows = batch). Train mode uses batch moments
/// (population variance) and updates running statistics with the unbiased
/// variance; eval mode uses the running statistics.
[[nodiscard]] Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
                             bool train);

/// Softmax attention weights (batch * heads) blocks of (seq_len x seq_len),
/// stacked as a ((batch*heads*seq_len) x seq_len) tensor. key_valid has one
/// entry per row of q; invalid keys receive exactly zero weight.
[[nodiscard]] Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t n_heads,
                                       std::size_t seq_len,
                                       const std::vector<std::uint8_t>& key_valid);

/// Multi-head scaled dot-product attention on already projected q, k, v.
/// Throws if any sequence has no valid key.
[[nodiscard]] Var scaled_dot_product_attention(const Var& q, const Var& k, const Var& v,
                                               std::size_t n_heads, std::size_t seq_len,
                                               const std::vector<std::uint8_t>& key_valid);

/// Mean of (pred - target)^2 over entries with nonzero weight. Returns 0 when
/// no entry is selected.
[[nodiscard]] Var masked_mse(const Var& pred, const Tensor& target, const Tensor& weight);
[[nodiscard]] Var mse(const Var& pred, const Tensor& target);

}  // namespace tram::nn
