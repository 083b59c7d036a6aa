#include "tram/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace tram::nn {

namespace {

Tensor uniform(std::vector<std::size_t> shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Parameter(name + ".weight", uniform({in, out}, bound, rng));
  bias = Parameter(name + ".bias", uniform({out}, bound, rng));
}

Conv1d::Conv1d(const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t kernel,
               std::mt19937_64& rng, Conv1dOptions opts)
    : options(opts) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * kernel));
  kernels = Parameter(name + ".kernels", uniform({c_out, c_in, kernel}, bound, rng));
  bias = Parameter(name + ".bias", uniform({c_out}, bound, rng));
}

BatchNorm::BatchNorm(const std::string& name, std::size_t features)
    : gamma(name + ".gamma", Tensor({features}, 1.0)),
      beta(name + ".beta", Tensor({features}, 0.0)),
      state(features) {}

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t d_model,
                                       std::size_t heads, std::mt19937_64& rng)
    : query(name + ".query", d_model, d_model, rng),
      key(name + ".key", d_model, d_model, rng),
      value(name + ".value", d_model, d_model, rng),
      output(name + ".output", d_model, d_model, rng),
      n_heads(heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw std::invalid_argument("d_model must be divisible by the number of heads");
  }
}

Var MultiHeadAttention::operator()(const Var& x, std::size_t seq_len,
                                   const std::vector<std::uint8_t>& key_valid) const {
  const auto attended =
      scaled_dot_product_attention(query(x), key(x), value(x), n_heads, seq_len, key_valid);
  return output(attended);
}

void MultiHeadAttention::collect(std::vector<Parameter*>& out) {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
}

}  // namespace tram::nn
