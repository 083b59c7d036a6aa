#include "tram/nn/ops.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tram::nn {

namespace {

using Eigen::Index;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

Tensor& parent_grad(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
bool wants_grad(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require(A.cols() == B.rows(), "matmul: inner dimensions " + shape_string(A.shape()) + " * " +
                                    shape_string(B.shape()));
  Tensor out({A.rows(), B.cols()});
  out.mat().noalias() = A.mat() * B.mat();
  return make_node(std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad.mat();
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    if (wants_grad(self, 0)) parent_grad(self, 0).mat().noalias() += g * B.mat().transpose();
    if (wants_grad(self, 1)) parent_grad(self, 1).mat().noalias() += A.mat().transpose() * g;
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const auto& X = x.value();
  const auto& W = weight.value();
  const auto& b = bias.value();
  require(X.cols() == W.rows() && b.size() == W.cols(),
          "linear: " + shape_string(X.shape()) + " with weight " + shape_string(W.shape()) +
              " and bias " + shape_string(b.shape()));
  Tensor out({X.rows(), W.cols()});
  auto Y = out.mat();
  Y.noalias() = X.mat() * W.mat();
  Y.rowwise() += ConstMatrixMap(b.data().data(), 1, static_cast<Index>(b.size())).row(0);
  return make_node(std::move(out), {x, weight, bias}, [](Node& self) {
    const auto g = self.grad.mat();
    const auto& X = self.parents[0]->value;
    const auto& W = self.parents[1]->value;
    if (wants_grad(self, 0)) parent_grad(self, 0).mat().noalias() += g * W.mat().transpose();
    if (wants_grad(self, 1)) parent_grad(self, 1).mat().noalias() += X.mat().transpose() * g;
    if (wants_grad(self, 2)) {
      auto& gb = parent_grad(self, 2);
      MatrixMap(gb.data().data(), 1, static_cast<Index>(gb.size())).row(0) += g.colwise().sum();
    }
  });
}

Var add(const Var& a, const Var& b) {
  require(a.value().size() == b.value().size(), "add: size mismatch " + shape_string(a.shape()) +
                                                    " vs " + shape_string(b.shape()));
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants_grad(self, p)) continue;
      auto& g = parent_grad(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return make_node(std::move(out), {x}, [factor](Node& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Var mul_constant(const Var& x, const Tensor& factor) {
  require(x.value().size() == factor.size(), "mul_constant: size mismatch");
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  return make_node(std::move(out), {x}, [factor](Node& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor[i] * self.grad[i];
  });
}

Var add_positional(const Var& x, const Var& table, std::size_t seq_len) {
  const auto& X = x.value();
  const auto& P = table.value();
  require(seq_len > 0 && X.rows() % seq_len == 0, "add_positional: rows not a multiple of seq_len");
  require(P.rows() >= seq_len && P.cols() == X.cols(), "add_positional: table shape " +
                                                           shape_string(P.shape()));
  Tensor out = X;
  auto Y = out.mat();
  const auto table_rows = P.mat().topRows(static_cast<Index>(seq_len));
  const std::size_t batch = X.rows() / seq_len;
  for (std::size_t b = 0; b < batch; ++b) {
    Y.middleRows(static_cast<Index>(b * seq_len), static_cast<Index>(seq_len)) += table_rows;
  }
  return make_node(std::move(out), {x, table}, [seq_len, batch](Node& self) {
    const auto g = self.grad.mat();
    if (wants_grad(self, 0)) parent_grad(self, 0).mat() += g;
    if (wants_grad(self, 1)) {
      auto gp = parent_grad(self, 1).mat();
      for (std::size_t b = 0; b < batch; ++b) {
        gp.topRows(static_cast<Index>(seq_len)) +=
            g.middleRows(static_cast<Index>(b * seq_len), static_cast<Index>(seq_len));
      }
    }
  });
}

Var gelu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return make_node(std::move(out), {x}, [](Node& self) {
    const auto& X = self.parents[0]->value;
    auto& g = parent_grad(self, 0);
    constexpr double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = X[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Var dropout(const Var& x, double p, bool train, std::mt19937_64& rng) {
  if (!train || p <= 0.0) return x;
  require(p < 1.0, "dropout probability must be < 1");
  Tensor keep(x.shape());
  std::bernoulli_distribution drop(p);
  const double kept = 1.0 / (1.0 - p);
  for (auto& v : keep.data()) v = drop(rng) ? 0.0 : kept;
  return mul_constant(x, keep);
}

Var reshape(const Var& x, std::vector<std::size_t> shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_node(std::move(out), {x}, [](Node& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var weighted_sum(const Var& x, const Tensor& weights) {
  require(x.value().size() == weights.size(), "weighted_sum: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) total += x.value()[i] * weights[i];
  return make_node(Tensor({1}, {total}), {x}, [weights](Node& self) {
    auto& g = parent_grad(self, 0);
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * weights[i];
  });
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel,
                                 const Conv1dOptions& options) {
  require(kernel >= 1 && options.stride >= 1 && options.dilation >= 1, "conv1d: bad geometry");
  const std::size_t span = options.dilation * (kernel - 1) + 1;
  const std::size_t padded = length + (options.padding == Padding::Same ? span - 1 : 0);
  require(padded >= span, "conv1d: sequence of length " + std::to_string(length) +
                              " shorter than kernel span " + std::to_string(span));
  return (padded - span) / options.stride + 1;
}

Var conv1d(const Var& x, const Var& kernels, const Var& bias, std::size_t seq_len,
           const Conv1dOptions& options) {
  const auto& X = x.value();
  const auto& K = kernels.value();
  require(K.shape().size() == 3, "conv1d: kernels must be c_out x c_in x k");
  const std::size_t c_out = K.dim(0), c_in = K.dim(1), k = K.dim(2);
  require(X.cols() == c_in, "conv1d: input has " + std::to_string(X.cols()) + " channels, kernels " +
                                std::to_string(c_in));
  require(seq_len > 0 && X.rows() % seq_len == 0, "conv1d: rows not a multiple of seq_len");
  const bool has_bias = bias && !bias.value().empty();
  require(!has_bias || bias.value().size() == c_out, "conv1d: bias size");
  const std::size_t out_len = conv1d_output_length(seq_len, k, options);
  const std::size_t batch = X.rows() / seq_len;
  const std::size_t pad_left =
      options.padding == Padding::Same ? options.dilation * (k - 1) / 2 : 0;

  // source[j][r] = input row feeding output row r through tap j, or -1.
  std::vector<std::vector<long>> source(k, std::vector<long>(batch * out_len, -1));
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < out_len; ++t) {
        const long s = static_cast<long>(t * options.stride + j * options.dilation) -
                       static_cast<long>(pad_left);
        if (s >= 0 && s < static_cast<long>(seq_len)) {
          source[j][b * out_len + t] = static_cast<long>(b * seq_len) + s;
        }
      }
    }
  }
  auto tap_weights = [c_in, c_out, k](const Tensor& kernel, std::size_t j) {
    RowMatrix w(static_cast<Index>(c_in), static_cast<Index>(c_out));
    for (std::size_t o = 0; o < c_out; ++o)
      for (std::size_t c = 0; c < c_in; ++c) w(static_cast<Index>(c), static_cast<Index>(o)) = kernel[(o * c_in + c) * k + j];
    return w;
  };
  auto gather = [&X, c_in](const std::vector<long>& rows) {
    RowMatrix g = RowMatrix::Zero(static_cast<Index>(rows.size()), static_cast<Index>(c_in));
    const auto src = X.mat();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] >= 0) g.row(static_cast<Index>(r)) = src.row(rows[r]);
    }
    return g;
  };

  Tensor out({batch * out_len, c_out}, 0.0);
  auto Y = out.mat();
  for (std::size_t j = 0; j < k; ++j) Y.noalias() += gather(source[j]) * tap_weights(K, j);
  if (has_bias) {
    Y.rowwise() += ConstMatrixMap(bias.value().data().data(), 1, static_cast<Index>(c_out)).row(0);
  }

  std::vector<Var> parents{x, kernels};
  if (has_bias) parents.push_back(bias);
  return make_node(std::move(out), std::move(parents),
                   [source = std::move(source), c_in, c_out, k, has_bias, tap_weights](Node& self) {
                     const auto g = self.grad.mat();
                     const auto& X = self.parents[0]->value;
                     const auto& K = self.parents[1]->value;
                     for (std::size_t j = 0; j < k; ++j) {
                       const auto& rows = source[j];
                       if (wants_grad(self, 0)) {
                         const RowMatrix gx = g * tap_weights(K, j).transpose();
                         auto dx = parent_grad(self, 0).mat();
                         for (std::size_t r = 0; r < rows.size(); ++r) {
                           if (rows[r] >= 0) dx.row(rows[r]) += gx.row(static_cast<Index>(r));
                         }
                       }
                       if (wants_grad(self, 1)) {
                         RowMatrix xj = RowMatrix::Zero(static_cast<Index>(rows.size()), static_cast<Index>(c_in));
                         const auto src = X.mat();
                         for (std::size_t r = 0; r < rows.size(); ++r) {
                           if (rows[r] >= 0) xj.row(static_cast<Index>(r)) = src.row(rows[r]);
                         }
                         const RowMatrix gw = xj.transpose() * g;  // c_in x c_out
                         auto& gk = parent_grad(self, 1);
                         for (std::size_t o = 0; o < c_out; ++o)
                           for (std::size_t c = 0; c < c_in; ++c)
                             gk[(o * c_in + c) * k + j] += gw(static_cast<Index>(c), static_cast<Index>(o));
                       }
                     }
                     if (has_bias && wants_grad(self, 2)) {
                       auto& gb = parent_grad(self, 2);
                       MatrixMap(gb.data().data(), 1, static_cast<Index>(c_out)).row(0) += g.colwise().sum();
                     }
                   });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool train) {
  const auto& X = x.value();
  const std::size_t n = X.rows(), f = X.cols();
  require(gamma.value().size() == f && beta.value().size() == f, "batch_norm: parameter size");
  require(state.running_mean.size() == f, "batch_norm: running statistics size");
  const Eigen::Map<const Eigen::RowVectorXd> g(gamma.value().data().data(), static_cast<Index>(f));
  const Eigen::Map<const Eigen::RowVectorXd> bt(beta.value().data().data(), static_cast<Index>(f));

  Eigen::RowVectorXd mean, var;
  if (train) {
    require(n >= 2, "batch_norm: train mode needs at least 2 rows, got " + std::to_string(n));
    mean = X.mat().colwise().mean();
    var = (X.mat().rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n);
    Eigen::Map<Eigen::RowVectorXd> rm(state.running_mean.data().data(), static_cast<Index>(f));
    Eigen::Map<Eigen::RowVectorXd> rv(state.running_var.data().data(), static_cast<Index>(f));
    rm = (1.0 - state.momentum) * rm + state.momentum * mean;
    rv = (1.0 - state.momentum) * rv +
         state.momentum * var * (static_cast<double>(n) / static_cast<double>(n - 1));
  } else {
    mean = Eigen::Map<const Eigen::RowVectorXd>(state.running_mean.data().data(), static_cast<Index>(f));
    var = Eigen::Map<const Eigen::RowVectorXd>(state.running_var.data().data(), static_cast<Index>(f));
  }
  const Eigen::RowVectorXd inv_std = (var.array() + state.eps).rsqrt().matrix();

  Tensor xhat({n, f});
  xhat.mat() = (X.mat().rowwise() - mean).array().rowwise() * inv_std.array();
  Tensor out({n, f});
  out.mat() = (xhat.mat().array().rowwise() * g.array()).rowwise() + bt.array();

  return make_node(std::move(out), {x, gamma, beta},
                   [xhat = std::move(xhat), inv_std, train](Node& self) {
                     const auto dy = self.grad.mat();
                     const auto xh = xhat.mat();
                     const auto& gam = self.parents[1]->value;
                     const Eigen::Map<const Eigen::RowVectorXd> g(gam.data().data(), static_cast<Index>(gam.size()));
                     if (wants_grad(self, 1)) {
                       auto& gg = parent_grad(self, 1);
                       Eigen::Map<Eigen::RowVectorXd>(gg.data().data(), static_cast<Index>(gg.size())) +=
                           (dy.array() * xh.array()).colwise().sum().matrix();
                     }
                     if (wants_grad(self, 2)) {
                       auto& gb = parent_grad(self, 2);
                       Eigen::Map<Eigen::RowVectorXd>(gb.data().data(), static_cast<Index>(gb.size())) +=
                           dy.colwise().sum();
                     }
                     if (!wants_grad(self, 0)) return;
                     const RowMatrix dxhat = dy.array().rowwise() * g.array();
                     auto dx = parent_grad(self, 0).mat();
                     if (!train) {
                       dx += (dxhat.array().rowwise() * inv_std.array()).matrix();
                       return;
                     }
                     const double n = static_cast<double>(dy.rows());
                     const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
                     const Eigen::RowVectorXd sum_dx = (dxhat.array() * xh.array()).colwise().sum().matrix();
                     const RowMatrix inner = ((dxhat * n).rowwise() - sum_d).array() -
                                             xh.array().rowwise() * sum_dx.array();
                     dx += (inner.array().rowwise() * (inv_std.array() / n)).matrix();
                   });
}

namespace {

struct AttentionGeometry {
  std::size_t batch, heads, seq_len, head_dim;
};

AttentionGeometry attention_geometry(const Tensor& q, const Tensor& k, std::size_t n_heads,
                                     std::size_t seq_len, const std::vector<std::uint8_t>& key_valid) {
  require(n_heads > 0 && q.cols() % n_heads == 0, "attention: model width " +
                                                      std::to_string(q.cols()) +
                                                      " not divisible by heads");
  require(q.shape() == k.shape(), "attention: q/k shape mismatch");
  require(seq_len > 0 && q.rows() % seq_len == 0, "attention: rows not a multiple of seq_len");
  require(key_valid.size() == q.rows(), "attention: key mask length");
  const std::size_t batch = q.rows() / seq_len;
  for (std::size_t b = 0; b < batch; ++b) {
    bool any = false;
    for (std::size_t t = 0; t < seq_len; ++t) any = any || key_valid[b * seq_len + t] != 0;
    if (!any) throw std::invalid_argument("attention: sequence " + std::to_string(b) + " is entirely padded");
  }
  return {batch, n_heads, seq_len, q.cols() / n_heads};
}

}  // namespace

Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t n_heads, std::size_t seq_len,
                         const std::vector<std::uint8_t>& key_valid) {
  const auto geo = attention_geometry(q, k, n_heads, seq_len, key_valid);
  const auto T = static_cast<Index>(geo.seq_len);
  const auto dh = static_cast<Index>(geo.head_dim);
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(geo.head_dim));
  Tensor weights({geo.batch * geo.heads * geo.seq_len, geo.seq_len});
  auto W = weights.mat();
  const auto Q = q.mat();
  const auto K = k.mat();
  for (std::size_t b = 0; b < geo.batch; ++b) {
    const Index r0 = static_cast<Index>(b) * T;
    for (std::size_t h = 0; h < geo.heads; ++h) {
      const Index c0 = static_cast<Index>(h) * dh;
      auto P = W.middleRows((static_cast<Index>(b * geo.heads + h)) * T, T);
      P.noalias() = Q.block(r0, c0, T, dh) * K.block(r0, c0, T, dh).transpose();
      for (Index i = 0; i < T; ++i) {
        double hi = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < T; ++j) {
          if (key_valid[static_cast<std::size_t>(r0 + j)]) hi = std::max(hi, P(i, j));
        }
        double total = 0.0;
        for (Index j = 0; j < T; ++j) {
          if (key_valid[static_cast<std::size_t>(r0 + j)]) {
            P(i, j) = std::exp((P(i, j) - hi) * scale_factor);
            total += P(i, j);
          } else {
            P(i, j) = 0.0;
          }
        }
        P.row(i) /= total;
      }
    }
  }
  return weights;
}

Var scaled_dot_product_attention(const Var& q, const Var& k, const Var& v, std::size_t n_heads,
                                 std::size_t seq_len, const std::vector<std::uint8_t>& key_valid) {
  require(v.value().shape() == q.value().shape(), "attention: v shape mismatch");
  auto weights = attention_weights(q.value(), k.value(), n_heads, seq_len, key_valid);
  const auto geo = attention_geometry(q.value(), k.value(), n_heads, seq_len, key_valid);
  const auto T = static_cast<Index>(geo.seq_len);
  const auto dh = static_cast<Index>(geo.head_dim);

  Tensor out(q.value().shape());
  auto O = out.mat();
  const auto V = v.value().mat();
  const auto W = weights.mat();
  for (std::size_t b = 0; b < geo.batch; ++b) {
    const Index r0 = static_cast<Index>(b) * T;
    for (std::size_t h = 0; h < geo.heads; ++h) {
      const Index c0 = static_cast<Index>(h) * dh;
      O.block(r0, c0, T, dh).noalias() =
          W.middleRows(static_cast<Index>(b * geo.heads + h) * T, T) * V.block(r0, c0, T, dh);
    }
  }

  return make_node(std::move(out), {q, k, v}, [weights = std::move(weights), geo](Node& self) {
    const auto T = static_cast<Index>(geo.seq_len);
    const auto dh = static_cast<Index>(geo.head_dim);
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(geo.head_dim));
    const auto dO = self.grad.mat();
    const auto Q = self.parents[0]->value.mat();
    const auto K = self.parents[1]->value.mat();
    const auto V = self.parents[2]->value.mat();
    const auto W = weights.mat();
    const bool gq = wants_grad(self, 0), gk = wants_grad(self, 1), gv = wants_grad(self, 2);
    RowMatrix dP(T, T), dS(T, T);
    for (std::size_t b = 0; b < geo.batch; ++b) {
      const Index r0 = static_cast<Index>(b) * T;
      for (std::size_t h = 0; h < geo.heads; ++h) {
        const Index c0 = static_cast<Index>(h) * dh;
        const auto P = W.middleRows(static_cast<Index>(b * geo.heads + h) * T, T);
        const auto dOb = dO.block(r0, c0, T, dh);
        if (gv) parent_grad(self, 2).mat().block(r0, c0, T, dh).noalias() += P.transpose() * dOb;
        if (!gq && !gk) continue;
        dP.noalias() = dOb * V.block(r0, c0, T, dh).transpose();
        const Eigen::VectorXd row_dot = (dP.array() * P.array()).rowwise().sum();
        dS = (P.array() * (dP.colwise() - row_dot).array()) * scale_factor;
        if (gq) parent_grad(self, 0).mat().block(r0, c0, T, dh).noalias() += dS * K.block(r0, c0, T, dh);
        if (gk) parent_grad(self, 1).mat().block(r0, c0, T, dh).noalias() += dS.transpose() * Q.block(r0, c0, T, dh);
      }
    }
  });
}

Var masked_mse(const Var& pred, const Tensor& target, const Tensor& weight) {
  const auto& P = pred.value();
  require(P.size() == target.size() && P.size() == weight.size(), "masked_mse: size mismatch");
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (weight[i] == 0.0) continue;
    const double d = P[i] - target[i];
    total += d * d;
    ++count;
  }
  const double loss = count == 0 ? 0.0 : total / static_cast<double>(count);
  return make_node(Tensor({1}, {loss}), {pred}, [target, weight, count](Node& self) {
    if (count == 0) return;
    const auto& P = self.parents[0]->value;
    auto& g = parent_grad(self, 0);
    const double up = self.grad[0] * 2.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (weight[i] != 0.0) g[i] += up * (P[i] - target[i]);
    }
  });
}

Var mse(const Var& pred, const Tensor& target) {
  return masked_mse(pred, target, Tensor(target.shape(), 1.0));
}

}  // namespace tram::nn
