#include <doctest.h>

#include <cmath>
#include <random>

#include "generators.hpp"
#include "tram/nn/layers.hpp"
#include "tram/nn/optim.hpp"

using namespace tram::nn;
using tram::oracle::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;

std::vector<Parameter*> as_params(std::vector<Parameter>& ps) {
  std::vector<Parameter*> out;
  for (auto& p : ps) out.push_back(&p);
  return out;
}

}  // namespace

TEST_CASE("conv1d") {
  SUBCASE("k=1 identity kernels reproduce the input") {
    std::mt19937_64 rng(1);
    const auto x = random_tensor({6, 3}, rng);
    Tensor k({3, 3, 1}, 0.0);
    for (std::size_t c = 0; c < 3; ++c) k[(c * 3 + c)] = 1.0;
    const auto y = conv1d(constant(x), constant(k), Var(), 6);
    CHECK(y.value() == x);
  }
  SUBCASE("hand convolution without padding") {
    const auto y = conv1d(constant(Tensor({3, 1}, {1, 2, 3})), constant(Tensor({1, 1, 2}, {1, 1})),
                          Var(), 3, {.padding = Padding::Valid});
    CHECK(y.value().data()[0] == 3.0);
    CHECK(y.value().data()[1] == 5.0);
    CHECK(y.value().size() == 2);
  }
  SUBCASE("same padding keeps the length, sequences do not leak into each other") {
    Tensor x({8, 1}, {1, 1, 1, 1, 10, 10, 10, 10});  // two sequences of 4
    const auto y = conv1d(constant(x), constant(Tensor({1, 1, 3}, {1, 1, 1})), Var(), 4);
    CHECK(y.value().data()[0] == 2.0);
    CHECK(y.value().data()[3] == 2.0);
    CHECK(y.value().data()[4] == 20.0);
  }
  SUBCASE("stride and dilation geometry") {
    CHECK(conv1d_output_length(10, 3, {.stride = 2, .dilation = 1, .padding = Padding::Valid}) == 4);
    CHECK(conv1d_output_length(10, 3, {.stride = 1, .dilation = 2, .padding = Padding::Valid}) == 6);
    CHECK(conv1d_output_length(10, 4, {.stride = 1, .dilation = 3, .padding = Padding::Same}) == 10);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS((void)conv1d(constant(Tensor({4, 2})), constant(Tensor({1, 3, 1})), Var(), 4),
                    std::invalid_argument);
  }
  SUBCASE("gradient on random 5x3 input") {
    std::mt19937_64 rng(2);
    for (Conv1dOptions opts : {Conv1dOptions{}, Conv1dOptions{2, 1, Padding::Valid},
                               Conv1dOptions{1, 2, Padding::Same}}) {
      std::vector<Parameter> ps;
      ps.emplace_back("x", random_tensor({10, 3}, rng));
      ps.emplace_back("k", random_tensor({4, 3, 2}, rng));
      ps.emplace_back("b", random_tensor({4}, rng));
      const auto out_len = conv1d_output_length(5, 2, opts);
      const auto probe = random_tensor({2 * out_len, 4}, rng);
      const double err = grad_check_parameters(
          [&] { return weighted_sum(conv1d(ps[0].var, ps[1].var, ps[2].var, 5, opts), probe); },
          as_params(ps));
      CHECK(err < 1e-6);
    }
  }
}

TEST_CASE("batch_norm") {
  std::mt19937_64 rng(3);
  Parameter gamma("g", Tensor({4}, 1.0)), beta("b", Tensor({4}, 0.0));

  SUBCASE("train mode standardises each column") {
    BatchNormState st(4);
    auto x = random_tensor({32, 4}, rng, 3.0);
    for (std::size_t i = 0; i < 32; ++i) x[i * 4 + 1] += 100.0;
    const auto y = batch_norm(constant(x), gamma.var, beta.var, st, true).value();
    for (Eigen::Index c = 0; c < 4; ++c) {
      const auto col = y.mat().col(c);
      const double mean = col.mean();
      const double var = (col.array() - mean).square().mean();
      const auto xc = x.mat().col(c);
      const double raw_var = (xc.array() - xc.mean()).square().mean();
      CHECK(std::abs(mean) < 1e-9);
      CHECK(var == doctest::Approx(raw_var / (raw_var + 1e-5)).epsilon(1e-10));
    }
    CHECK(st.running_mean[1] == doctest::Approx(0.1 * x.mat().col(1).mean()));
  }
  SUBCASE("constant column maps to beta") {
    BatchNormState st(4);
    Parameter b2("b", Tensor({4}, {0.5, -1, 2, 3}));
    Tensor x({8, 4}, 7.0);
    const auto y = batch_norm(constant(x), gamma.var, b2.var, st, true).value();
    for (std::size_t i = 0; i < 8; ++i) CHECK(y[i * 4 + 2] == doctest::Approx(2.0));
  }
  SUBCASE("single row in train mode") {
    BatchNormState st(4);
    CHECK_THROWS_AS((void)batch_norm(constant(Tensor({1, 4})), gamma.var, beta.var, st, true),
                    std::invalid_argument);
  }
  SUBCASE("gradients in train and eval mode") {
    for (bool train : {true, false}) {
      BatchNormState st(3);
      st.running_mean = random_tensor({3}, rng);
      st.running_var = Tensor({3}, {0.5, 1.5, 2.0});
      std::vector<Parameter> ps;
      ps.emplace_back("x", random_tensor({6, 3}, rng));
      ps.emplace_back("g", random_tensor({3}, rng));
      ps.emplace_back("b", random_tensor({3}, rng));
      const auto probe = random_tensor({6, 3}, rng);
      const double err = grad_check_parameters(
          [&] {
            auto saved = st;  // train mode mutates running stats
            auto out = weighted_sum(batch_norm(ps[0].var, ps[1].var, ps[2].var, saved, train), probe);
            return out;
          },
          as_params(ps));
      CHECK(err < 1e-5);
    }
  }
}

TEST_CASE("attention") {
  std::mt19937_64 rng(4);

  SUBCASE("single position gets weight exactly one") {
    const auto q = random_tensor({1, 4}, rng);
    const auto w = attention_weights(q, random_tensor({1, 4}, rng), 2, 1, {1});
    CHECK(w[0] == 1.0);
    CHECK(w[1] == 1.0);
    MultiHeadAttention mha("a", 4, 2, rng);
    const auto x = random_tensor({1, 4}, rng);
    const auto out = mha(constant(x), 1, {1}).value();
    const auto expected = mha.output(mha.value(constant(x))).value();
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(expected[i]).epsilon(1e-14));
  }
  SUBCASE("identical keys give uniform weights over valid positions") {
    Tensor k({5, 4});
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t c = 0; c < 4; ++c) k[t * 4 + c] = 0.3 * c;
    const auto w = attention_weights(random_tensor({5, 4}, rng), k, 1, 5, {1, 1, 0, 1, 1});
    for (std::size_t i = 0; i < 5; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        const double expected = j == 2 ? 0.0 : 0.25;
        CHECK(w[i * 5 + j] == doctest::Approx(expected).epsilon(1e-12));
        total += w[i * 5 + j];
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
  SUBCASE("padded positions receive exactly zero weight and cannot influence the output") {
    MultiHeadAttention mha("a", 8, 2, rng);
    auto x = random_tensor({12, 8}, rng);
    const std::vector<std::uint8_t> valid{1, 1, 1, 0, 0, 1, 1, 1, 1, 1, 0, 1};
    const auto base = mha(constant(x), 6, valid).value();
    for (std::size_t c = 0; c < 8; ++c) {
      x[3 * 8 + c] += 5.0;
      x[10 * 8 + c] -= 3.0;
    }
    const auto perturbed = mha(constant(x), 6, valid).value();
    for (std::size_t row : {0, 1, 2, 5, 6, 7, 8, 9, 11}) {
      for (std::size_t c = 0; c < 8; ++c) CHECK(perturbed[row * 8 + c] == base[row * 8 + c]);
    }
    const auto w = attention_weights(x, x, 2, 6, valid);
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 6; ++j) total += w[r * 6 + j];
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
    for (std::size_t r = 0; r < 12; ++r) {
      CHECK(w[r * 6 + 3] == 0.0);  // sequence 0, heads 0 and 1
      CHECK(w[r * 6 + 4] == 0.0);
    }
  }
  SUBCASE("all-padded sequence is an error") {
    CHECK_THROWS_AS((void)attention_weights(Tensor({4, 2}), Tensor({4, 2}), 1, 2, {1, 1, 0, 0}),
                    std::invalid_argument);
  }
  SUBCASE("width not divisible by heads") {
    CHECK_THROWS_AS(MultiHeadAttention("a", 6, 4, rng), std::invalid_argument);
  }
  SUBCASE("gradients through projections and masked softmax") {
    MultiHeadAttention mha("a", 6, 3, rng);
    std::vector<Parameter*> params;
    mha.collect(params);
    Parameter x("x", random_tensor({8, 6}, rng));
    params.push_back(&x);
    const std::vector<std::uint8_t> valid{1, 1, 0, 1, 1, 1, 1, 0};
    const auto probe = random_tensor({8, 6}, rng);
    const double err =
        grad_check_parameters([&] { return weighted_sum(mha(x.var, 4, valid), probe); }, params);
    CHECK(err < kGradTol);
  }
}

TEST_CASE("elementwise and linear gradients") {
  std::mt19937_64 rng(5);
  std::vector<Parameter> ps;
  ps.emplace_back("x", random_tensor({6, 4}, rng));
  ps.emplace_back("w", random_tensor({4, 3}, rng));
  ps.emplace_back("b", random_tensor({3}, rng));
  ps.emplace_back("pos", random_tensor({3, 3}, rng));
  ps.emplace_back("m", random_tensor({3, 6}, rng));
  const auto mask = random_tensor({6, 3}, rng);
  const auto target = random_tensor({6, 3}, rng);
  Tensor weight({6, 3}, 1.0);
  weight[4] = 0.0;
  weight[11] = 0.0;
  const double err = grad_check_parameters(
      [&] {
        auto h = linear(ps[0].var, ps[1].var, ps[2].var);
        h = add_positional(gelu(h), ps[3].var, 3);
        h = add(h, scale(mul_constant(h, mask), 0.7));
        auto flat = reshape(h, {3, 6});
        flat = matmul(flat, reshape(ps[4].var, {6, 3}));
        return add(masked_mse(reshape(flat, {9}), Tensor({9}, 0.1), Tensor({9}, 1.0)),
                   masked_mse(h, target, weight));
      },
      as_params(ps));
  CHECK(err < kGradTol);
}

TEST_CASE("masked_mse with no selected entries is zero") {
  const auto loss = masked_mse(leaf(Tensor({3}, 1.0)), Tensor({3}, 0.0), Tensor({3}, 0.0));
  CHECK(loss.value()[0] == 0.0);
  backward(loss);
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(6);
  const auto x = constant(Tensor({1000}, 1.0));
  CHECK(dropout(x, 0.1, false, rng).value() == x.value());
  const auto y = dropout(x, 0.5, true, rng).value();
  std::size_t zeros = 0;
  for (double v : y.data()) {
    CHECK((v == 0.0 || v == 2.0));
    zeros += v == 0.0;
  }
  CHECK(zeros > 400);
  CHECK(zeros < 600);
}

TEST_CASE("RAdam") {
  SUBCASE("first step is plain bias-corrected momentum") {
    Parameter w("w", Tensor({3}, {1.0, -2.0, 0.5}));
    RAdam opt({&w}, {.lr = 0.01});
    const std::vector<double> g{0.3, -1.2, 4.0};
    std::copy(g.begin(), g.end(), w.grad().data().begin());
    opt.step();
    CHECK(opt.sma_length(1) == doctest::Approx(1.0));
    // m_hat = g at t = 1, so w <- w - lr * g.
    CHECK(w.value()[0] == doctest::Approx(1.0 - 0.01 * 0.3).epsilon(1e-15));
    CHECK(w.value()[1] == doctest::Approx(-2.0 + 0.01 * 1.2).epsilon(1e-15));
    CHECK(w.value()[2] == doctest::Approx(0.5 - 0.01 * 4.0).epsilon(1e-15));
  }
  SUBCASE("rectification engages once rho_t exceeds 4") {
    Parameter w("w", Tensor({1}, 0.0));
    RAdam opt({&w});
    long first = 0;
    for (long t = 1; t < 20 && first == 0; ++t) {
      if (opt.sma_length(t) > 4.0) first = t;
    }
    CHECK(first == 5);
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    Parameter w("w", Tensor({2}, {1.5, -0.5}));
    RAdam opt({&w});
    for (int i = 0; i < 10; ++i) {
      opt.zero_grad();
      opt.step();
    }
    CHECK(w.value()[0] == 1.5);
    CHECK(w.value()[1] == -0.5);
  }
  SUBCASE("minimises w^2") {
    Parameter w("w", Tensor({1}, 1.0));
    RAdam opt({&w}, {.lr = 0.01});
    for (int i = 0; i < 200; ++i) {
      opt.zero_grad();
      w.grad()[0] = 2.0 * w.value()[0];
      opt.step();
    }
    // Reference trajectory from a direct evaluation of the update rule.
    CHECK(w.value()[0] == doctest::Approx(0.5662862064767917).epsilon(1e-10));
    for (int i = 0; i < 800; ++i) {
      opt.zero_grad();
      w.grad()[0] = 2.0 * w.value()[0];
      opt.step();
    }
    CHECK(std::abs(w.value()[0]) < 0.1);
  }
  SUBCASE("non-finite gradient is rejected") {
    Parameter w("w", Tensor({1}, 1.0));
    RAdam opt({&w});
    w.grad()[0] = std::nan("");
    CHECK_THROWS_AS(opt.step(), std::runtime_error);
    CHECK(w.value()[0] == 1.0);
  }
}

TEST_CASE("grad_check calibration") {
  const auto quad = [](const std::vector<double>& t) {
    return 3.0 * t[0] * t[0] + t[0] * t[1] - 2.0 * t[1] * t[1] + t[2];
  };
  const std::vector<double> theta{0.7, -1.3, 2.0};
  const std::vector<double> exact{6.0 * 0.7 - 1.3, 0.7 + 4.0 * 1.3, 1.0};
  CHECK(grad_check(quad, exact, theta) < 1e-8);
  std::vector<double> doubled = exact;
  for (auto& g : doubled) g *= 2.0;
  CHECK(grad_check(quad, doubled, theta) == doctest::Approx(1.0).epsilon(1e-6));
}
