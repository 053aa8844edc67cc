#include <cmath>
#include <numeric>

#include "discnn/nn.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace discnn;
using discnn::test::rand_tensor;

namespace {

// Random-weighted sum makes a scalar objective whose gradient does not
// degenerate (a plain sum is constant through batch norm).
template <typename T>
double weighted_sum(const TensorT<T>& t, const std::vector<double>& w) {
  double s = 0;
  for (int64_t i = 0; i < t.size(); ++i) s += w[static_cast<size_t>(i)] * t.values[i];
  return s;
}

std::vector<double> rand_weights(Rng& rng, int64_t n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

template <typename T>
TensorT<T> from_weights(const std::vector<double>& w, std::vector<int64_t> shape) {
  TensorT<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i)
    t.values[i] = static_cast<T>(w[static_cast<size_t>(i)]);
  return t;
}

}  // namespace

TEST_CASE("conv3x3: zero weights and bias give zero output") {
  Rng rng(1);
  auto x = rand_tensor<float>(rng, {5, 7, 3});
  Tensor w({3, 3, 3, 4});
  Tensor b({4});
  Tensor y = conv3x3_forward(x, w, b);
  CHECK(y.shape == std::vector<int64_t>{5, 7, 4});
  for (float v : y.values) CHECK(v == 0.f);
}

TEST_CASE("conv3x3: identity kernel reproduces the input") {
  Rng rng(2);
  auto x = rand_tensor<float>(rng, {6, 6, 1});
  Tensor w({3, 3, 1, 1});
  w.values[(1 * 3 + 1) * 1 * 1] = 1.f;  // center tap
  Tensor b({1});
  Tensor y = conv3x3_forward(x, w, b);
  REQUIRE(y.shape == x.shape);
  for (size_t i = 0; i < x.values.size(); ++i)
    CHECK(y.values[i] == doctest::Approx(x.values[i]).epsilon(1e-6));
}

TEST_CASE("conv3x3: ramp input with all-ones kernel matches a direct sliding sum") {
  Tensor x({4, 4, 1});
  std::iota(x.values.begin(), x.values.end(), 0.f);  // 0..15
  Tensor w({3, 3, 1, 1});
  for (auto& v : w.values) v = 1.f;
  Tensor b({1});
  Tensor y = conv3x3_forward(x, w, b);
  // independent oracle: brute-force direct convolution with zero padding
  for (int oy = 0; oy < 4; ++oy)
    for (int ox = 0; ox < 4; ++ox) {
      double want = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int sy = oy + dy, sx = ox + dx;
          if (sy < 0 || sy > 3 || sx < 0 || sx > 3) continue;
          want += x.values[static_cast<size_t>(sy * 4 + sx)];
        }
      CHECK(y.values[static_cast<size_t>(oy * 4 + ox)] == doctest::Approx(want));
    }
}

TEST_CASE("conv3x3: shape mismatches name the offending dimension") {
  Rng rng(3);
  auto x = rand_tensor<float>(rng, {4, 4, 3});
  auto w = rand_tensor<float>(rng, {3, 3, 5, 2});  // wrong channel count
  Tensor b({2});
  CHECK_THROWS_WITH_AS(conv3x3_forward(x, w, b),
                       doctest::Contains("channel dim"), shape_error);
  auto w2 = rand_tensor<float>(rng, {3, 3, 3, 2});
  Tensor b2({7});
  CHECK_THROWS_AS(conv3x3_forward(x, w2, b2), shape_error);
}

TEST_CASE("conv3x3 is linear in the input for fixed weights") {
  Rng rng(4);
  auto w = rand_tensor<double>(rng, {3, 3, 2, 3});
  TensorD b({3});  // bias folded out
  auto x = rand_tensor<double>(rng, {5, 5, 2});
  auto y = rand_tensor<double>(rng, {5, 5, 2});
  const double a = 0.37, c = -1.21;
  TensorD mix({5, 5, 2});
  for (size_t i = 0; i < mix.values.size(); ++i)
    mix.values[i] = a * x.values[i] + c * y.values[i];
  TensorD fx = conv3x3_forward(x, w, b);
  TensorD fy = conv3x3_forward(y, w, b);
  TensorD fmix = conv3x3_forward(mix, w, b);
  for (size_t i = 0; i < fmix.values.size(); ++i)
    CHECK(fmix.values[i] ==
          doctest::Approx(a * fx.values[i] + c * fy.values[i]).epsilon(1e-6));
}

TEST_CASE("batchnorm: constant channels normalize to zero") {
  Tensor x({2, 3, 3, 2});
  for (int64_t i = 0; i < x.size(); i += 2) {
    x.values[static_cast<size_t>(i)] = 4.f;
    x.values[static_cast<size_t>(i) + 1] = -2.5f;
  }
  Tensor gamma({2}), beta({2});
  gamma.values = {1.f, 1.f};
  BNStats running;
  Tensor y = batchnorm_forward(x, gamma, beta, 1e-5f, BNMode::train, running);
  for (float v : y.values) CHECK(std::abs(v) <= 1e-4f);
}

TEST_CASE("batchnorm: gamma=0 collapses the output to beta") {
  Rng rng(5);
  auto x = rand_tensor<float>(rng, {3, 2, 2, 3});
  Tensor gamma({3}), beta({3});
  beta.values = {0.5f, -1.f, 2.f};
  BNStats running;
  Tensor y = batchnorm_forward(x, gamma, beta, 1e-5f, BNMode::train, running);
  for (int64_t i = 0; i < y.size(); ++i)
    CHECK(y.values[static_cast<size_t>(i)] ==
          doctest::Approx(beta.values[static_cast<size_t>(i % 3)]));
}

TEST_CASE("batchnorm: two-point batch matches hand-computed statistics") {
  // N=2, C=1, 1x1 spatial, values {0, 2}: mean 1, variance 1
  TensorD x({2, 1, 1, 1});
  x.values = {0.0, 2.0};
  TensorD gamma({1}), beta({1});
  gamma.values = {1.0};
  const double eps = 1e-5;
  BNStatsT<double> running;
  TensorD y = batchnorm_forward(x, gamma, beta, eps, BNMode::train, running);
  const double want = 1.0 / std::sqrt(1.0 + eps);
  CHECK(y.values[0] == doctest::Approx(-want).epsilon(1e-12));
  CHECK(y.values[1] == doctest::Approx(want).epsilon(1e-12));
  // running stats moved toward the batch by one EMA step (momentum 0.1)
  CHECK(running.mean[0] == doctest::Approx(0.1 * 1.0));
  CHECK(running.var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
}

TEST_CASE("batchnorm: infer mode with uninitialized running stats is an error") {
  Rng rng(6);
  auto x = rand_tensor<float>(rng, {2, 2, 2, 2});
  Tensor gamma({2}), beta({2});
  gamma.values = {1.f, 1.f};
  BNStats running;  // never trained
  CHECK_THROWS_WITH_AS(
      batchnorm_forward(x, gamma, beta, 1e-5f, BNMode::infer, running),
      doctest::Contains("uninitialized"), std::runtime_error);
}

TEST_CASE("batchnorm: train-mode output has zero mean and the eps-shrunk variance") {
  Rng rng(7);
  auto x = rand_tensor<double>(rng, {4, 5, 5, 3}, -2.0, 3.0);
  TensorD gamma({3}), beta({3});
  gamma.values = {1.0, 1.0, 1.0};
  const double eps = 1e-5;
  BNStatsT<double> running;
  TensorD y = batchnorm_forward(x, gamma, beta, eps, BNMode::train, running);
  const int64_t m = 4 * 5 * 5;
  for (int c = 0; c < 3; ++c) {
    double mean = 0, var = 0, in_var = 0, in_mean = 0;
    for (int64_t i = 0; i < m; ++i) in_mean += x.values[static_cast<size_t>(i * 3 + c)];
    in_mean /= m;
    for (int64_t i = 0; i < m; ++i) {
      double d = x.values[static_cast<size_t>(i * 3 + c)] - in_mean;
      in_var += d * d;
    }
    in_var /= m;
    for (int64_t i = 0; i < m; ++i) mean += y.values[static_cast<size_t>(i * 3 + c)];
    mean /= m;
    for (int64_t i = 0; i < m; ++i) {
      double d = y.values[static_cast<size_t>(i * 3 + c)] - mean;
      var += d * d;
    }
    var /= m;
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(var == doctest::Approx(in_var / (in_var + eps)).epsilon(1e-4));
  }
}

TEST_CASE("relu: negative and zero inputs clamp to zero; random vector matches oracle") {
  Tensor neg({4});
  neg.values = {-1.f, -0.5f, -2.f, -0.001f};
  for (float v : relu_forward(neg).values) CHECK(v == 0.f);
  Tensor zeros({3});
  for (float v : relu_forward(zeros).values) CHECK(v == 0.f);

  Rng rng(8);
  auto x = rand_tensor<float>(rng, {64}, -2.0, 2.0);
  Tensor y = relu_forward(x);
  for (size_t i = 0; i < x.values.size(); ++i)
    CHECK(y.values[i] == std::max(0.f, x.values[i]));
}

TEST_CASE("relu is idempotent") {
  Rng rng(9);
  auto x = rand_tensor<float>(rng, {128}, -3.0, 3.0);
  Tensor once = relu_forward(x);
  Tensor twice = relu_forward(once);
  CHECK(once.values == twice.values);
}

TEST_CASE("maxpool2: constant input halves the resolution") {
  Tensor x({6, 8, 2});
  for (auto& v : x.values) v = 3.25f;
  auto r = maxpool2_forward(x);
  CHECK(r.out.shape == std::vector<int64_t>{3, 4, 2});
  for (float v : r.out.values) CHECK(v == 3.25f);
}

TEST_CASE("maxpool2: 96x96 input pools to 48x48") {
  Rng rng(10);
  auto x = rand_tensor<float>(rng, {96, 96, 1});
  auto r = maxpool2_forward(x);
  CHECK(r.out.shape == std::vector<int64_t>{48, 48, 1});
}

TEST_CASE("maxpool2: analytic max and argmax on a single block") {
  Tensor x({2, 2, 1});
  x.values = {1.f, 2.f, 3.f, 4.f};
  auto r = maxpool2_forward(x);
  REQUIRE(r.out.size() == 1);
  CHECK(r.out.values[0] == 4.f);
  CHECK(r.argmax[0] == 3);  // flat index of (y=1, x=1)
}

TEST_CASE("maxpool2: odd extents are rejected") {
  Tensor x({5, 4, 1});
  CHECK_THROWS_WITH_AS(maxpool2_forward(x), doctest::Contains("odd"), shape_error);
  Tensor x2({4, 7, 1});
  CHECK_THROWS_AS(maxpool2_forward(x2), shape_error);
}

TEST_CASE("maxpool2 backward routes every output gradient to exactly one cell") {
  Rng rng(11);
  auto x = rand_tensor<double>(rng, {2, 6, 4, 3});
  auto r = maxpool2_forward(x);
  auto dy = rand_tensor<double>(rng, r.out.shape);
  TensorD dx = maxpool2_backward(r.argmax, x.shape, dy);
  double dy_sum = 0, dx_sum = 0;
  for (double v : dy.values) dy_sum += v;
  for (double v : dx.values) dx_sum += v;
  CHECK(dx_sum == doctest::Approx(dy_sum).epsilon(1e-12));
  // each output cell contributes to exactly one input cell
  int64_t nonzero = 0;
  for (double v : dx.values) nonzero += (v != 0.0);
  CHECK(nonzero <= dy.size());
}

TEST_CASE("linear: zero weights yield the bias in every row") {
  Rng rng(12);
  auto x = rand_tensor<float>(rng, {3, 4});
  Tensor w({4, 2});
  Tensor b({2});
  b.values = {1.5f, -0.5f};
  Tensor y = linear_forward(x, w, b);
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(y.values[static_cast<size_t>(i * 2)] == 1.5f);
    CHECK(y.values[static_cast<size_t>(i * 2 + 1)] == -0.5f);
  }
}

TEST_CASE("linear: identity weights reproduce the input") {
  Rng rng(13);
  auto x = rand_tensor<float>(rng, {2, 5});
  Tensor w({5, 5});
  for (int i = 0; i < 5; ++i) w.values[static_cast<size_t>(i * 5 + i)] = 1.f;
  Tensor b({5});
  Tensor y = linear_forward(x, w, b);
  for (size_t i = 0; i < x.values.size(); ++i)
    CHECK(y.values[i] == doctest::Approx(x.values[i]));
}

TEST_CASE("linear: one-line hand arithmetic") {
  // map rows [1,0],[1,1] with bias [0,1] applied to [1,2]: out = [1, 4].
  // Weights are stored [D_in, D_out], i.e. the transpose of those rows.
  Tensor x({1, 2});
  x.values = {1.f, 2.f};
  Tensor w({2, 2});
  w.values = {1.f, 1.f, 0.f, 1.f};
  Tensor b({2});
  b.values = {0.f, 1.f};
  Tensor y = linear_forward(x, w, b);
  CHECK(y.values[0] == doctest::Approx(1.f));
  CHECK(y.values[1] == doctest::Approx(4.f));
}

TEST_CASE("linear: shape mismatch is an error") {
  Tensor x({2, 3});
  Tensor w({4, 2});
  Tensor b({2});
  CHECK_THROWS_AS(linear_forward(x, w, b), shape_error);
}

TEST_CASE("sgd_step: lr 0 and zero grads leave parameters unchanged") {
  Rng rng(14);
  auto p = rand_tensor<float>(rng, {7});
  Tensor p0 = p;
  auto g = rand_tensor<float>(rng, {7});
  Tensor v;
  sgd_step(p, g, v, 0.f, 0.9f);
  CHECK(p.values == p0.values);

  Tensor zg({7});
  Tensor v2;
  sgd_step(p, zg, v2, 0.1f, 0.9f);
  CHECK(p.values == p0.values);
}

TEST_CASE("sgd_step: one-step arithmetic") {
  Tensor p({1});
  p.values = {1.f};
  Tensor g({1});
  g.values = {2.f};
  Tensor v;
  sgd_step(p, g, v, 0.1f, 0.f);
  CHECK(p.values[0] == doctest::Approx(0.8f));
}

TEST_CASE("sgd_step: shape mismatch is an error") {
  Tensor p({3}), g({4}), v;
  CHECK_THROWS_AS(sgd_step(p, g, v, 0.1f, 0.9f), shape_error);
}

// ---- finite-difference gradient checks (extended precision) ----

TEST_CASE("grad check: linear layer is exact to 1e-9") {
  Rng rng(20);
  auto x = rand_tensor<double>(rng, {3, 6});
  auto w = rand_tensor<double>(rng, {6, 4});
  auto b = rand_tensor<double>(rng, {4});
  auto lw = rand_weights(rng, 3 * 4);
  auto d_out = from_weights<double>(lw, {3, 4});

  auto fn = [&] { return weighted_sum(linear_forward(x, w, b), lw); };
  auto grads = linear_backward(x, w, d_out);
  CHECK(grad_check(fn, w.values, grads.d_weights.values, 50, 101) <= 1e-9);
  CHECK(grad_check(fn, b.values, grads.d_bias.values, 50, 102) <= 1e-9);
  CHECK(grad_check(fn, x.values, grads.d_input.values, 50, 103) <= 1e-9);
}

TEST_CASE("grad check: conv3x3 backward matches finite differences") {
  Rng rng(21);
  auto x = rand_tensor<double>(rng, {2, 6, 5, 3});
  auto w = rand_tensor<double>(rng, {3, 3, 3, 4});
  auto b = rand_tensor<double>(rng, {4});
  auto lw = rand_weights(rng, 2 * 6 * 5 * 4);
  auto d_out = from_weights<double>(lw, {2, 6, 5, 4});

  auto fn = [&] { return weighted_sum(conv3x3_forward(x, w, b), lw); };
  auto grads = conv3x3_backward(x, w, d_out);
  CHECK(grad_check(fn, w.values, grads.d_weights.values, 50, 201) <= 1e-4);
  CHECK(grad_check(fn, b.values, grads.d_bias.values, 50, 202) <= 1e-4);
  CHECK(grad_check(fn, x.values, grads.d_input.values, 50, 203) <= 1e-4);
}

TEST_CASE("grad check: batchnorm train mode matches finite differences") {
  Rng rng(22);
  auto x = rand_tensor<double>(rng, {3, 4, 4, 3});
  TensorD gamma({3}), beta({3});
  for (auto& v : gamma.values) v = rng.uniform(0.5, 1.5);
  for (auto& v : beta.values) v = rng.uniform(-0.5, 0.5);
  auto lw = rand_weights(rng, x.size());
  auto d_out = from_weights<double>(lw, x.shape);

  auto fn = [&] {
    BNStatsT<double> stats;
    return weighted_sum(
        batchnorm_forward(x, gamma, beta, 1e-5, BNMode::train, stats), lw);
  };
  BNStatsT<double> stats;
  BNCacheT<double> cache;
  batchnorm_forward(x, gamma, beta, 1e-5, BNMode::train, stats, 0.1, &cache);
  auto grads = batchnorm_backward(cache, gamma, d_out);
  CHECK(grad_check(fn, gamma.values, grads.d_gamma.values, 50, 301) <= 1e-4);
  CHECK(grad_check(fn, beta.values, grads.d_beta.values, 50, 302) <= 1e-4);
  CHECK(grad_check(fn, x.values, grads.d_input.values, 50, 303) <= 1e-4);
}

TEST_CASE("grad check: relu and maxpool match finite differences") {
  Rng rng(23);
  // keep inputs away from the kink/tie sets where FD is undefined
  TensorD x({2, 4, 4, 3});
  for (auto& v : x.values) {
    double u = rng.uniform(0.05, 1.0);
    v = rng.uniform() < 0.5 ? -u : u;
  }
  auto lw = rand_weights(rng, x.size());
  auto d_out = from_weights<double>(lw, x.shape);
  auto relu_fn = [&] { return weighted_sum(relu_forward(x), lw); };
  TensorD d_relu = relu_backward(x, d_out);
  CHECK(grad_check(relu_fn, x.values, d_relu.values, 50, 401) <= 1e-4);

  auto pr = maxpool2_forward(x);
  auto lw2 = rand_weights(rng, pr.out.size());
  auto d_out2 = from_weights<double>(lw2, pr.out.shape);
  auto pool_fn = [&] { return weighted_sum(maxpool2_forward(x).out, lw2); };
  TensorD d_pool = maxpool2_backward(pr.argmax, x.shape, d_out2);
  CHECK(grad_check(pool_fn, x.values, d_pool.values, 50, 402) <= 1e-4);
}
