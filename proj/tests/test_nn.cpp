// Copyright 2026 The deepmpc-vtr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <filesystem>
#include <functional>
#include <random>

#include "vtr/nn/layers.hpp"
#include "vtr/nn/serialize.hpp"
#include "vtr/nn/stack.hpp"

namespace vtr::nn {
namespace {

using D = double;

Tensor<D> random_tensor(int n, int c, int h, int w, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Tensor<D> t(n, c, h, w);
  for (auto& v : t.values()) v = nd(rng);
  return t;
}

void randomize(Param<D>& p, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& v : p.value) v = nd(rng);
}

double dot(const Tensor<D>& a, const Tensor<D>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Central difference of f with respect to every entry of `v`.
std::vector<double> numeric_grad(std::span<double> v, const std::function<double()>& f,
                                 double h = 1e-6) {
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double up = f();
    v[i] = keep - h;
    const double dn = f();
    v[i] = keep;
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

void expect_close(std::span<const double> analytic, std::span<const double> numeric,
                  double tol, const char* what) {
  ASSERT_EQ(analytic.size(), numeric.size()) << what;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    EXPECT_NEAR(analytic[i], numeric[i], tol * std::max(1.0, std::abs(numeric[i])))
        << what << " index " << i;
  }
}

// Direct-loop convolution.
Tensor<D> naive_conv(const Tensor<D>& x, const Conv2d<D>& conv, int k, int s, int p) {
  const int out = conv.out_channels(), in = conv.in_channels();
  const int ho = (x.h() + 2 * p - k) / s + 1, wo = (x.w() + 2 * p - k) / s + 1;
  Tensor<D> y(x.n(), out, ho, wo);
  for (int b = 0; b < x.n(); ++b)
    for (int o = 0; o < out; ++o)
      for (int r = 0; r < ho; ++r)
        for (int c = 0; c < wo; ++c) {
          double acc = conv.bias.value[o];
          for (int i = 0; i < in; ++i)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int yy = r * s - p + ky, xx = c * s - p + kx;
                if (yy < 0 || xx < 0 || yy >= x.h() || xx >= x.w()) continue;
                acc += conv.weight.value[((o * in + i) * k + ky) * k + kx] * x(b, i, yy, xx);
              }
          y(b, o, r, c) = acc;
        }
  return y;
}

// Scatter form of the transposed convolution.
Tensor<D> naive_deconv(const Tensor<D>& x, const ConvTranspose2d<D>& up, int k, int s, int p) {
  const int out = up.out_channels(), in = up.in_channels();
  const int ho = (x.h() - 1) * s - 2 * p + k, wo = (x.w() - 1) * s - 2 * p + k;
  Tensor<D> y(x.n(), out, ho, wo);
  for (int b = 0; b < x.n(); ++b)
    for (int o = 0; o < out; ++o)
      for (int r = 0; r < ho; ++r)
        for (int c = 0; c < wo; ++c) y(b, o, r, c) = up.bias.value[o];
  for (int b = 0; b < x.n(); ++b)
    for (int i = 0; i < in; ++i)
      for (int r = 0; r < x.h(); ++r)
        for (int c = 0; c < x.w(); ++c)
          for (int o = 0; o < out; ++o)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int yy = r * s - p + ky, xx = c * s - p + kx;
                if (yy < 0 || xx < 0 || yy >= ho || xx >= wo) continue;
                y(b, o, yy, xx) +=
                    up.weight.value[((i * out + o) * k + ky) * k + kx] * x(b, i, r, c);
              }
  return y;
}

struct ConvCase {
  int k, s, p, h;
};

class ConvTest : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvTest, ForwardMatchesDirectLoops) {
  const auto [k, s, p, h] = GetParam();
  std::mt19937_64 rng(11);
  Conv2d<D> conv(3, 5, k, s, p);
  randomize(conv.weight, rng);
  randomize(conv.bias, rng);
  const auto x = random_tensor(2, 3, h, h + 2, rng);
  const auto y = conv.forward(x);
  const auto ref = naive_conv(x, conv, k, s, p);
  ASSERT_TRUE(y.same_shape(ref));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST_P(ConvTest, GradientsMatchFiniteDifferences) {
  const auto [k, s, p, h] = GetParam();
  std::mt19937_64 rng(12);
  Conv2d<D> conv(2, 3, k, s, p);
  randomize(conv.weight, rng);
  randomize(conv.bias, rng);
  auto x = random_tensor(2, 2, h, h, rng);
  const auto r = random_tensor(2, 3, conv.forward(x).h(), conv.forward(x).w(), rng);
  const auto loss = [&] { return dot(conv.forward(x), r); };

  const auto gx = conv.input_grad(x, r);
  std::vector<double> xv(x.values().begin(), x.values().end());
  const auto nx = numeric_grad(xv, [&] {
    std::copy(xv.begin(), xv.end(), x.values().begin());
    return loss();
  });
  std::copy(xv.begin(), xv.end(), x.values().begin());
  expect_close(gx.values(), nx, 1e-6, "dx");

  conv.weight.zero_grad();
  conv.bias.zero_grad();
  conv.accumulate_grads(x, r);
  expect_close(conv.weight.grad, numeric_grad(conv.weight.value, loss), 1e-6, "dW");
  expect_close(conv.bias.grad, numeric_grad(conv.bias.value, loss), 1e-6, "db");
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvTest,
                         ::testing::Values(ConvCase{4, 2, 1, 8}, ConvCase{1, 1, 0, 3},
                                           ConvCase{3, 1, 1, 5}, ConvCase{4, 2, 1, 2}));

TEST(ConvTranspose2d, ForwardMatchesScatterLoops) {
  std::mt19937_64 rng(13);
  ConvTranspose2d<D> up(4, 3, 4, 2, 1);
  randomize(up.weight, rng);
  randomize(up.bias, rng);
  const auto x = random_tensor(2, 4, 3, 5, rng);
  const auto y = up.forward(x);
  EXPECT_EQ(y.h(), 6);
  EXPECT_EQ(y.w(), 10);
  const auto ref = naive_deconv(x, up, 4, 2, 1);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(ConvTranspose2d, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(14);
  ConvTranspose2d<D> up(3, 2, 4, 2, 1);
  randomize(up.weight, rng);
  randomize(up.bias, rng);
  auto x = random_tensor(2, 3, 2, 3, rng);
  const auto r = random_tensor(2, 2, 4, 6, rng);
  const auto loss = [&] { return dot(up.forward(x), r); };

  const auto gx = up.input_grad(x, r);
  std::vector<double> xv(x.values().begin(), x.values().end());
  const auto nx = numeric_grad(xv, [&] {
    std::copy(xv.begin(), xv.end(), x.values().begin());
    return loss();
  });
  std::copy(xv.begin(), xv.end(), x.values().begin());
  expect_close(gx.values(), nx, 1e-6, "dx");

  up.accumulate_grads(x, r);
  expect_close(up.weight.grad, numeric_grad(up.weight.value, loss), 1e-6, "dW");
  expect_close(up.bias.grad, numeric_grad(up.bias.value, loss), 1e-6, "db");
}

TEST(BatchNorm2d, TrainingNormalizesPerChannel) {
  std::mt19937_64 rng(15);
  BatchNorm2d<D> bn(3);
  auto x = random_tensor(4, 3, 5, 5, rng, 3.0);
  for (auto& v : x.values()) v += 2.0;
  const auto y = bn.forward_train(x, nullptr);
  for (int c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    int n = 0;
    for (int b = 0; b < 4; ++b)
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
          s += y(b, c, i, j);
          ss += y(b, c, i, j) * y(b, c, i, j);
          ++n;
        }
    EXPECT_NEAR(s / n, 0.0, 1e-12);
    EXPECT_NEAR(ss / n, 1.0, 1e-5);  // eps in the denominator
  }
  // Running statistics moved 10% toward the batch statistics.
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(bn.running_mean[c], 0.2, 0.15);
}

TEST(BatchNorm2d, EvalUsesRunningStatistics) {
  BatchNorm2d<D> bn(1);
  bn.running_mean = {2.0};
  bn.running_var = {4.0};
  bn.gamma.value = {3.0};
  bn.beta.value = {-1.0};
  Tensor<D> x(1, 1, 1, 2);
  x[0] = 2.0;
  x[1] = 6.0;
  const auto y = bn.forward_eval(x, nullptr);
  EXPECT_NEAR(y[0], -1.0, 1e-12);
  EXPECT_NEAR(y[1], -1.0 + 3.0 * 4.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_EQ(bn.running_mean[0], 2.0);
}

TEST(BatchNorm2d, GradientsMatchFiniteDifferences) {
  for (bool training : {true, false}) {
    std::mt19937_64 rng(16);
    BatchNorm2d<D> bn(2);
    randomize(bn.gamma, rng);
    randomize(bn.beta, rng);
    bn.running_mean = {0.3, -0.2};
    bn.running_var = {1.5, 0.7};
    auto x = random_tensor(3, 2, 2, 3, rng);
    const auto r = random_tensor(3, 2, 2, 3, rng);
    // A copy keeps the running statistics fixed across loss evaluations.
    const auto loss = [&] {
      BatchNorm2d<D> tmp = bn;
      return dot(training ? tmp.forward_train(x, nullptr) : tmp.forward_eval(x, nullptr), r);
    };
    BatchNorm2d<D> work = bn;
    typename BatchNorm2d<D>::Cache cache;
    if (training) {
      work.forward_train(x, &cache);
    } else {
      work.forward_eval(x, &cache);
    }
    const auto gx = work.input_grad(cache, r);
    std::vector<double> xv(x.values().begin(), x.values().end());
    const auto nx = numeric_grad(xv, [&] {
      std::copy(xv.begin(), xv.end(), x.values().begin());
      return loss();
    });
    std::copy(xv.begin(), xv.end(), x.values().begin());
    expect_close(gx.values(), nx, 1e-5, training ? "train dx" : "eval dx");

    work.accumulate_grads(cache, r);
    expect_close(work.gamma.grad, numeric_grad(bn.gamma.value, loss), 1e-5, "dgamma");
    expect_close(work.beta.grad, numeric_grad(bn.beta.value, loss), 1e-5, "dbeta");
  }
}

TEST(LeakyRelu, ValuesAndGradient) {
  Tensor<D> x(1, 1, 1, 4);
  x[0] = -2.0;
  x[1] = -0.5;
  x[2] = 0.5;
  x[3] = 3.0;
  const auto y = leaky_relu(x);
  EXPECT_DOUBLE_EQ(y[0], -0.4);
  EXPECT_DOUBLE_EQ(y[1], -0.1);
  EXPECT_DOUBLE_EQ(y[2], 0.5);
  EXPECT_DOUBLE_EQ(y[3], 3.0);
  Tensor<D> g(1, 1, 1, 4, 1.0);
  const auto gx = leaky_relu_backward(x, g);
  EXPECT_DOUBLE_EQ(gx[0], 0.2);
  EXPECT_DOUBLE_EQ(gx[3], 1.0);
}

TEST(Adam, FirstStepsMatchHandComputation) {
  Param<D> p;
  p.resize(2);
  p.value = {1.0, -1.0};
  Adam<D> opt(0.1);
  p.grad = {0.5, -2.0};
  opt.step({&p});
  // Step 1: the bias-corrected moments give lr * g / |g|.
  EXPECT_NEAR(p.value[0], 0.9, 1e-7);
  EXPECT_NEAR(p.value[1], -0.9, 1e-7);
  p.grad = {-0.5, -2.0};
  opt.step({&p});
  const double m = (0.9 * 0.05 + 0.1 * -0.5) / (1 - 0.81);
  const double v = (0.999 * 0.00025 + 0.001 * 0.25) / (1 - 0.999 * 0.999);
  const double after1 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
  EXPECT_NEAR(p.value[0], after1 - 0.1 * m / (std::sqrt(v) + 1e-8), 1e-12);
  EXPECT_NEAR(p.value[1], -0.8, 1e-7);
  EXPECT_EQ(opt.steps(), 2);
}

TEST(Adam, MinimizesQuadratic) {
  Param<D> p;
  p.resize(3);
  p.value = {4.0, -3.0, 0.5};
  Adam<D> opt(0.05);
  for (int i = 0; i < 2000; ++i) {
    for (int j = 0; j < 3; ++j) p.grad[j] = 2 * (p.value[j] - j);
    opt.step({&p});
  }
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(p.value[j], j, 1e-3);
}

ConvStack<D> small_stack(std::mt19937_64& rng) {
  std::vector<Stage<D>> st;
  st.push_back(make_stage<D>(StageKind::kDown, 2, 3, true));
  st.push_back(make_stage<D>(StageKind::kPointwise, 3, 4, true));
  st.push_back(make_stage<D>(StageKind::kUp, 4, 2, false));
  ConvStack<D> s(std::move(st));
  s.init(rng);
  for (auto* p : s.params()) randomize(*p, rng, 0.4);
  return s;
}

TEST(ConvStack, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  auto stack = small_stack(rng);
  auto x = random_tensor(3, 2, 4, 4, rng);
  const auto r = random_tensor(3, 2, 4, 4, rng);
  const auto loss = [&] {
    ConvStack<D> tmp = stack;
    return dot(tmp.forward_train(x, nullptr), r);
  };
  ConvStack<D> work = stack;
  typename ConvStack<D>::Trace trace;
  work.forward_train(x, &trace);
  const auto gx = work.backward(trace, r, true);

  std::vector<double> xv(x.values().begin(), x.values().end());
  const auto nx = numeric_grad(xv, [&] {
    std::copy(xv.begin(), xv.end(), x.values().begin());
    return loss();
  });
  std::copy(xv.begin(), xv.end(), x.values().begin());
  expect_close(gx.values(), nx, 1e-5, "dx");

  const auto wp = work.params();
  const auto sp = stack.params();
  for (std::size_t i = 0; i < sp.size(); ++i) {
    expect_close(wp[i]->grad, numeric_grad(sp[i]->value, loss), 1e-5, "param");
  }
}

TEST(ConvStack, EvalInputGradMatchesFiniteDifferences) {
  std::mt19937_64 rng(18);
  auto stack = small_stack(rng);
  // Put non-trivial running statistics in place.
  stack.forward_train(random_tensor(4, 2, 4, 4, rng), nullptr);
  auto x = random_tensor(2, 2, 4, 4, rng);
  const auto r = random_tensor(2, 2, 4, 4, rng);
  typename ConvStack<D>::Trace trace;
  stack.forward_eval(x, &trace);
  const auto before = weights_hash(stack.params(), stack.buffers());
  const auto gx = stack.input_grad(trace, r);
  EXPECT_EQ(before, weights_hash(stack.params(), stack.buffers()));
  std::vector<double> xv(x.values().begin(), x.values().end());
  const auto nx = numeric_grad(xv, [&] {
    std::copy(xv.begin(), xv.end(), x.values().begin());
    return dot(stack.forward_eval(x, nullptr), r);
  });
  expect_close(gx.values(), nx, 1e-5, "dx");
  for (auto* p : stack.params()) {
    for (double g : p->grad) EXPECT_EQ(g, 0.0);
  }
}

TEST(ArchConfig, Widths) {
  ArchConfig a;
  EXPECT_EQ(a.down_stages(), 7);
  EXPECT_EQ(a.down_width(0), 8);
  EXPECT_EQ(a.down_width(5), 256);
  EXPECT_EQ(a.down_width(6), 512);
  ArchConfig narrow{16, 5, 4, 6};
  EXPECT_EQ(narrow.down_width(0), 4);
  EXPECT_EQ(narrow.down_width(1), 6);
  EXPECT_EQ(narrow.down_width(3), 6);
  EXPECT_THROW((ArchConfig{16, 4, 4, 6}.validate()), ArgumentError);
  EXPECT_THROW((ArchConfig{24, 8, 4, 6}.validate()), ArgumentError);
}

class WeightsFile : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("vtr_nn_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(WeightsFile, RoundTripRestoresEveryValue) {
  std::mt19937_64 rng(19);
  std::vector<Stage<float>> st;
  st.push_back(make_stage<float>(StageKind::kDown, 2, 3, true));
  st.push_back(make_stage<float>(StageKind::kUp, 3, 2, false));
  ConvStack<float> a(st), b(st);
  a.init(rng);
  a.forward_train(Tensor<float>(2, 2, 4, 4, 0.5f), nullptr);
  a.stages()[0].bn.running_var[1] = 3.25f;
  save_weights<float>(dir_ / "w.bin", "toy/v1", a.params(), a.buffers());
  EXPECT_NE(weights_hash(a.params(), a.buffers()), weights_hash(b.params(), b.buffers()));
  load_weights<float>(dir_ / "w.bin", "toy/v1", b.params(), b.buffers());
  EXPECT_EQ(weights_hash(a.params(), a.buffers()), weights_hash(b.params(), b.buffers()));
  EXPECT_EQ(b.stages()[0].bn.running_var[1], 3.25f);
}

TEST_F(WeightsFile, RejectsWrongArchitectureAndGarbage) {
  std::vector<Stage<float>> st{make_stage<float>(StageKind::kPointwise, 2, 2, true)};
  ConvStack<float> a(st);
  save_weights<float>(dir_ / "w.bin", "toy/v1", a.params(), a.buffers());
  try {
    load_weights<float>(dir_ / "w.bin", "toy/v2", a.params(), a.buffers());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("fingerprint"), std::string::npos);
  }
  std::ofstream(dir_ / "junk.bin") << "not weights";
  EXPECT_THROW(load_weights<float>(dir_ / "junk.bin", "toy/v1", a.params(), a.buffers()),
               IoError);
  EXPECT_THROW(load_weights<float>(dir_ / "absent.bin", "toy/v1", a.params(), a.buffers()),
               IoError);
  // Truncated file.
  std::filesystem::resize_file(dir_ / "w.bin", std::filesystem::file_size(dir_ / "w.bin") - 3);
  EXPECT_THROW(load_weights<float>(dir_ / "w.bin", "toy/v1", a.params(), a.buffers()), IoError);
}

}  // namespace
}  // namespace vtr::nn
