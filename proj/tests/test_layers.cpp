// Copyright 2026 The kws-toolkit Authors
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

#include <cmath>
#include <vector>

#include "kws/grad_check.hpp"
#include "kws/layers.hpp"
#include "kws/rng.hpp"

namespace {

using kws::Tensor;
using kws::TensorD;

void FillUniform(TensorD& t, kws::Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
}

double Project(const TensorD& proj, const TensorD& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += proj.values()[i] * x.values()[i];
  return acc;
}

TEST(Matmul, SmallKnownProduct) {
  TensorD a = TensorD::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  TensorD b = TensorD::from_values({3, 2}, {7, 8, 9, 10, 11, 12});
  const TensorD c = kws::matmul(a, b);
  EXPECT_DOUBLE_EQ(c(0, 0), 58.0);
  EXPECT_DOUBLE_EQ(c(0, 1), 64.0);
  EXPECT_DOUBLE_EQ(c(1, 0), 139.0);
  EXPECT_DOUBLE_EQ(c(1, 1), 154.0);
  EXPECT_THROW(kws::matmul(a, a), kws::Error);
}

TEST(Matmul, TransposedVariantsAgree) {
  kws::Rng rng(5);
  TensorD a({4, 3}), b({3, 5});
  FillUniform(a, rng);
  FillUniform(b, rng);
  const TensorD c = kws::matmul(a, b);
  // A * B == A * (B^T)^T via matmul_nt with explicit transpose.
  TensorD bt({5, 3});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) bt(j, i) = b(i, j);
  const TensorD c2 = kws::matmul_nt(a, bt);
  for (std::size_t i = 0; i < c.numel(); ++i)
    EXPECT_NEAR(c.values()[i], c2.values()[i], 1e-12);
  // C += A^T * B with A^T explicit.
  TensorD at({3, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) at(j, i) = a(i, j);
  TensorD acc({4, 5});
  kws::matmul_tn_acc(at, b, acc);
  for (std::size_t i = 0; i < c.numel(); ++i)
    EXPECT_NEAR(acc.values()[i], c.values()[i], 1e-12);
}

TEST(Fc, ForwardAppliesBias) {
  auto p = kws::FcParams<double>::zeros(2, 2);
  p.w(0, 0) = 1.0;
  p.w(1, 1) = 2.0;
  p.b[0] = 0.5;
  p.b[1] = -0.5;
  const TensorD x = TensorD::from_values({1, 2}, {3.0, 4.0});
  const TensorD y = kws::fc_forward(x, p);
  EXPECT_DOUBLE_EQ(y(0, 0), 3.5);
  EXPECT_DOUBLE_EQ(y(0, 1), 7.5);
}

TEST(Fc, GradCheck) {
  kws::Rng rng(17);
  auto p = kws::FcParams<double>::init(4, 3, rng);
  TensorD x({2, 4}), proj({2, 3});
  FillUniform(x, rng);
  FillUniform(proj, rng);

  auto loss = [&]() { return Project(proj, kws::fc_forward(x, p)); };

  auto grads = kws::FcParams<double>::zeros(4, 3);
  const TensorD dx = kws::fc_backward(proj, x, p, grads);
  const double err = kws::grad_check(loss, {&x, &p.w, &p.b}, {dx, grads.w, grads.b});
  EXPECT_LT(err, 1e-6);
}

TEST(Relu, ForwardAndBackwardMask) {
  const TensorD x = TensorD::from_values({1, 4}, {-2.0, -0.0, 0.5, 3.0});
  const TensorD y = kws::relu_forward(x);
  EXPECT_DOUBLE_EQ(y(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(y(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(y(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(y(0, 3), 3.0);
  const TensorD dy = TensorD::from_values({1, 4}, {1.0, 1.0, 1.0, 1.0});
  const TensorD dx = kws::relu_backward(dy, x);
  EXPECT_DOUBLE_EQ(dx(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(dx(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(dx(0, 2), 1.0);
  EXPECT_DOUBLE_EQ(dx(0, 3), 1.0);
}

TEST(Lstm, ZeroParamsClosedForm) {
  // With all weights and biases zero the gates are sigmoid(0) = 1/2 and
  // the candidate is tanh(0) = 0, so c' = c/2 and h' = tanh(c/2)/2.
  const std::size_t in = 3, n = 4;
  const auto p = kws::LstmParams<double>::zeros(in, n);
  kws::Rng rng(23);
  TensorD x({2, in}), h0({2, n}), c0({2, n});
  FillUniform(x, rng);
  FillUniform(h0, rng);
  FillUniform(c0, rng, -2.0, 2.0);
  TensorD h1, c1;
  kws::lstm_cell_forward(x, h0, c0, p, h1, c1);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_DOUBLE_EQ(c1(r, k), 0.5 * c0(r, k));
      EXPECT_DOUBLE_EQ(h1(r, k), 0.5 * std::tanh(0.5 * c0(r, k)));
    }
}

TEST(Lstm, GradCheckThroughTwoSteps) {
  kws::Rng rng(101);
  const std::size_t in = 3, n = 4, batch = 2;
  auto p = kws::LstmParams<double>::init(in, n, rng);
  TensorD x0({batch, in}), x1({batch, in}), h0({batch, n}), c0({batch, n});
  FillUniform(x0, rng);
  FillUniform(x1, rng);
  FillUniform(h0, rng);
  FillUniform(c0, rng);
  TensorD proj({batch, n});
  FillUniform(proj, rng);

  auto loss = [&]() {
    TensorD h1, c1, h2, c2;
    kws::lstm_cell_forward(x0, h0, c0, p, h1, c1);
    kws::lstm_cell_forward(x1, h1, c1, p, h2, c2);
    return Project(proj, h2);
  };

  TensorD h1, c1, h2, c2;
  kws::LstmCache<double> cache0, cache1;
  kws::lstm_cell_forward(x0, h0, c0, p, h1, c1, &cache0);
  kws::lstm_cell_forward(x1, h1, c1, p, h2, c2, &cache1);
  auto grads = kws::LstmParams<double>::zeros(in, n);
  TensorD dc2({batch, n});
  TensorD dx1, dh1, dc1, dx0, dh0, dc0;
  kws::lstm_cell_backward(proj, dc2, cache1, p, grads, dx1, dh1, dc1);
  kws::lstm_cell_backward(dh1, dc1, cache0, p, grads, dx0, dh0, dc0);

  std::vector<TensorD*> inputs = {&x0, &x1, &h0, &c0};
  std::vector<TensorD> analytic = {dx0, dx1, dh0, dc0};
  for (auto* t : p.tensors()) inputs.push_back(t);
  for (auto* t : grads.tensors()) analytic.push_back(*t);
  EXPECT_LT(kws::grad_check(loss, inputs, analytic), 1e-5);
}

TEST(Gru, ZeroParamsClosedForm) {
  // Zero parameters give z = r = 1/2 and a zero candidate, so the state
  // halves each step: h' = h/2.
  const std::size_t in = 5, n = 3;
  const auto p = kws::GruParams<double>::zeros(in, n);
  kws::Rng rng(29);
  TensorD x({2, in}), h0({2, n});
  FillUniform(x, rng);
  FillUniform(h0, rng);
  TensorD h1;
  kws::gru_cell_forward(x, h0, p, h1);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t k = 0; k < n; ++k) EXPECT_DOUBLE_EQ(h1(r, k), 0.5 * h0(r, k));
}

TEST(Gru, OutputIsConvexCombinationOfStateAndCandidate) {
  kws::Rng rng(31);
  const std::size_t in = 6, n = 8;
  const auto p = kws::GruParams<double>::init(in, n, rng);
  TensorD x({3, in}), h0({3, n});
  FillUniform(x, rng, -2.0, 2.0);
  FillUniform(h0, rng, -1.0, 1.0);
  TensorD h1;
  kws::GruCache<double> cache;
  kws::gru_cell_forward(x, h0, p, h1, &cache);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < n; ++k) {
      const double lo = std::min(h0(r, k), cache.cand(r, k));
      const double hi = std::max(h0(r, k), cache.cand(r, k));
      EXPECT_GE(h1(r, k), lo - 1e-12);
      EXPECT_LE(h1(r, k), hi + 1e-12);
    }
}

TEST(Gru, GradCheckThroughTwoSteps) {
  kws::Rng rng(103);
  const std::size_t in = 3, n = 4, batch = 2;
  auto p = kws::GruParams<double>::init(in, n, rng);
  TensorD x0({batch, in}), x1({batch, in}), h0({batch, n});
  FillUniform(x0, rng);
  FillUniform(x1, rng);
  FillUniform(h0, rng);
  TensorD proj({batch, n});
  FillUniform(proj, rng);

  auto loss = [&]() {
    TensorD h1, h2;
    kws::gru_cell_forward(x0, h0, p, h1);
    kws::gru_cell_forward(x1, h1, p, h2);
    return Project(proj, h2);
  };

  TensorD h1, h2;
  kws::GruCache<double> cache0, cache1;
  kws::gru_cell_forward(x0, h0, p, h1, &cache0);
  kws::gru_cell_forward(x1, h1, p, h2, &cache1);
  auto grads = kws::GruParams<double>::zeros(in, n);
  TensorD dx1, dh1, dx0, dh0;
  kws::gru_cell_backward(proj, cache1, p, grads, dx1, dh1);
  kws::gru_cell_backward(dh1, cache0, p, grads, dx0, dh0);

  std::vector<TensorD*> inputs = {&x0, &x1, &h0};
  std::vector<TensorD> analytic = {dx0, dx1, dh0};
  for (auto* t : p.tensors()) inputs.push_back(t);
  for (auto* t : grads.tensors()) analytic.push_back(*t);
  EXPECT_LT(kws::grad_check(loss, inputs, analytic), 1e-5);
}

TEST(Conv, DeltaKernelSelectsStridedColumns) {
  // A kernel that is 1 only at (dt = kt-1, df = 2) with frequency stride 2
  // and same-padding (pad_left = 1) reduces to out[t][fo] = in[t][2*fo+1].
  auto p = kws::Conv2dParams<double>::zeros(20, 5, 1, 1, 2);
  p.w(19, 2, 0, 0) = 1.0;
  kws::Rng rng(37);
  TensorD x({25, 40, 1});
  FillUniform(x, rng);
  const TensorD y = kws::conv2d_forward(x, p);
  ASSERT_EQ(y.dim(0), 25u);
  ASSERT_EQ(y.dim(1), 20u);
  ASSERT_EQ(y.dim(2), 1u);
  for (std::size_t t = 0; t < 25; ++t)
    for (std::size_t fo = 0; fo < 20; ++fo)
      ASSERT_DOUBLE_EQ(y(t, fo, 0), x(t, 2 * fo + 1, 0)) << "t=" << t << " fo=" << fo;
}

TEST(Conv, CausalInTime) {
  // Changing the input at time t0 must not affect outputs before t0.
  kws::Rng rng(41);
  auto p = kws::Conv2dParams<double>::init(20, 5, 1, 2, 2, rng);
  TensorD a({30, 40, 1});
  FillUniform(a, rng);
  TensorD b = a;
  const std::size_t t0 = 12;
  for (std::size_t f = 0; f < 40; ++f) b(t0, f, 0) += 1.0;
  const TensorD ya = kws::conv2d_forward(a, p);
  const TensorD yb = kws::conv2d_forward(b, p);
  for (std::size_t t = 0; t < t0; ++t)
    for (std::size_t fo = 0; fo < 20; ++fo)
      for (std::size_t co = 0; co < 2; ++co)
        ASSERT_EQ(ya(t, fo, co), yb(t, fo, co)) << "t=" << t;
  // And it must affect the output at t0 itself (same-frame tap).
  bool changed = false;
  for (std::size_t fo = 0; fo < 20 && !changed; ++fo)
    for (std::size_t co = 0; co < 2 && !changed; ++co)
      changed = ya(t0, fo, co) != yb(t0, fo, co);
  EXPECT_TRUE(changed);
}

TEST(Conv, GradCheck) {
  kws::Rng rng(43);
  auto p = kws::Conv2dParams<double>::init(3, 3, 2, 2, 2, rng);
  TensorD x({6, 6, 2});
  FillUniform(x, rng);
  TensorD proj({6, 3, 2});
  FillUniform(proj, rng);

  auto loss = [&]() { return Project(proj, kws::conv2d_forward(x, p)); };

  auto grads = kws::Conv2dParams<double>::zeros(3, 3, 2, 2, 2);
  const TensorD dx = kws::conv2d_backward(proj, x, p, grads);
  const double err = kws::grad_check(loss, {&x, &p.w, &p.b}, {dx, grads.w, grads.b});
  EXPECT_LT(err, 1e-6);
}

TEST(Softmax, RowsSumToOneWithKnownValues) {
  TensorD x = TensorD::from_values({2, 2}, {0.0, 0.0, std::log(1.0), std::log(3.0)});
  kws::softmax_rows(x);
  EXPECT_DOUBLE_EQ(x(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(x(0, 1), 0.5);
  EXPECT_NEAR(x(1, 0), 0.25, 1e-12);
  EXPECT_NEAR(x(1, 1), 0.75, 1e-12);
}

TEST(Softmax, StableUnderLargeLogits) {
  TensorD x = TensorD::from_values({1, 3}, {1000.0, 1000.0, 999.0});
  kws::softmax_rows(x);
  EXPECT_TRUE(kws::all_finite(x));
  EXPECT_NEAR(x(0, 0), x(0, 1), 1e-12);
  EXPECT_GT(x(0, 0), x(0, 2));
}

TEST(Xent, UniformLogitsGiveLogC) {
  TensorD logits({4, 5});
  const std::vector<int> labels = {0, 1, 2, 3};
  const double loss = kws::softmax_xent<double>(logits, labels, nullptr);
  EXPECT_NEAR(loss, std::log(5.0), 1e-12);
}

TEST(Xent, GradRowsSumToZeroAndMatchNumeric) {
  kws::Rng rng(47);
  TensorD logits({3, 4});
  FillUniform(logits, rng, -2.0, 2.0);
  const std::vector<int> labels = {1, 3, 0};

  TensorD dlogits;
  kws::softmax_xent<double>(logits, labels, &dlogits);
  for (std::size_t r = 0; r < 3; ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < 4; ++c) row += dlogits(r, c);
    EXPECT_NEAR(row, 0.0, 1e-12);
  }

  auto loss = [&]() { return kws::softmax_xent<double>(logits, labels, nullptr); };
  EXPECT_LT(kws::grad_check(loss, {&logits}, {dlogits}), 1e-6);
}

TEST(Xent, RejectsOutOfRangeLabel) {
  TensorD logits({2, 3});
  const std::vector<int> bad = {0, 3};
  EXPECT_THROW(kws::softmax_xent<double>(logits, bad, nullptr), kws::Error);
}

}  // namespace
