#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "swinseg3d/adam.hpp"
#include "swinseg3d/errors.hpp"
#include "swinseg3d/gemm.hpp"
#include "swinseg3d/ops.hpp"
#include "test_support.hpp"

using namespace swinseg3d;
using testsupport::random_tensor;

namespace {

Tensor<double> T1(Shape s, std::vector<double> v, bool grad = false) {
  return Tensor<double>::from_data(std::move(s), std::move(v), grad);
}

void expect_near_all(std::span<const double> got, const std::vector<double>& want, double tol = 1e-12) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "index " << i;
}

}  // namespace

TEST(Tensor, FromDataRejectsBadShapes) {
  EXPECT_THROW(Tensor<double>::from_data({2, 0}, {}), ShapeError);
  EXPECT_THROW(Tensor<double>::from_data({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_EQ(Tensor<float>::zeros({3, 4}).numel(), 12u);
  EXPECT_EQ(shape_str({2, 3}), "[2x3]");
}

TEST(Tensor, BroadcastAddAndMul) {
  const auto a = T1({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto b = T1({3}, {10, 20, 30});
  expect_near_all(ops::add(a, b).data(), {11, 22, 33, 14, 25, 36});
  expect_near_all(ops::mul(a, T1({2, 1}, {2, -1})).data(), {2, 4, 6, -4, -5, -6});
  expect_near_all(ops::sub(a, b).data(), {-9, -18, -27, -6, -15, -24});
  EXPECT_THROW(ops::add(a, T1({2}, {1, 2})), ShapeError);
}

TEST(Tensor, ReductionsAndScalars) {
  const auto a = T1({2, 2}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(ops::sum(a).item(), 10.0);
  EXPECT_DOUBLE_EQ(ops::mean(a).item(), 2.5);
  expect_near_all(ops::scale(a, 0.5).data(), {0.5, 1, 1.5, 2});
  expect_near_all(ops::add_scalar(a, 1.0).data(), {2, 3, 4, 5});
}

TEST(Tensor, Nonlinearities) {
  const auto x = T1({3}, {-1, 0, 1});
  expect_near_all(ops::relu(x).data(), {0, 0, 1});
  expect_near_all(ops::sigmoid(x).data(), {1 / (1 + std::exp(1.0)), 0.5, 1 / (1 + std::exp(-1.0))});
  // Tanh-form GELU at +-1, evaluated by hand.
  expect_near_all(ops::gelu(x).data(), {-0.15880800939172324, 0.0, 0.8411919906082768}, 1e-12);
  const auto big = T1({2}, {-800, 800});
  expect_near_all(ops::sigmoid(big).data(), {0.0, 1.0});
}

TEST(Tensor, SoftmaxRowsAndStability) {
  const auto x = T1({2, 2}, {0, std::log(2.0), 1000, 1000});
  expect_near_all(ops::softmax(x, 1).data(), {1.0 / 3, 2.0 / 3, 0.5, 0.5});
  const auto col = ops::softmax(T1({2, 2}, {0, 0, std::log(3.0), 0}), 0);
  expect_near_all(col.data(), {0.25, 0.5, 0.75, 0.5});
  EXPECT_THROW(ops::softmax(x, 2), ShapeError);
}

TEST(Tensor, LayerNormLastAxis) {
  const auto x = T1({1, 3}, {1, 2, 3});
  const auto y = ops::layer_norm(x, T1({3}, {1, 1, 1}), T1({3}, {0, 0, 0}));
  const double s = 1.0 / std::sqrt(2.0 / 3.0 + 1e-5);
  expect_near_all(y.data(), {-s, 0.0, s}, 1e-12);
  const auto z = ops::layer_norm(x, T1({3}, {2, 2, 2}), T1({3}, {1, 1, 1}));
  expect_near_all(z.data(), {1 - 2 * s, 1.0, 1 + 2 * s}, 1e-12);
}

TEST(Tensor, MatmulBatchedBroadcast) {
  const auto a = T1({2, 1, 2}, {1, 2, 3, 4});
  const auto b = T1({2, 2}, {5, 6, 7, 8});
  expect_near_all(ops::matmul(a, b).data(), {19, 22, 43, 50});
  EXPECT_THROW(ops::matmul(T1({2, 3}, std::vector<double>(6)), b), ShapeError);
}

TEST(Tensor, LinearMatchesManual) {
  const auto x = T1({2, 2}, {1, 2, 3, 4});
  const auto w = T1({3, 2}, {1, 0, 0, 1, 1, 1});
  const auto b = T1({3}, {0.5, -0.5, 0});
  expect_near_all(ops::linear(x, w, b).data(), {1.5, 1.5, 3, 3.5, 3.5, 7});
  expect_near_all(ops::linear(x, w, Tensor<double>()).data(), {1, 2, 3, 3, 4, 7});
}

TEST(Tensor, LayoutOps) {
  const auto x = T1({2, 3}, {0, 1, 2, 3, 4, 5});
  expect_near_all(ops::permute(x, {1, 0}).data(), {0, 3, 1, 4, 2, 5});
  expect_near_all(ops::transpose_last2(x).data(), {0, 3, 1, 4, 2, 5});
  EXPECT_EQ(ops::reshape(x, {3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(ops::reshape(x, {4}), ShapeError);
  expect_near_all(ops::concat<double>({x, x}, 1).data(), {0, 1, 2, 0, 1, 2, 3, 4, 5, 3, 4, 5});
  expect_near_all(ops::slice(x, 1, 1, 2).data(), {1, 2, 4, 5});
  expect_near_all(ops::pad_end(x, {0, 1}).data(), {0, 1, 2, 0, 3, 4, 5, 0});
  expect_near_all(ops::roll(x, {0, 1}).data(), {2, 0, 1, 5, 3, 4});
  expect_near_all(ops::roll(x, {1, -1}).data(), {4, 5, 3, 1, 2, 0});
  expect_near_all(ops::index_rows(x, {1, 0, 1}).data(), {3, 4, 5, 0, 1, 2, 3, 4, 5});
}

TEST(Tensor, Conv3dMatchesDirectLoops) {
  struct Case {
    Shape x, k;
    ops::Index3 stride, pad;
  };
  const std::vector<Case> cases = {{{2, 5, 6, 4}, {3, 2, 3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
                                   {{1, 8, 8, 8}, {4, 1, 2, 2, 2}, {2, 2, 2}, {0, 0, 0}},
                                   {{3, 8, 4, 4}, {2, 3, 4, 4, 4}, {4, 4, 4}, {0, 0, 0}},
                                   {{2, 3, 5, 7}, {2, 2, 1, 3, 2}, {1, 2, 1}, {0, 1, 0}}};
  std::uint64_t seed = 1;
  for (const auto& c : cases) {
    const auto x = random_tensor(c.x, seed++, -1, 1, false);
    const auto k = random_tensor(c.k, seed++, -1, 1, false);
    const auto b = random_tensor({c.k[0]}, seed++, -1, 1, false);
    Shape want_shape;
    const auto want = testsupport::naive_conv3d(x, k, b, c.stride, c.pad, want_shape);
    const auto got = ops::conv3d(x, k, b, c.stride, c.pad);
    ASSERT_EQ(got.shape(), want_shape);
    expect_near_all(got.data(), want, 1e-12);
  }
  EXPECT_THROW(ops::conv3d(random_tensor({1, 2, 2, 2}, 1), random_tensor({1, 1, 3, 3, 3}, 2), Tensor<double>(),
                           {1, 1, 1}, {0, 0, 0}),
               ShapeError);
}

TEST(Tensor, TransposedConvIsAdjointOfConv) {
  // <conv(x), y> == <x, conv^T(y)> for stride == kernel and for overlapping stride.
  for (auto [k, s] : {std::pair<std::size_t, std::size_t>{2, 2}, {4, 4}, {3, 1}}) {
    const std::size_t n_out = 3;
    const std::size_t n_in = (n_out - 1) * s + k;
    const auto x = random_tensor({2, n_in, n_in, n_in}, 11, -1, 1, false);
    const auto y = random_tensor({3, n_out, n_out, n_out}, 12, -1, 1, false);
    const auto w = random_tensor({3, 2, k, k, k}, 13, -1, 1, false);
    const auto cx = ops::conv3d(x, w, Tensor<double>(), {s, s, s}, {0, 0, 0});
    const auto ty = ops::transposed_conv3d(y, w, Tensor<double>(), {s, s, s});
    ASSERT_EQ(cx.shape(), y.shape());
    ASSERT_EQ(ty.shape(), x.shape());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) lhs += cx.at(i) * y.at(i);
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.at(i) * ty.at(i);
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(Tensor, TrilinearUpsampleHalfPixel) {
  const auto x = T1({1, 2, 1, 1}, {0, 1});
  const auto up = ops::trilinear_upsample(x, 2);
  ASSERT_EQ(up.shape(), (Shape{1, 4, 2, 2}));
  const std::vector<double> along_depth = {0, 0.25, 0.75, 1};
  for (std::size_t z = 0; z < 4; ++z)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(up.at(z * 4 + j), along_depth[z], 1e-15);
  const auto c = Tensor<double>::full({2, 2, 3, 2}, 1.5);
  const auto cu = ops::trilinear_upsample(c, 2);
  for (double v : cu.data()) EXPECT_DOUBLE_EQ(v, 1.5);
  EXPECT_EQ(ops::trilinear_upsample(c, 2).shape(), (Shape{2, 4, 6, 4}));
}

TEST(Tensor, MaxPoolPicksMaxAndRoutesGradient) {
  std::vector<double> v(8);
  std::iota(v.begin(), v.end(), 0.0);
  v[5] = 42;
  const auto x = T1({1, 2, 2, 2}, v, true);
  const auto y = ops::max_pool2(x);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.item(), 42);
  ops::sum(y).backward();
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], i == 5 ? 1.0 : 0.0);
}

TEST(Autodiff, SquareAndAccumulate) {
  auto x = T1({3}, {1, -2, 3}, true);
  ops::sum(ops::mul(x, x)).backward();
  expect_near_all(x.grad(), {2, -4, 6});
  ops::sum(ops::mul(x, x)).backward();
  expect_near_all(x.grad(), {4, -8, 12});
  x.zero_grad();
  expect_near_all(x.grad(), {0, 0, 0});
}

TEST(Autodiff, SharedSubexpressionSumsPaths) {
  auto x = T1({1}, {3}, true);
  const auto y = ops::mul(x, x);
  ops::sum(ops::add(y, ops::scale(y, 2.0))).backward();  // 3x^2
  EXPECT_DOUBLE_EQ(x.grad()[0], 18.0);
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  auto x = T1({2}, {1, 2}, true);
  {
    NoGradGuard g;
    EXPECT_FALSE(grad_enabled());
    const auto y = ops::mul(x, x);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(ops::mul(x, x).requires_grad());
}

TEST(Autodiff, NonScalarBackwardIsContractError) {
  auto x = T1({2}, {1, 2}, true);
  EXPECT_THROW(ops::mul(x, x).backward(), ContractError);
  EXPECT_THROW(ops::mul(x, x).item(), ContractError);
}

TEST(Autodiff, DetachCutsHistory) {
  auto x = T1({2}, {1, 2}, true);
  const auto d = ops::mul(x, x).detach();
  EXPECT_FALSE(d.requires_grad());
  expect_near_all(d.data(), {1, 4});
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // Bias-corrected first step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps).
  auto p = T1({3}, {1, 1, 1}, true);
  std::vector<Tensor<double>> params{p};
  auto g = p.mutable_grad();
  g[0] = 0.5;
  g[1] = -2.0;
  g[2] = 0.0;
  AdamState<double> st;
  st.lr = 0.1;
  adam_step(params, st);
  EXPECT_EQ(st.step, 1u);
  EXPECT_NEAR(p.at(0), 1 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p.at(1), 1 + 0.1 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_DOUBLE_EQ(p.at(2), 1.0);
}

TEST(Adam, TwoStepsMatchHandRecurrence) {
  auto p = T1({1}, {0.0}, true);
  std::vector<Tensor<double>> params{p};
  AdamState<double> st;
  st.lr = 0.01;
  double m = 0, v = 0, w = 0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 1.0 : -3.0;
    p.mutable_grad()[0] = g;
    adam_step(params, st);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.at(0), w, 1e-14);
  }
}

TEST(Adam, ZeroLearningRateKeepsWeights) {
  auto p = random_tensor({4, 4}, 3);
  std::vector<Tensor<double>> params{p};
  const auto before = p.values();
  AdamState<double> st;
  st.lr = 0.0;
  for (int i = 0; i < 5; ++i) {
    ops::sum(ops::mul(p, p)).backward();
    adam_step(params, st);
  }
  EXPECT_EQ(p.values(), before);
}

TEST(Adam, ShapeChangeIsContractError) {
  auto p = random_tensor({2}, 1);
  std::vector<Tensor<double>> params{p};
  AdamState<double> st;
  adam_step(params, st);
  std::vector<Tensor<double>> other{random_tensor({3}, 2)};
  EXPECT_THROW(adam_step(other, st), ContractError);
}

TEST(Gemm, TransposeFlagsMatchNaive) {
  const std::size_t m = 3, n = 4, k = 5;
  std::vector<double> a(m * k), b(k * n), c(m * n, 1.0);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = double(i % 7) - 3;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = double(i % 5) - 2;
  // a stored as [k, m] (transposed), b as [n, k] (transposed).
  std::vector<double> at(k * m), bt(n * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
  gemm<double>(true, true, m, n, k, 2.0, at.data(), bt.data(), 1.0, c.data());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0;
      for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      EXPECT_DOUBLE_EQ(c[i * n + j], 1.0 + 2.0 * acc);
    }
}
