#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "esad/ndcore.hpp"

using namespace esad;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Matrix m(r, c);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

DenseLayer layer(std::size_t out, std::size_t in, std::vector<double> w, Vector b, Activation act) {
  return DenseLayer{Matrix(out, in, std::move(w)), std::move(b), act};
}

MlpStack random_stack(std::uint64_t seed, std::vector<std::size_t> widths) {
  std::mt19937_64 rng(seed);
  auto s = MlpStack::glorot(widths, Activation::ReLU, Activation::Identity, rng);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& l : s.layers()) {
    for (auto& b : l.bias) b = g(rng);
  }
  s.mark_modified();
  return s;
}

double half_sq(const Vector& v) {
  double s = 0.0;
  for (double x : v) s += 0.5 * x * x;
  return s;
}

}  // namespace

TEST(Matmul, IdentityAndZero) {
  std::mt19937_64 rng(1);
  const Matrix a = random_matrix(4, 5, rng);
  EXPECT_EQ(matmul(a, Matrix::identity(5)), a);
  EXPECT_EQ(matmul(Matrix::identity(4), a), a);
  const Matrix z = matmul(a, Matrix(5, 3));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    std::uniform_int_distribution<std::size_t> dim(1, 9);
    const std::size_t r = dim(rng), k = dim(rng), c = dim(rng);
    const Matrix a = random_matrix(r, k, rng);
    const Matrix b = random_matrix(k, c, rng);
    const Matrix got = matmul(a, b);
    const Matrix want = naive_matmul(a, b);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-12);
  }
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST(Forward, ZeroWeightsGiveBias) {
  MlpStack s({layer(2, 3, {0, 0, 0, 0, 0, 0}, {1.5, -2.0}, Activation::Identity)});
  const auto out = forward(s, Vector{4.0, 5.0, 6.0}).output;
  EXPECT_EQ(out, (Vector{1.5, -2.0}));
}

TEST(Forward, IdentityLayerPassesInput) {
  MlpStack s({layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::Identity)});
  EXPECT_EQ(forward(s, Vector{-3.0, 7.0}).output, (Vector{-3.0, 7.0}));
}

TEST(Forward, HandComputedTwoLayer) {
  // h = relu([[1,-1],[2,0]] x + [0,-1]); y = [1,1] h + 0.5
  MlpStack s({layer(2, 2, {1, -1, 2, 0}, {0, -1}, Activation::ReLU),
              layer(1, 2, {1, 1}, {0.5}, Activation::Identity)});
  // x = [1,2]: pre = [-1, 1] -> h = [0, 1] -> y = 1.5
  EXPECT_DOUBLE_EQ(forward(s, Vector{1.0, 2.0}).output[0], 1.5);
  // x = [3,1]: pre = [2, 5] -> y = 7.5
  EXPECT_DOUBLE_EQ(forward(s, Vector{3.0, 1.0}).output[0], 7.5);
}

TEST(Forward, WrongInputLengthThrows) {
  MlpStack s({layer(1, 2, {1, 1}, {0}, Activation::Identity)});
  EXPECT_THROW(forward(s, Vector{1.0}), ShapeError);
}

TEST(Stack, MismatchedLayersRejected) {
  EXPECT_THROW(MlpStack({layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::ReLU),
                         layer(1, 3, {1, 1, 1}, {0}, Activation::Identity)}),
               ShapeError);
}

TEST(Stack, GlorotBoundsAndZeroBias) {
  std::mt19937_64 rng(3);
  const std::vector<std::size_t> widths{6, 10, 4};
  const auto s = MlpStack::glorot(widths, Activation::ReLU, Activation::Identity, rng);
  ASSERT_EQ(s.layers().size(), 2u);
  EXPECT_EQ(s.parameter_count(), 6u * 10 + 10 + 10 * 4 + 4);
  for (const auto& l : s.layers()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in() + l.out()));
    for (double w : l.weight.data()) EXPECT_LE(std::abs(w), bound);
    for (double b : l.bias) EXPECT_EQ(b, 0.0);
  }
  EXPECT_EQ(s.layers()[0].activation, Activation::ReLU);
  EXPECT_EQ(s.layers()[1].activation, Activation::Identity);
}

TEST(Backward, ZeroUpstreamGivesZeroGrads) {
  const auto s = random_stack(4, {3, 5, 2});
  const auto f = forward(s, Vector{0.3, -0.2, 1.0});
  const auto b = backward(s, f.cache, Vector{0.0, 0.0});
  for (const auto blk : b.params.blocks()) {
    for (double v : blk) EXPECT_EQ(v, 0.0);
  }
  for (double v : b.input) EXPECT_EQ(v, 0.0);
}

TEST(Backward, IdentityLayerBiasGradEqualsUpstream) {
  MlpStack s({layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::Identity)});
  const auto f = forward(s, Vector{2.0, 3.0});
  const auto b = backward(s, f.cache, Vector{0.25, -1.0});
  EXPECT_EQ(b.params.layers[0].bias, (Vector{0.25, -1.0}));
  EXPECT_EQ(b.input, (Vector{0.25, -1.0}));
  // dW = g x^T
  EXPECT_EQ(b.params.layers[0].weight(0, 0), 0.5);
  EXPECT_EQ(b.params.layers[0].weight(1, 1), -3.0);
}

TEST(Backward, ReluDerivativeAtZeroIsZero) {
  MlpStack s({layer(1, 1, {1}, {0}, Activation::ReLU)});
  const auto f = forward(s, Vector{0.0});
  const auto b = backward(s, f.cache, Vector{1.0});
  EXPECT_EQ(b.params.layers[0].bias[0], 0.0);
  EXPECT_EQ(b.input[0], 0.0);
}

TEST(Backward, FiniteDifferenceOnRandomStacks) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = random_stack(seed, {4, 6, 5, 3});
    const Vector x{0.7, -1.1, 0.2, 0.9};
    const auto rep = grad_check(s, [&](const MlpStack& st, StackGrads* g) {
      const auto f = forward(st, x);
      if (g != nullptr) backward_accumulate(st, f.cache, f.output, *g, nullptr);
      return half_sq(f.output);
    });
    EXPECT_TRUE(rep.passed()) << "seed " << seed << " max " << rep.max_rel_error;
    EXPECT_EQ(rep.checked, s.parameter_count());
  }
}

TEST(Backward, InputGradientMatchesFiniteDifference) {
  const auto s = random_stack(11, {3, 4, 2});
  Vector x{0.5, -0.4, 1.3};
  const auto f = forward(s, x);
  const auto b = backward(s, f.cache, f.output);
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += 1e-5;
    xm[i] -= 1e-5;
    const double num = (half_sq(forward(s, xp).output) - half_sq(forward(s, xm).output)) / 2e-5;
    EXPECT_LT(relative_error(b.input[i], num, 1e-6), 1e-4);
  }
}

TEST(Backward, StaleCacheRejected) {
  auto s = random_stack(5, {2, 3, 1});
  const auto f = forward(s, Vector{1.0, 2.0});
  StackGrads g = s.zero_grads();
  g.layers[0].bias[0] = 1.0;
  sgd_step(s, g, 0.1);
  EXPECT_THROW(backward(s, f.cache, Vector{1.0}), std::logic_error);
}

TEST(Backward, MismatchedCacheRejected) {
  const auto a = random_stack(6, {2, 3, 1});
  const auto b = random_stack(6, {4, 3, 1});
  const auto f = forward(b, Vector{1, 2, 3, 4});
  EXPECT_THROW(backward(a, f.cache, Vector{1.0}), ShapeError);
}

TEST(Sgd, ZeroLearningRateIsNoop) {
  auto s = random_stack(7, {3, 4, 2});
  const auto before = s;
  StackGrads g = s.zero_grads();
  for (auto blk : g.blocks()) {
    for (auto& v : blk) v = 1.0;
  }
  sgd_step(s, g, 0.0);
  EXPECT_EQ(s, before);
}

TEST(Sgd, SingleStepArithmetic) {
  MlpStack s({layer(1, 1, {1.0}, {0.0}, Activation::Identity)});
  StackGrads g = s.zero_grads();
  g.layers[0].weight(0, 0) = 2.0;
  sgd_step(s, g, 0.1);
  EXPECT_NEAR(s.layers()[0].weight(0, 0), 0.8, 1e-15);
}

TEST(Sgd, StepDecaySchedule) {
  SgdConfig c;
  EXPECT_DOUBLE_EQ(c.lr_at(0), 0.1);
  EXPECT_DOUBLE_EQ(c.lr_at(49), 0.1);
  EXPECT_DOUBLE_EQ(c.lr_at(50), 0.05);
  EXPECT_DOUBLE_EQ(c.lr_at(100), 0.025);
  EXPECT_DOUBLE_EQ(c.lr_at(150), 0.0125);
  EXPECT_DOUBLE_EQ(c.lr_at(199), 0.0125);
}

TEST(Sgd, Defaults) {
  SgdConfig c;
  EXPECT_EQ(c.initial_lr, 0.1);
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_EQ(c.epochs, 200u);
  EXPECT_EQ(c.decay_every, 50u);
  EXPECT_EQ(c.decay_factor, 0.5);
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Clip, ScalesToMaxNorm) {
  MlpStack s({layer(1, 2, {0, 0}, {0}, Activation::Identity)});
  StackGrads a = s.zero_grads();
  StackGrads b = s.zero_grads();
  a.layers[0].weight(0, 0) = 3.0;
  b.layers[0].bias[0] = 4.0;
  std::array<StackGrads*, 2> parts{&a, &b};
  EXPECT_DOUBLE_EQ(clip_global_norm(parts, 1.0), 5.0);
  EXPECT_NEAR(a.layers[0].weight(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(b.layers[0].bias[0], 0.8, 1e-15);
  // below the cap or disabled: untouched
  EXPECT_NEAR(clip_global_norm(parts, 2.0), 1.0, 1e-15);
  EXPECT_NEAR(a.layers[0].weight(0, 0), 0.6, 1e-15);
  clip_global_norm(parts, 0.0);
  EXPECT_NEAR(b.layers[0].bias[0], 0.8, 1e-15);
}

TEST(GradCheck, QuadraticIsExact) {
  Vector p{1.0, -2.0, 0.5};
  Vector g(3);
  for (std::size_t i = 0; i < 3; ++i) g[i] = 2.0 * p[i];
  std::vector<std::span<double>> params{p};
  std::vector<std::span<const double>> grads{g};
  const auto rep = grad_check(params, grads, [&] { return p[0] * p[0] + p[1] * p[1] + p[2] * p[2]; });
  EXPECT_TRUE(rep.passed());
  EXPECT_LT(rep.max_rel_error, 1e-8);
  EXPECT_EQ(p, (Vector{1.0, -2.0, 0.5}));
}

TEST(GradCheck, CorruptedGradientFlagged) {
  auto s = random_stack(8, {3, 4, 2});
  const Vector x{0.1, 0.2, -0.3};
  const auto rep = grad_check(s, [&](const MlpStack& st, StackGrads* g) {
    const auto f = forward(st, x);
    if (g != nullptr) {
      backward_accumulate(st, f.cache, f.output, *g, nullptr);
      g->layers[1].bias[0] += 0.1;
    }
    return half_sq(f.output);
  });
  EXPECT_FALSE(rep.passed());
  EXPECT_GT(rep.max_rel_error, 1e-4);
}

TEST(GradCheck, NonFiniteLossThrows) {
  Vector p{1.0};
  Vector g{0.0};
  std::vector<std::span<double>> params{p};
  std::vector<std::span<const double>> grads{g};
  EXPECT_THROW(grad_check(params, grads, [] { return std::nan(""); }), std::domain_error);
}

TEST(Determinism, SameSeedSameStack) {
  EXPECT_EQ(random_stack(9, {5, 7, 3}), random_stack(9, {5, 7, 3}));
  EXPECT_FALSE(random_stack(9, {5, 7, 3}) == random_stack(10, {5, 7, 3}));
}
