#include <cmath>
#include <limits>
#include <numeric>

#include <gtest/gtest.h>

#include "fasp/error.hpp"
#include "fasp/numerics.hpp"
#include "fasp/rng.hpp"

namespace fasp {
namespace {

TensorF32 random_tensor(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  RngCursor rng(seed, 7);
  TensorF32 t({r, c});
  for (auto& v : t.data()) v = static_cast<float>(rng.normal() * scale);
  return t;
}

TEST(Matmul, IdentityAndHandArithmetic) {
  const TensorF32 eye({2, 2}, {1, 0, 0, 1});
  const TensorF32 b({2, 2}, {3, 4, 5, 6});
  EXPECT_EQ(matmul(eye, b), b);
  const TensorF32 row({1, 2}, {1, 2});
  const TensorF32 col({2, 1}, {3, 4});
  EXPECT_EQ(matmul(row, col), TensorF32({1, 1}, {11}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  const auto a = random_tensor(7, 5, 1);
  const auto b = random_tensor(5, 3, 2);
  const auto c = matmul(a, b);
  ASSERT_EQ(c.shape(), (std::vector<std::size_t>{7, 3}));
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += double(a.at(i, k)) * double(b.at(k, j));
      EXPECT_NEAR(c.at(i, j), s, 1e-5);
    }
  }
}

TEST(Matmul, RightIdentityIsExactForIntegers) {
  TensorF32 a({4, 6});
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = static_cast<float>(int(i * 37 % 23) - 11);
  TensorF32 eye({6, 6});
  for (std::size_t i = 0; i < 6; ++i) eye.at(i, i) = 1.0f;
  EXPECT_EQ(matmul(a, eye), a);
}

TEST(Matmul, Errors) {
  EXPECT_THROW(matmul(TensorF32({2, 3}), TensorF32({2, 3})), ShapeError);
  const TensorF32 big({1, 2}, {3e38f, 3e38f});
  const TensorF32 ones({2, 1}, {1, 1});
  EXPECT_THROW(matmul(big, ones), NonFiniteError);
}

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(TensorF32({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_EQ(TensorF32({3}).rows(), 1u);
}

TEST(Softmax, Examples) {
  const auto s = softmax_rows(TensorF32({1, 3}, {0, 0, 0}));
  for (float v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
  const auto big = softmax_rows(TensorF32({1, 2}, {1000, 0}));
  EXPECT_NEAR(big.at(0, 0), 1.0, 1e-7);
  EXPECT_NEAR(big.at(0, 1), 0.0, 1e-7);

  const auto r = softmax_rows(TensorF32({1, 3}, {1, 2, 3}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.at(0, k), std::exp(k + 1.0) / z, 1e-6);
}

TEST(Softmax, RowsSumToOneForLargeMagnitudes) {
  const auto x = random_tensor(50, 17, 3, 3000.0);
  const auto s = softmax_rows(x);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double sum = 0.0;
    for (float v : s.row(i)) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-5);
  }
}

TEST(LayerNorm, Examples) {
  const TensorF32 ones({3}, {1, 1, 1}), zeros({3});
  const auto c = layer_norm(TensorF32({1, 3}, {5, 5, 5}), ones, zeros, 1e-5f);
  for (float v : c.data()) EXPECT_EQ(v, 0.0f);
  const TensorF32 bias({3}, {0.5f, -1.0f, 2.0f});
  const auto b = layer_norm(TensorF32({2, 3}, {1, 7, -3, 2, 2, 9}), zeros, bias, 1e-5f);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(b.at(r, k), bias.data()[k]);
  }
  EXPECT_THROW(layer_norm(TensorF32({1, 3}), TensorF32({2}), zeros, 1e-5f), ShapeError);
}

TEST(LayerNorm, MatchesReferenceAndNormalizes) {
  const auto x = random_tensor(20, 33, 4, 5.0);
  TensorF32 gain({33}), bias({33});
  for (auto& g : gain.data()) g = 1.0f;
  const auto y = layer_norm(x, gain, bias, 1e-5f);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mean = 0.0, var = 0.0;
    for (float v : x.row(r)) mean += v;
    mean /= 33.0;
    for (float v : x.row(r)) var += (v - mean) * (v - mean);
    var /= 33.0;
    double ymean = 0.0, yvar = 0.0;
    for (std::size_t k = 0; k < 33; ++k) {
      EXPECT_NEAR(y.at(r, k), (x.at(r, k) - mean) / std::sqrt(var + 1e-5), 1e-5);
      ymean += y.at(r, k);
    }
    ymean /= 33.0;
    for (float v : y.row(r)) yvar += (v - ymean) * (v - ymean);
    EXPECT_LT(std::abs(ymean), 1e-5);
    EXPECT_NEAR(yvar / 33.0, 1.0, 1e-3);
  }
}

TEST(Gelu, KnownValues) {
  const auto g = gelu(TensorF32({3}, {0.0f, 1.0f, -1.0f}));
  EXPECT_EQ(g.data()[0], 0.0f);
  EXPECT_NEAR(g.data()[1], 0.841192, 1e-5);
  EXPECT_NEAR(g.data()[2], -0.158808, 1e-5);
}

TEST(Argsort, StableBothOrders) {
  const std::vector<double> v{3.0, 1.0, 3.0, 2.0, 1.0};
  EXPECT_EQ(argsort(v, SortOrder::kAscending), (std::vector<std::size_t>{1, 4, 3, 0, 2}));
  EXPECT_EQ(argsort(v, SortOrder::kDescending), (std::vector<std::size_t>{0, 2, 3, 1, 4}));
}

TEST(Pearson, Examples) {
  const std::vector<double> x{1, 2, 3, 4}, y{2, 4, 5, 9};
  EXPECT_DOUBLE_EQ(pearson(x, x), 1.0);
  const std::vector<double> neg{-1, -2, -3, -4};
  EXPECT_DOUBLE_EQ(pearson(x, neg), -1.0);

  const double mx = 2.5, my = 5.0;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 4; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  EXPECT_NEAR(pearson(x, y), sxy / std::sqrt(sxx * syy), 1e-9);
}

TEST(Pearson, AffineInvariance) {
  RngCursor rng(5, 0);
  std::vector<double> x(40), y(40), ax(40);
  for (int i = 0; i < 40; ++i) {
    x[i] = rng.normal();
    y[i] = 0.5 * x[i] + rng.normal();
    ax[i] = 3.7 * x[i] - 11.0;
  }
  EXPECT_NEAR(pearson(x, y), pearson(ax, y), 1e-9);
}

TEST(Pearson, Errors) {
  const std::vector<double> c{2, 2, 2}, x{1, 2, 3};
  EXPECT_THROW(pearson(c, x), UndefinedCorrelationError);
  EXPECT_THROW(pearson(x, c), UndefinedCorrelationError);
  EXPECT_THROW(pearson(x, std::vector<double>{1, 2}), InvalidArgumentError);
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{1}), InvalidArgumentError);
}

}  // namespace
}  // namespace fasp
