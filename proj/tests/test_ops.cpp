#include <gtest/gtest.h>

#include <numeric>

#include "cxr/ops.hpp"
#include "oracles.hpp"

using namespace cxr;

namespace {

Tensor<double> grid3x3() {
  return Tensor<double>(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
}

}  // namespace

TEST(Conv2d, TwoByTwoOnesKernel) {
  const Tensor<double> k(Shape{1, 1, 2, 2}, 1.0);
  const auto out = conv2d(grid3x3(), k, Tensor<double>(Shape{1}), {1, Padding::Valid});
  EXPECT_EQ(out.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(out.values(), (std::vector<double>{12, 16, 24, 28}));
}

TEST(Conv2d, IdentityKernelReturnsInput) {
  const Tensor<double> k(Shape{1, 1, 1, 1}, 1.0);
  const auto out = conv2d(grid3x3(), k, Tensor<double>(Shape{1}), {1, Padding::Valid});
  EXPECT_EQ(out.reshaped(Shape{9}).values(), grid3x3().values());
}

TEST(Conv2d, ZeroInputYieldsBias) {
  const Tensor<float> x(Shape{2, 3, 5, 5});
  const auto k = oracle::random_tensor<float>(Shape{4, 3, 3, 3}, 1);
  const Tensor<float> b(Shape{4}, {0.5f, -1.0f, 2.0f, 0.0f});
  const auto out = conv2d(x, k, b, {1, Padding::Same});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t f = 0; f < 4; ++f)
      for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(out[(n * 4 + f) * 25 + i], b[f]);
}

TEST(Conv2d, MatchesLoopOracleAcrossGeometries) {
  struct Case {
    std::size_t h, w, k, stride;
    Padding padding;
  };
  const Case cases[] = {{7, 7, 3, 1, Padding::Valid}, {7, 6, 3, 2, Padding::Valid}, {8, 8, 3, 1, Padding::Same},
                        {7, 5, 3, 2, Padding::Same},  {6, 6, 2, 1, Padding::Same},  {5, 5, 5, 1, Padding::Valid}};
  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    const auto x = oracle::random_tensor<double>(Shape{2, 3, c.h, c.w}, seed++);
    const auto k = oracle::random_tensor<double>(Shape{4, 3, c.k, c.k}, seed++);
    const auto b = oracle::random_tensor<double>(Shape{4}, seed++);
    const auto out = conv2d(x, k, b, {c.stride, c.padding});
    // Zero padding split floor/ceil with the extra row/column on the bottom/right.
    std::size_t oh, ow, pt = 0, pl = 0;
    if (c.padding == Padding::Valid) {
      oh = (c.h - c.k) / c.stride + 1;
      ow = (c.w - c.k) / c.stride + 1;
    } else {
      oh = (c.h + c.stride - 1) / c.stride;
      ow = (c.w + c.stride - 1) / c.stride;
      pt = ((oh - 1) * c.stride + c.k - std::min(c.h, (oh - 1) * c.stride + c.k)) / 2;
      pl = ((ow - 1) * c.stride + c.k - std::min(c.w, (ow - 1) * c.stride + c.k)) / 2;
    }
    const auto expected = oracle::conv2d_loops(x, k, b, c.stride, oh, ow, pt, pl);
    ASSERT_EQ(out.shape(), expected.shape());
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], expected[i], 1e-12);
  }
}

TEST(Conv2d, OutputExtentFormula) {
  // H' = floor((H + 2*pad - k) / stride) + 1 for symmetric padding.
  EXPECT_EQ(conv_geometry(80, 80, 3, {1, Padding::Same}).out_h, (80 + 2 - 3) / 1 + 1);
  EXPECT_EQ(conv_geometry(9, 9, 3, {2, Padding::Valid}).out_h, (9 - 3) / 2 + 1);
  const auto g = conv_geometry(6, 6, 2, {1, Padding::Same});
  EXPECT_EQ(g.pad_top, 0u);  // total padding 1 goes to the bottom
  EXPECT_EQ(g.out_h, 6u);
}

TEST(Conv2d, LinearityWithoutBias) {
  const auto x = oracle::random_tensor<float>(Shape{1, 3, 9, 9}, 3);
  const auto y = oracle::random_tensor<float>(Shape{1, 3, 9, 9}, 4);
  const auto k = oracle::random_tensor<float>(Shape{5, 3, 3, 3}, 5);
  const Tensor<float> zero(Shape{5});
  const float a = 0.7f, b = -1.3f;
  Tensor<float> mixed(x.shape());
  for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] = a * x[i] + b * y[i];
  const auto lhs = conv2d(mixed, k, zero, {1, Padding::Same});
  const auto cx = conv2d(x, k, zero, {1, Padding::Same});
  const auto cy = conv2d(y, k, zero, {1, Padding::Same});
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], a * cx[i] + b * cy[i], 1e-5);
}

TEST(Conv2d, ShapeMismatchNamesBothShapes) {
  const Tensor<float> x(Shape{1, 3, 8, 8});
  const Tensor<float> k(Shape{4, 2, 3, 3});
  try {
    conv2d(x, k, Tensor<float>(Shape{4}));
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1,3,8,8]"), std::string::npos);
    EXPECT_NE(msg.find("[4,2,3,3]"), std::string::npos);
  }
  EXPECT_THROW(conv2d(Tensor<float>(Shape{1, 2, 2, 2}), Tensor<float>(Shape{1, 2, 3, 3}), Tensor<float>(Shape{1}),
                      {1, Padding::Valid}),
               std::invalid_argument);
}

TEST(MaxPool, SmallWindow) {
  const Tensor<float> x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(maxpool2d(x, 2, 2).values(), (std::vector<float>{4}));
}

TEST(MaxPool, ConstantInput) {
  const Tensor<float> x(Shape{2, 3, 6, 6}, 0.25f);
  const auto out = maxpool2d(x, 2, 2);
  EXPECT_EQ(out.shape(), (Shape{2, 3, 3, 3}));
  for (auto v : out.data()) EXPECT_EQ(v, 0.25f);
}

TEST(MaxPool, MatchesExhaustiveWindowScan) {
  const auto x = oracle::random_tensor<double>(Shape{1, 1, 6, 6}, 21);
  const auto out = maxpool2d(x, 2, 2);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t xx = 0; xx < 3; ++xx) {
      double best = -1e300;
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) best = std::max(best, x.at(0, 0, 2 * y + i, 2 * xx + j));
      EXPECT_EQ(out.at(0, 0, y, xx), best);
    }
}

TEST(MaxPool, WindowLargerThanInputRejected) {
  EXPECT_THROW(maxpool2d(Tensor<float>(Shape{1, 1, 3, 3}), 4, 4), std::invalid_argument);
}

TEST(GlobalAvgPool, Examples) {
  EXPECT_EQ(global_avg_pool2d(Tensor<double>(Shape{1, 1, 2, 2}, {1, 2, 3, 4})).values(), (std::vector<double>{2.5}));
  const auto c = global_avg_pool2d(Tensor<double>(Shape{2, 2, 3, 3}, 0.3));
  for (auto v : c.data()) EXPECT_DOUBLE_EQ(v, 0.3);
}

TEST(GlobalAvgPool, MatchesFlatSum) {
  const auto x = oracle::random_tensor<double>(Shape{1, 3, 4, 4}, 8);
  const auto out = global_avg_pool2d(x);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0;
    for (std::size_t i = 0; i < 16; ++i) sum += x[c * 16 + i];
    EXPECT_NEAR(out[c], sum / 16, 1e-15);
  }
}

TEST(Dense, IdentityAndBias) {
  const Tensor<double> x(Shape{1, 2}, {1, 2});
  const Tensor<double> eye(Shape{2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(dense(x, eye, Tensor<double>(Shape{2})).values(), x.values());
  EXPECT_EQ(dense(x, eye, Tensor<double>(Shape{2}, {10, 20})).values(), (std::vector<double>{11, 22}));
}

TEST(Dense, MatchesNaiveMatmul) {
  const auto x = oracle::random_tensor<double>(Shape{2, 3}, 30);
  const auto w = oracle::random_tensor<double>(Shape{3, 4}, 31);
  const auto out = dense(x, w, Tensor<double>(Shape{4}));
  const auto expected = oracle::matmul_loops(x, w);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], expected[i], 1e-14);
}

TEST(Dense, DimensionMismatchRejected) {
  EXPECT_THROW(dense(Tensor<float>(Shape{2, 3}), Tensor<float>(Shape{4, 2}), Tensor<float>(Shape{2})),
               std::invalid_argument);
}

TEST(Elementwise, ReluAndSoftmax) {
  EXPECT_EQ(relu(Tensor<float>(Shape{3}, {-1, 2, 0})).values(), (std::vector<float>{0, 2, 0}));
  for (float v : {0.0f, 1000.0f}) {
    const auto p = softmax(Tensor<float>(Shape{1, 3}, v));
    for (auto q : p.data()) {
      EXPECT_TRUE(std::isfinite(q));
      EXPECT_NEAR(q, 1.0f / 3.0f, 1e-7);
    }
  }
}

TEST(Elementwise, SoftmaxRowsArePositiveDistributions) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = oracle::random_tensor<float>(Shape{4, 5}, seed, -50.0, 50.0);
    const auto p = softmax(x);
    for (std::size_t i = 0; i < 4; ++i) {
      float sum = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        EXPECT_GT(p.at(i, j), 0.0f);
        sum += p.at(i, j);
      }
      EXPECT_NEAR(sum, 1.0f, 1e-6);
    }
  }
}

TEST(Structural, ConcatThenSplitReconstructsParts) {
  std::vector<Tensor<float>> parts = {oracle::random_tensor<float>(Shape{3, 2}, 1),
                                      oracle::random_tensor<float>(Shape{3, 5}, 2),
                                      oracle::random_tensor<float>(Shape{3, 1}, 3)};
  const auto joined = concat(std::span<const Tensor<float>>(parts));
  ASSERT_EQ(joined.shape(), (Shape{3, 8}));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < p.dim(1); ++j) EXPECT_EQ(joined.at(i, offset + j), p.at(i, j));
    offset += p.dim(1);
  }
  EXPECT_THROW(concat(std::span<const Tensor<float>>()), std::invalid_argument);
}

TEST(Structural, FlattenKeepsRowMajorOrder) {
  Tensor<float> x(Shape{2, 2, 2, 3});
  std::iota(x.data().begin(), x.data().end(), 0.0f);
  const auto flat = flatten(x);
  EXPECT_EQ(flat.shape(), (Shape{2, 12}));
  EXPECT_EQ(flat.values(), x.values());
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  const auto x = oracle::random_tensor<float>(Shape{4, 3, 12, 12}, 77);
  const auto k = oracle::random_tensor<float>(Shape{8, 3, 3, 3}, 78);
  const auto b = oracle::random_tensor<float>(Shape{8}, 79);
  EXPECT_EQ(conv2d(x, k, b, {1, Padding::Same}), conv2d(x, k, b, {1, Padding::Same}));
}

TEST(TensorType, InvariantsEnforced) {
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(Tensor<float>(Shape{2, 0}), std::invalid_argument);
  Tensor<float> t(Shape{2}, {1.0f, std::nanf("")});
  EXPECT_FALSE(t.all_finite());
}
