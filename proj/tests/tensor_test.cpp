#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace stitchkit;
using testutil::random_tensor;

TEST(Tensor, RejectsBadConstruction) {
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  EXPECT_THROW(Tensor({1, 1, 1, 1, 1}), DimensionError);
  EXPECT_THROW(Tensor({2}, {1.0}), DimensionError);
  EXPECT_THROW(Tensor({1}, {std::nan("")}), NumericError);
  EXPECT_TRUE(Tensor().empty());
}

TEST(Tensor, MatmulMatchesNaiveLoop) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto m = 1 + rng.below(9), k = 1 + rng.below(9), n = 1 + rng.below(9);
    const Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    EXPECT_LE(max_abs_diff(matmul(a, b), testutil::naive_matmul(a, b)), 1e-12);
  }
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Tensor, Conv2dMatchesDirectDefinition) {
  Rng rng(2);
  for (std::size_t stride : {1, 2})
    for (std::size_t pad : {0, 1, 2}) {
      const Tensor x = random_tensor({2, 3, 7, 6}, rng);
      const Tensor w = random_tensor({4, 3, 3, 3}, rng);
      const Tensor b = random_tensor({4}, rng);
      const Tensor got = conv2d(x, w, b, stride, pad);
      const Tensor want = testutil::naive_conv(x, w, b, stride, pad);
      ASSERT_EQ(got.shape(), want.shape());
      EXPECT_LE(max_abs_diff(got, want), 1e-12) << "stride " << stride << " pad " << pad;
    }
}

TEST(Tensor, Conv2dChannelMismatch) {
  EXPECT_THROW(conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1}), 1, 0), DimensionError);
}

TEST(Tensor, MaxPoolPicksWindowMaximum) {
  Tensor x({1, 1, 2, 4}, {1, 5, 2, 2, 3, 0, 2, 7});
  const Tensor y = max_pool2d(x, 2, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_EQ(y[0], 5.0);
  EXPECT_EQ(y[1], 7.0);
}

TEST(Tensor, AdaptivePoolAverages) {
  Tensor x({1, 2, 2, 2}, {1, 2, 3, 4, -1, -1, -1, 3});
  const Tensor y = adaptive_avg_pool_1x1(x);
  EXPECT_DOUBLE_EQ(y[0], 2.5);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
}

TEST(Tensor, ResizeShrinksByBlockAverageAndGrowsByNearest) {
  Rng rng(3);
  const Tensor x = random_tensor({1, 1, 4, 4}, rng);
  EXPECT_TRUE(bitwise_equal(resize_spatial(x, 4, 4), x));
  const Tensor half = resize_spatial(x, 2, 2);
  const double want = (x.at(0, 0, 0, 0) + x.at(0, 0, 0, 1) + x.at(0, 0, 1, 0) + x.at(0, 0, 1, 1)) / 4;
  EXPECT_NEAR(half.at(0, 0, 0, 0), want, 1e-15);
  const Tensor up = resize_spatial(half, 4, 4);
  EXPECT_EQ(up.at(0, 0, 3, 3), half.at(0, 0, 1, 1));
  EXPECT_EQ(up.at(0, 0, 0, 1), half.at(0, 0, 0, 0));
}

TEST(Tensor, ReluAndSoftmax) {
  const Tensor r = relu(Tensor({2}, {-1.0, 2.0}));
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 2.0);
  Rng rng(4);
  const Tensor s = softmax_rows(random_tensor({5, 7}, rng, 30.0));
  for (std::size_t i = 0; i < 5; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < 7; ++j) sum += s.at(i, j);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Tensor, ArgmaxTiesGoToLowestIndex) {
  const auto a = argmax_rows(Tensor({2, 3}, {0.5, 0.5, 0.1, 0.2, 0.4, 0.4}));
  EXPECT_EQ(a[0], 0u);
  EXPECT_EQ(a[1], 1u);
}

TEST(Tensor, SampleSelectionAndLayout) {
  Tensor x({3, 2}, {1, 2, 3, 4, 5, 6});
  const std::vector<std::size_t> idx{2, 0};
  const Tensor t = take_samples(x, idx);
  EXPECT_EQ(t.values(), (std::vector<double>{5, 6, 1, 2}));
  const Tensor f = to_feature_major(x);
  EXPECT_EQ(f.shape(), (Shape{2, 3}));
  EXPECT_EQ(f.at(1, 2), 6.0);
  const Tensor c = center_columns(Tensor({1, 3}, {1, 2, 6}));
  EXPECT_DOUBLE_EQ(c.at(0, 0), -2.0);
}
