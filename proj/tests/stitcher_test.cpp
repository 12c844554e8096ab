#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace stitchkit;
using testutil::random_tensor;

namespace {

Fragment fragment_of(std::vector<Layer> layers, Shape input, std::size_t start = 2) {
  Fragment f;
  f.source_network_id = "src";
  f.start_layer = start;
  f.end_layer = start + layers.size();
  f.source_length = f.end_layer + 1;
  f.input_shape = std::move(input);
  f.layers = std::move(layers);
  return f;
}

Tensor apply_fused(const StitchPiece& piece, const Tensor& x) {
  return forward_layers(piece.fragment.layers, forward_layers(piece.adapter, x));
}

// Per-sample (and, for images, per-position) channel projection A x + c.
Tensor project_channels(const Tensor& x, const Tensor& a, const Tensor& c) {
  const std::size_t n = x.dim(0), p = a.dim(1), q = a.dim(0);
  const std::size_t plane = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  Shape s = x.shape();
  s[1] = q;
  Tensor out(s);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < plane; ++k)
      for (std::size_t r = 0; r < q; ++r) {
        double acc = c[r];
        for (std::size_t j = 0; j < p; ++j) acc += a.at(r, j) * x[(i * p + j) * plane + k];
        out[(i * q + r) * plane + k] = acc;
      }
  return out;
}

Projection random_projection(JointKind kind, std::size_t q, std::size_t p, Rng& rng, bool affine = false) {
  Projection pr{kind, random_tensor({q, p}, rng), Tensor({q})};
  if (affine) pr.intercept = random_tensor({q}, rng);
  return pr;
}

}  // namespace

TEST(Fusion, LinearToLinearEqualsProjectThenApply) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const std::size_t p = 1 + rng.below(10), q = 1 + rng.below(10), l = 1 + rng.below(10), n = 1 + rng.below(6);
    const Fragment f = fragment_of({{"fc", Linear{random_tensor({l, q}, rng), random_tensor({l}, rng)}}, {"relu", ReLU{}}}, {q});
    const Tensor x = random_tensor({n, p}, rng), y = random_tensor({n, q}, rng);
    const Projection pr = random_projection(JointKind::LinearToLinear, q, p, rng, t % 2 == 1);
    const StitchPiece piece = fuse_fragment(f, x, y, pr);
    EXPECT_TRUE(piece.adapter.empty());
    const Tensor want = forward_layers(f.layers, project_channels(x, pr.matrix, pr.intercept));
    EXPECT_LE(max_abs_diff(apply_fused(piece, x), want), 1e-9);
  }
}

TEST(Fusion, ConvToConvEqualsPerPositionChannelProjection) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const std::size_t p = 1 + rng.below(5), q = 1 + rng.below(5), o = 1 + rng.below(5), n = 1 + rng.below(3);
    const std::size_t hx = 2 + rng.below(7), hy = 3 + rng.below(6);
    const std::size_t k = 1 + rng.below(2) * 2, pad = rng.below(2);
    const Fragment f = fragment_of(
        {{"conv", Conv2d{random_tensor({o, q, k, k}, rng), random_tensor({o}, rng), 1 + rng.below(2), pad}}}, {q, hy, hy});
    const Tensor x = random_tensor({n, p, hx, hx}, rng), y = random_tensor({n, q, hy, hy}, rng);
    // Affine intercepts fold exactly only without zero padding.
    const Projection pr = random_projection(JointKind::ConvToConv, q, p, rng, pad == 0 && t % 2 == 1);
    const StitchPiece piece = fuse_fragment(f, x, y, pr);
    EXPECT_EQ(piece.adapter.size(), hx == hy ? 0u : 1u);
    const Tensor projected = project_channels(resize_spatial(x, hy, hy), pr.matrix, pr.intercept);
    const Tensor want = forward_layers(f.layers, projected);
    EXPECT_LE(max_abs_diff(apply_fused(piece, x), want), 1e-9);
  }
}

TEST(Fusion, ConvToLinearPoolsThenProjects) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const std::size_t p = 1 + rng.below(6), q = 1 + rng.below(8), l = 1 + rng.below(6), n = 1 + rng.below(4);
    const std::size_t h = 1 + rng.below(6);
    const Fragment f = fragment_of({{"fc", Linear{random_tensor({l, q}, rng), random_tensor({l}, rng)}}}, {q});
    const Tensor x = random_tensor({n, p, h, h}, rng), y = random_tensor({n, q}, rng);
    const Projection pr = random_projection(JointKind::ConvToLinear, q, p, rng, t % 2 == 1);
    const StitchPiece piece = fuse_fragment(f, x, y, pr);
    ASSERT_EQ(piece.adapter.size(), 2u);
    const Tensor pooled = flatten_samples(adaptive_avg_pool_1x1(x));
    const Tensor want = forward_layers(f.layers, project_channels(pooled, pr.matrix, pr.intercept));
    EXPECT_LE(max_abs_diff(apply_fused(piece, x), want), 1e-9);
  }
}

TEST(Fusion, FusedLayerKeepsOutgoingWidth) {
  Rng rng(4);
  const Tensor w = random_tensor({3, 5}, rng), mix = random_tensor({7, 5}, rng);
  const Tensor fused = fuse_linear(w, mix);
  EXPECT_EQ(fused.shape(), (Shape{3, 7}));
  EXPECT_LE(max_abs_diff(fused, matmul(w, transpose(mix))), 1e-12);
  EXPECT_THROW(fuse_linear(w, random_tensor({7, 4}, rng)), DimensionError);
}

TEST(JointKinds, ClassifiedByRankAndFirstLayer) {
  Rng rng(5);
  const Fragment lin = fragment_of({{"fc", Linear{random_tensor({2, 3}, rng), Tensor({2})}}}, {3});
  const Fragment conv = fragment_of({{"c", Conv2d{random_tensor({2, 3, 1, 1}, rng), Tensor({2}), 1, 0}}}, {3, 4, 4});
  EXPECT_EQ(joint_kind(1, lin), JointKind::LinearToLinear);
  EXPECT_EQ(joint_kind(3, conv), JointKind::ConvToConv);
  EXPECT_EQ(joint_kind(3, lin), JointKind::ConvToLinear);
  EXPECT_FALSE(joint_kind(1, conv).has_value());
  EXPECT_THROW(require_joint_kind(Tensor({2, 5}), conv), UnsupportedJointError);
}

TEST(Stitch, SelfRecompositionIsNearIdentity) {
  const Dataset d = testutil::tiny_data(20);
  for (const auto& net : testutil::tiny_zoo()) {
    const auto frags = fragmentize(net);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < 64; ++i) idx.push_back(i);
    const Tensor D = take_samples(d.images, idx);
    StitchNet q = StitchNet::from_starting(frags[0]);
    Tensor x = forward_layers(frags[0].layers, D);
    for (std::size_t i = 1; i < frags.size(); ++i) {
      const Tensor y = forward_upto(net, frags[i].start_layer, D);
      q = stitch(q, frags[i], x, y);
      EXPECT_NEAR(q.pieces().back().joint_cka, 1.0, 1e-9);
      x = forward_layers(q.pieces().back().fragment.layers, forward_layers(q.pieces().back().adapter, x));
    }
    EXPECT_TRUE(q.complete());
    EXPECT_NEAR(q.score(), 1.0, 1e-9);
    EXPECT_EQ(q.parameter_count(), parameter_count(net));
    EXPECT_LE(max_abs_diff(forward(q, D), forward(net, D)), 1e-4) << net.id;
    // Held-out samples can excite units that were silent on D, so only
    // predictions are compared there.
    std::vector<std::size_t> rest;
    for (std::size_t i = 64; i < d.size(); ++i) rest.push_back(i);
    const Tensor held = take_samples(d.images, rest);
    const auto a = argmax_rows(forward(q, held)), b = argmax_rows(forward(net, held));
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) agree += a[i] == b[i];
    EXPECT_GE(static_cast<double>(agree) / a.size(), 0.95) << net.id;
  }
}

TEST(Stitch, ScoreIsProductOfJoints) {
  const auto zoo = testutil::tiny_zoo();
  const Dataset d = testutil::tiny_data(4);
  const Fragment a = fragmentize(zoo[0])[0];
  const Fragment b = fragmentize(zoo[1])[3];  // conv -> conv with a different spatial size
  const Fragment c = fragmentize(zoo[2]).back();
  StitchNet q = StitchNet::from_starting(a);
  Tensor x = forward_layers(a.layers, d.images);
  q = stitch(q, b, x, forward_upto(zoo[1], b.start_layer, d.images), 0.8);
  x = forward(q, d.images);
  q = stitch(q, c, x, forward_upto(zoo[2], c.start_layer, d.images), 0.5);
  EXPECT_DOUBLE_EQ(q.score(), 0.4);
  EXPECT_DOUBLE_EQ(q.product_of_joints(), 0.4);
  EXPECT_TRUE(q.complete());
  const Tensor out = forward(q, d.images);
  EXPECT_EQ(out.shape(), (Shape{d.size(), 8}));
  for (std::size_t i = 0; i < d.size(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 8; ++j) s += out.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  EXPECT_THROW(stitch(q, c, out, out), ConfigError);
  EXPECT_THROW(stitch(StitchNet::from_starting(a), a, x, x), ConfigError);
}

TEST(Stitch, OverlapDetection) {
  const auto frags = fragmentize(testutil::tiny_zoo()[0]);
  const StitchNet q = StitchNet::from_starting(frags[0]);
  EXPECT_TRUE(q.overlaps(frags[0]));
  EXPECT_FALSE(q.overlaps(frags[1]));
}
