#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace stitchkit;

TEST(Dataset, DeterministicBySeed) {
  const Dataset a = make_synthetic_dataset(4, 5, 8, 11);
  const Dataset b = make_synthetic_dataset(4, 5, 8, 11);
  const Dataset c = make_synthetic_dataset(4, 5, 8, 12);
  EXPECT_TRUE(bitwise_equal(a.images, b.images));
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_FALSE(bitwise_equal(a.images, c.images));
}

TEST(Dataset, SplitSizes) {
  const Dataset d = make_synthetic_dataset(8, 200, 8, 1);
  EXPECT_EQ(d.size(), 1600u);
  const auto s = train_test_split(d);
  EXPECT_EQ(s.train.size(), 1280u);
  EXPECT_EQ(s.test.size(), 320u);
  EXPECT_EQ(s.train.split, "train");
  EXPECT_EQ(s.test.split, "test");
  std::vector<std::size_t> per_class(8, 0);
  for (auto l : s.test.labels) ++per_class[l];
  for (auto c : per_class) EXPECT_EQ(c, 40u);
}

TEST(LabelMap, GroupSumsAndRenormalization) {
  const LabelMap m({{0, 0}, {1, 0}, {2, 1}, {3, 1}});
  const Tensor out = apply_label_map(Tensor({1, 4}, {0.1, 0.2, 0.3, 0.4}), m);
  EXPECT_NEAR(out[0], 0.3, 1e-15);
  EXPECT_NEAR(out[1], 0.7, 1e-15);
}

TEST(LabelMap, RandomRowsMatchBruteForceGroupSums) {
  Rng rng(2);
  const LabelMap m = superclass_map();
  Tensor p({20, 8});
  for (double& v : p.data()) v = rng.uniform();
  const Tensor probs = softmax_rows(p);
  const Tensor out = apply_label_map(probs, m);
  for (std::size_t i = 0; i < 20; ++i) {
    double lo = 0, hi = 0;
    for (std::size_t c = 0; c < 4; ++c) lo += probs.at(i, c);
    for (std::size_t c = 4; c < 8; ++c) hi += probs.at(i, c);
    EXPECT_NEAR(out.at(i, 0), lo / (lo + hi), 1e-12);
    EXPECT_NEAR(out.at(i, 1), hi / (lo + hi), 1e-12);
  }
}

TEST(LabelMap, IdentityIsNoOpOnNormalizedRows) {
  const Tensor probs({1, 3}, {0.2, 0.3, 0.5});
  EXPECT_LE(max_abs_diff(apply_label_map(probs, LabelMap::identity(3)), probs), 1e-15);
}

TEST(LabelMap, PartialMapRenormalizesOverMappedMass) {
  const LabelMap m({{1, 0}, {2, 1}});
  const Tensor out = apply_label_map(Tensor({1, 3}, {0.5, 0.1, 0.4}), m);
  EXPECT_NEAR(out[0], 0.2, 1e-15);
  EXPECT_NEAR(out[1], 0.8, 1e-15);
}

TEST(LabelMap, Errors) {
  using Mapping = std::map<std::size_t, std::size_t>;
  EXPECT_THROW(LabelMap(Mapping{}), ConfigError);
  EXPECT_THROW(LabelMap(Mapping{{0, 1}}), ConfigError);
  EXPECT_THROW(apply_label_map(Tensor({1, 3}), LabelMap(Mapping{{5, 0}})), ConfigError);
  EXPECT_THROW(apply_label_map(Tensor({1, 3}), LabelMap()), ConfigError);
}

TEST(LabelMap, MapDatasetFiltersAndRelabels) {
  const Dataset d = make_synthetic_dataset(8, 3, 8, 1);
  const Dataset m = map_dataset(d, LabelMap({{0, 0}, {7, 1}}, {"x", "y"}));
  EXPECT_EQ(m.size(), 6u);
  EXPECT_EQ(m.class_names, (std::vector<std::string>{"x", "y"}));
  for (auto l : m.labels) EXPECT_LT(l, 2u);
}
