#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace stitchkit;
using testutil::random_tensor;

namespace {

// Every trainable path: conv (padded and strided), relu, max pool, global
// average pool, flatten, two linears.
Network probe_net(std::uint64_t seed) {
  ArchSpec a{"probe",
             {LayerSpec::conv(3, 3, 1, 1), LayerSpec::relu(), LayerSpec::max_pool(), LayerSpec::conv(4, 3, 2, 1),
              LayerSpec::relu(), LayerSpec::global_avg_pool(), LayerSpec::flatten(), LayerSpec::linear(5),
              LayerSpec::relu(), LayerSpec::linear(), LayerSpec::softmax()}};
  return build_network(a, {2, 6, 6}, {"a", "b", "c"}, "probe", seed);
}

}  // namespace

TEST(Train, GradientsMatchFiniteDifferences) {
  Rng rng(1);
  const Network net = probe_net(2);
  const Tensor x = random_tensor({4, 2, 6, 6}, rng);
  const std::vector<std::size_t> labels{0, 2, 1, 2};
  const auto gc = testutil::gradient_check(net, x, labels, rng);
  EXPECT_GE(gc.probes, 30u);
  EXPECT_LE(gc.max_relative_error, 1e-4);
}

TEST(Train, ZooGradientsMatchFiniteDifferences) {
  const Dataset d = testutil::tiny_data(2);
  Rng rng(3);
  for (const auto& net : testutil::tiny_zoo()) {
    std::vector<std::size_t> idx{0, 5, 9, 14};
    std::vector<std::size_t> labels;
    for (auto i : idx) labels.push_back(d.labels[i]);
    const auto gc = testutil::gradient_check(net, take_samples(d.images, idx), labels, rng);
    EXPECT_LE(gc.max_relative_error, 1e-4) << net.id;
  }
}

TEST(Train, ZeroEpochsReturnsInitialNetwork) {
  const Dataset d = testutil::tiny_data(2);
  const Network init = testutil::tiny_zoo()[0];
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto t = train_network(init, d, cfg);
  EXPECT_EQ(serialize_network(t.network), serialize_network(init));
  EXPECT_TRUE(t.epoch_loss.empty());
}

TEST(Train, SeparableToyDataIsLearned) {
  Rng rng(4);
  Dataset d;
  d.class_names = {"neg", "pos"};
  d.images = Tensor({100, 1, 2, 2});
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t label = i % 2;
    for (std::size_t k = 0; k < 4; ++k) d.images[i * 4 + k] = rng.normal(label ? 1.5 : -1.5, 0.5);
    d.labels.push_back(label);
  }
  ArchSpec a{"tiny", {LayerSpec::flatten(), LayerSpec::linear(4), LayerSpec::relu(), LayerSpec::linear(),
                      LayerSpec::softmax()}};
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.lr = 0.01;
  const auto t = train_network(build_network(a, {1, 2, 2}, d.class_names, "tiny", 5), d, cfg);
  const auto pred = argmax_rows(forward(t.network, d.images));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < 100; ++i) correct += pred[i] == d.labels[i];
  EXPECT_GE(correct, 98u);
  EXPECT_LT(t.epoch_loss.back(), t.epoch_loss.front());
}

TEST(Train, ReproducibleBySeed) {
  const Dataset d = testutil::tiny_data(3);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 9;
  const Network init = testutil::tiny_zoo()[2];
  EXPECT_EQ(serialize_network(train_network(init, d, cfg).network),
            serialize_network(train_network(init, d, cfg).network));
}

TEST(Train, DivergenceReportsEpoch) {
  const Dataset d = testutil::tiny_data(3);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr = 1e6;
  try {
    train_network(testutil::tiny_zoo()[2], d, cfg);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Train, OutputWidthMustMatchClasses) {
  const Dataset d = make_synthetic_dataset(3, 2, 8, 1);
  EXPECT_THROW(train_network(testutil::tiny_zoo()[0], d, {}), ConfigError);
}

TEST(Finetune, BodyIsFrozenAndCurveRecorded) {
  const auto split = train_test_split(testutil::tiny_data(10));
  const Network net = testutil::tiny_zoo()[0];
  FinetuneConfig cfg;
  cfg.samples_budget = 96;
  const auto r = finetune_last_layer(net, split.train, split.test, superclass_map(), cfg);
  const std::size_t head = head_index(net);
  for (std::size_t i = 0; i < head; ++i) {
    if (const auto* l = std::get_if<Conv2d>(&net.layers[i].op)) {
      const auto& m = std::get<Conv2d>(r.network.layers[i].op);
      EXPECT_TRUE(bitwise_equal(l->weight, m.weight));
      EXPECT_TRUE(bitwise_equal(l->bias, m.bias));
    }
  }
  EXPECT_EQ(r.curve.front().samples_processed, 0u);
  EXPECT_EQ(r.curve.back().samples_processed, 96u);
  EXPECT_EQ(r.curve.size(), 4u);
  EXPECT_EQ(r.network.class_labels.size(), 2u);
}

TEST(Finetune, ZeroBudgetIsReinitializedHead) {
  const auto split = train_test_split(testutil::tiny_data(10));
  FinetuneConfig cfg;
  cfg.samples_budget = 0;
  const auto r = finetune_last_layer(testutil::tiny_zoo()[1], split.train, split.test, superclass_map(), cfg);
  ASSERT_EQ(r.curve.size(), 1u);
  EXPECT_EQ(r.curve[0].samples_processed, 0u);
}

TEST(Finetune, BudgetedCurveTrendsUpward) {
  const Dataset d = make_synthetic_dataset(8, 40, 16, 2);
  const auto split = train_test_split(d);
  TrainConfig tc;
  tc.epochs = 4;
  tc.lr = 0.01;
  const Network net = train_network(testutil::tiny_zoo(3, 16)[0], split.train, tc).network;
  FinetuneConfig cfg;
  cfg.samples_budget = 320;
  cfg.lr = 0.01;
  const auto r = finetune_last_layer(net, split.train, split.test, superclass_map(), cfg);
  const auto& c = r.curve;
  ASSERT_GE(c.size(), 3u);
  EXPECT_GE(c.back().accuracy, c[c.size() - 2].accuracy - 0.1);
  EXPECT_GE(c.back().accuracy, c.front().accuracy);
}
