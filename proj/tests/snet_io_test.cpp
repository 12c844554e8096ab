#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"

using namespace stitchkit;
using testutil::same_network;

namespace {

GenerationResult small_generation(bool affine = false) {
  const auto parts = train_test_split(testutil::tiny_data(6));
  GenerationConfig cfg;
  cfg.threshold = 0.2;
  cfg.max_fragments = 5;
  cfg.samples = 24;
  cfg.span = 3;
  cfg.affine = affine;
  return generate(FragmentPool(testutil::tiny_zoo()), parts.train, cfg);
}

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  const auto p = s.find(from);
  if (p == std::string::npos) throw std::logic_error("pattern not found: " + from);
  return s.replace(p, from.size(), to);
}

}  // namespace

TEST(SnetIo, NetworkRoundTripIsBitwise) {
  for (const auto& net : testutil::tiny_zoo()) {
    const std::string bytes = serialize_network(net);
    const Network back = parse_network(bytes);
    EXPECT_TRUE(same_network(net, back)) << net.id;
    EXPECT_EQ(serialize_network(back), bytes);
  }
}

TEST(SnetIo, NetworkFileRoundTrip) {
  const auto dir = testutil::temp_dir("snet_net");
  const auto net = testutil::tiny_zoo()[1];
  save_network(net, dir / "nested" / "b.snet");
  EXPECT_EQ(snet_kind(dir / "nested" / "b.snet"), "network");
  const Network back = load_network(dir / "nested" / "b.snet");
  EXPECT_TRUE(same_network(net, back));
  const Tensor x = testutil::tiny_data(2).images;
  EXPECT_TRUE(bitwise_equal(forward(net, x), forward(back, x)));
}

TEST(SnetIo, StitchNetRoundTripKeepsPiecesAndOutputs) {
  for (bool affine : {false, true}) {
    const auto r = small_generation(affine);
    ASSERT_FALSE(r.entries.empty());
    const Tensor x = testutil::tiny_data(2).images;
    bool saw_adapter = false;
    for (const auto& e : r.entries) {
      const std::string bytes = serialize_stitchnet(e.net);
      const StitchNet back = parse_stitchnet(bytes);
      EXPECT_EQ(back.id(), e.net.id());
      EXPECT_EQ(back.score(), e.net.score());
      EXPECT_EQ(back.stitch_split(), e.net.stitch_split());
      ASSERT_EQ(back.fragment_count(), e.net.fragment_count());
      for (std::size_t i = 0; i < back.pieces().size(); ++i) {
        const auto& p = back.pieces()[i];
        const auto& q = e.net.pieces()[i];
        EXPECT_EQ(p.fragment.id(), q.fragment.id());
        EXPECT_EQ(p.fragment.input_shape, q.fragment.input_shape);
        EXPECT_EQ(p.joint_cka, q.joint_cka);
        EXPECT_EQ(p.adapter.size(), q.adapter.size());
        saw_adapter = saw_adapter || !p.adapter.empty();
      }
      EXPECT_TRUE(same_network(back.network(), e.net.network()));
      EXPECT_TRUE(bitwise_equal(forward(back, x), forward(e.net, x)));
      EXPECT_EQ(serialize_stitchnet(back), bytes);
    }
    EXPECT_TRUE(saw_adapter);
  }
}

TEST(SnetIo, DatasetRoundTrip) {
  const auto parts = train_test_split(testutil::tiny_data(3));
  const auto dir = testutil::temp_dir("snet_data");
  save_dataset(parts.test, dir / "test.snet");
  EXPECT_EQ(snet_kind(dir / "test.snet"), "dataset");
  const Dataset back = load_dataset(dir / "test.snet");
  EXPECT_TRUE(bitwise_equal(back.images, parts.test.images));
  EXPECT_EQ(back.labels, parts.test.labels);
  EXPECT_EQ(back.class_names, parts.test.class_names);
  EXPECT_EQ(back.seed, parts.test.seed);
  EXPECT_EQ(back.split, "test");
}

TEST(SnetIo, SpecialValuesSurvive) {
  Network net = testutil::tiny_zoo()[2];
  auto& fc = std::get<Linear>(net.layers[1].op);
  fc.weight[0] = -0.0;
  fc.weight[1] = 5e-324;
  fc.weight[2] = 1.7976931348623157e308;
  const Network back = parse_network(serialize_network(net));
  EXPECT_TRUE(same_network(net, back));
  EXPECT_TRUE(std::signbit(std::get<Linear>(back.layers[1].op).weight[0]));
}

TEST(SnetIo, WrongKindIsRejected) {
  const auto net = testutil::tiny_zoo()[0];
  EXPECT_THROW(parse_stitchnet(serialize_network(net)), ParseError);
  EXPECT_THROW(parse_dataset(serialize_network(net)), ParseError);
}

TEST(SnetIo, BlobShortfallNamesTheTensor) {
  const std::string bytes = serialize_network(testutil::tiny_zoo()[2]);
  try {
    parse_network(std::string_view(bytes).substr(0, bytes.size() - 8));
    FAIL() << "no error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("fc9.bias"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("at byte"), std::string::npos) << e.what();
  }
}

TEST(SnetIo, TrailingBytesAreRejected) {
  const std::string bytes = serialize_network(testutil::tiny_zoo()[2]) + std::string(8, '\0');
  EXPECT_THROW(parse_network(bytes), ParseError);
}

TEST(SnetIo, UnknownLayerKindIsRejected) {
  const std::string bytes = serialize_network(testutil::tiny_zoo()[2]);
  try {
    parse_network(replace_once(bytes, "layer relu2 relu", "layer relu2 gelu"));
    FAIL() << "no error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("gelu"), std::string::npos) << e.what();
  }
}

TEST(SnetIo, MalformedHeadersAreRejected) {
  const std::string bytes = serialize_network(testutil::tiny_zoo()[2]);
  EXPECT_THROW(parse_network(replace_once(bytes, "SNET 1", "SNET 9")), ParseError);
  EXPECT_THROW(parse_network(replace_once(bytes, "SNET 1", "XNET 1")), ParseError);
  EXPECT_THROW(parse_network(replace_once(bytes, "tensor 1 weight 24 64", "tensor 1 weight 24 63")), ParseError);
  EXPECT_THROW(parse_network(replace_once(bytes, "tensor 1 weight 24 64", "tensor 1 weight 24 x")), ParseError);
  EXPECT_THROW(parse_network(""), ParseError);
}

TEST(SnetIo, EveryTruncationFailsCleanly) {
  const std::string bytes = serialize_network(testutil::tiny_zoo()[2]);
  const std::size_t header_end = bytes.find("\nend\n") + 5;
  for (std::size_t cut = 0; cut < bytes.size(); cut += cut < header_end ? 1 : 97) {
    EXPECT_THROW(parse_network(std::string_view(bytes).substr(0, cut)), ParseError) << "cut at " << cut;
  }
}

TEST(SnetIo, MissingFileIsAnIoError) {
  EXPECT_THROW(load_network(testutil::temp_dir("snet_missing") / "nope.snet"), IoError);
}

TEST(SnetIo, ManifestResolvesRelativePaths) {
  const auto dir = testutil::temp_dir("snet_manifest");
  const auto zoo = testutil::tiny_zoo();
  PoolManifest m;
  m.granularity = Granularity::AllSpans;
  for (const auto& n : zoo) {
    save_network(n, dir / "zoo" / (n.id + ".snet"));
    m.networks.push_back(std::filesystem::path("zoo") / (n.id + ".snet"));
  }
  save_manifest(m, dir / "pool.txt");
  EXPECT_EQ(parse_manifest(serialize_manifest(m)).networks, m.networks);
  const FragmentPool pool = load_pool(dir / "pool.txt");
  const FragmentPool direct(zoo, Granularity::AllSpans);
  EXPECT_EQ(pool.granularity(), Granularity::AllSpans);
  ASSERT_EQ(pool.fragments().size(), direct.fragments().size());
  for (std::size_t i = 0; i < direct.fragments().size(); ++i)
    EXPECT_EQ(pool.fragments()[i].id(), direct.fragments()[i].id());
}

TEST(SnetIo, ManifestErrors) {
  EXPECT_THROW(parse_manifest("network a.snet\n"), ParseError);
  EXPECT_THROW(parse_manifest("granularity single_cut\n"), ParseError);
  EXPECT_THROW(parse_manifest("granularity sometimes\nnetwork a\n"), ParseError);
  EXPECT_THROW(parse_manifest("granularity single_cut\nmodel a\n"), ParseError);
  const auto m = parse_manifest("# zoo\ngranularity single_cut\r\n\nnetwork a.snet\n");
  EXPECT_EQ(m.networks.size(), 1u);
}

TEST(SnetIo, LabelMapFile) {
  const auto map = superclass_map();
  const LabelMap back = parse_label_map(serialize_label_map(map));
  EXPECT_EQ(back, map);
  const auto partial = parse_label_map("target 0 even\ntarget 1 odd\nmap 0 0\nmap 1 1\nmap 2 0\n");
  EXPECT_EQ(partial.num_targets(), 2u);
  EXPECT_FALSE(partial.map(3).has_value());
  EXPECT_EQ(partial.target_names()[1], "odd");
  EXPECT_THROW(parse_label_map("target 0 a\nmap 0 1\n"), ParseError);
  EXPECT_THROW(parse_label_map("target 1 a\nmap 0 0\n"), ParseError);
  EXPECT_THROW(parse_label_map("mapping 0 0\n"), ParseError);
}
