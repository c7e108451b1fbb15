#include <gtest/gtest.h>

#include "disento/features.hpp"
#include "test_util.hpp"

using namespace disento;

namespace {

FeatureStore two_by_three(std::size_t dim) {
  FeatureStore s(dim, FeatureKind::real);
  Rng rng(7);
  for (const char* c : {"cat", "dog"})
    for (int n = 0; n < 3; ++n) s.add(c, normal_vec(rng, static_cast<Eigen::Index>(dim), 1.0));
  return s;
}

}  // namespace

TEST(FeatureStore, CountsSamples) {
  disento::testing::TempDir dir;
  const auto path = dir.write("f.tsv", serialize_features_text(two_by_three(4)));
  auto s = load_features(path);
  EXPECT_EQ(s.feature_dim, 4u);
  EXPECT_EQ(s.num_classes(), 2u);
  EXPECT_EQ(s.total(), 6u);
}

TEST(FeatureStore, DeclaredDimIsKept) {
  auto s = parse_features_text("2048\t1\nc\t" + [] {
    std::string v;
    for (int i = 0; i < 2048; ++i) v += (i ? " " : "") + std::to_string(i % 7);
    return v;
  }());
  EXPECT_EQ(s.feature_dim, 2048u);
  EXPECT_DOUBLE_EQ(s.samples("c")[0][15], 1.0);
}

TEST(FeatureStore, WrongLengthRecordIsRejected) {
  try {
    parse_features_text("3\t2\na\t1 2 3\na\t1 2\n", "x.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(FeatureStore, CountMismatchIsRejected) {
  EXPECT_THROW(parse_features_text("2\t3\na\t1 2\n"), ParseError);
}

TEST(FeatureStore, EmptyFileWarns) {
  auto s = parse_features_text("5\t0\n");
  EXPECT_EQ(s.total(), 0u);
  ASSERT_EQ(s.warnings.size(), 1u);
}

TEST(FeatureStore, TextRoundTripIsExact) {
  auto s = two_by_three(5);
  EXPECT_EQ(parse_features_text(serialize_features_text(s)), s);
}

TEST(FeatureStore, BinaryRoundTripIsExact) {
  disento::testing::TempDir dir;
  auto s = two_by_three(9);
  s.kind = FeatureKind::synthetic;
  const auto path = (std::filesystem::path(dir.path()) / "f.bin").string();
  save_features(s, path);
  EXPECT_EQ(load_features(path), s);
}

TEST(FeatureStore, MeanAndStacking) {
  FeatureStore s(2, FeatureKind::real);
  s.add("a", Vec::Constant(2, 1.0));
  s.add("a", Vec::Constant(2, 3.0));
  s.add("b", Vec::Constant(2, -1.0));
  EXPECT_TRUE(s.mean("a").isApprox(Vec::Constant(2, 2.0)));
  auto [x, y] = s.stacked({"b", "a"});
  EXPECT_EQ(x.rows(), 3);
  EXPECT_EQ(y, (std::vector<std::size_t>{0, 1, 1}));
  EXPECT_DOUBLE_EQ(x(0, 0), -1.0);
}

TEST(SynthFeatures, ZeroNoiseGivesTheMean) {
  std::array<std::vector<std::size_t>, 2> labels{{{0, 1, 2}, {0, 0, 1}}};
  auto s = synth_features({"a", "b", "c"}, labels, 16, 4, 0.0, 1);
  for (const auto& id : s.classes())
    for (const auto& v : s.samples(id)) EXPECT_EQ(v, s.mean(id));
}

TEST(SynthFeatures, SharedFactorSharesBlockMean) {
  std::array<std::vector<std::size_t>, 2> labels{{{0, 0, 1}, {0, 1, 1}}};
  auto s = synth_features({"a", "b", "c"}, labels, 20, 1, 0.0, 1);
  const Vec a = s.mean("a"), b = s.mean("b"), c = s.mean("c");
  EXPECT_EQ(a.head(10), b.head(10));
  EXPECT_EQ(b.tail(10), c.tail(10));
  EXPECT_NE(a.tail(10), b.tail(10));
}

TEST(SynthFeatures, SameSeedSameStore) {
  std::array<std::vector<std::size_t>, 2> labels{{{0, 1}, {1, 0}}};
  EXPECT_EQ(synth_features({"a", "b"}, labels, 8, 5, 0.3, 11), synth_features({"a", "b"}, labels, 8, 5, 0.3, 11));
  EXPECT_NE(synth_features({"a", "b"}, labels, 8, 5, 0.3, 11), synth_features({"a", "b"}, labels, 8, 5, 0.3, 12));
}

TEST(SynthFeatures, RejectsNoSamples) {
  std::array<std::vector<std::size_t>, 2> labels{{{0}, {0}}};
  EXPECT_THROW(synth_features({"a"}, labels, 8, 0, 0.1, 0), ValidationError);
}

// Every pair differing in both factors is farther apart than every pair
// differing in exactly one.
TEST(SynthFeatures, TwoFactorPairsAreFartherThanOneFactorPairs) {
  auto synth = synth_ontology({12, 3, 4, 0});
  const auto& ids = synth.classes;
  auto s = synth_features(ids, synth.labels, 64, 1, 0.0, 0);
  double max_one = 0, min_two = 1e300;
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      const int differ = (synth.labels[0][i] != synth.labels[0][j]) + (synth.labels[1][i] != synth.labels[1][j]);
      const double d = (s.mean(ids[i]) - s.mean(ids[j])).norm();
      if (differ == 1) max_one = std::max(max_one, d);
      if (differ == 2) min_two = std::min(min_two, d);
    }
  EXPECT_GT(max_one, 0.0);
  EXPECT_GT(min_two, max_one);
}

TEST(KgcFeatures, SingleTripleOffset) {
  EntityEmbeddings e({"h", "t"}, (Mat(2, 3) << 1, 2, 3, 4, 4, 4).finished());
  auto s = kgc_relation_features({{"h", "r", "t"}}, e, {"r"});
  ASSERT_EQ(s.samples("r").size(), 1u);
  EXPECT_EQ(s.samples("r")[0], (Vec(3) << 3, 2, 1).finished());
  EXPECT_EQ(s.mean("r"), (Vec(3) << 3, 2, 1).finished());
}

TEST(KgcFeatures, OppositeOffsetsAverageToZero) {
  EntityEmbeddings e({"a", "b"}, (Mat(2, 2) << 0, 1, 2, -1).finished());
  auto s = kgc_relation_features({{"a", "r", "b"}, {"b", "r", "a"}}, e, {"r"});
  EXPECT_TRUE(s.mean("r").isZero(0));
}

TEST(KgcFeatures, RelationWithoutTriplesIsAnError) {
  EntityEmbeddings e({"a", "b"}, Mat::Zero(2, 2));
  EXPECT_THROW(kgc_relation_features({{"a", "r", "b"}}, e, {"r", "q"}), ValidationError);
}

TEST(KgcFeatures, UncoveredEntityIsAnError) {
  EntityEmbeddings e({"a"}, Mat::Zero(1, 2));
  EXPECT_THROW(kgc_relation_features({{"a", "r", "b"}}, e, {"r"}), ValidationError);
}

TEST(KgcFeatures, TranslationalEmbeddingsGiveRelationOffsets) {
  std::vector<KgTriple> kg;
  for (int i = 0; i < 6; ++i) {
    kg.push_back({"e" + std::to_string(i), "next", "e" + std::to_string(i + 1)});
    kg.push_back({"e" + std::to_string(i + 1), "prev", "e" + std::to_string(i)});
  }
  EncoderConfig cfg;
  cfg.epochs = 300;
  cfg.batch_size = 4;
  auto model = transe_baseline(kg_as_ontology(kg), 8, cfg);
  auto s = kgc_relation_features(kg, EntityEmbeddings(model), {"next", "prev"});
  EXPECT_EQ(s.feature_dim, 8u);
  // Inverse relations should point in opposite directions.
  EXPECT_LT(cosine(s.mean("next"), s.mean("prev")), 0.0);
}
