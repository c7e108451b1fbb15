#include "disento/ontology.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace disento;
using disento::testing::TempDir;

namespace {

Ontology toy(const std::string& text) { return parse_triples_text(text, "toy"); }

}  // namespace

TEST(ParseTriples, CountsDistinctConceptsAndTriples) {
  auto o = toy("a\tp\tb\nb\tq\tc\na\tq\tc\n");
  EXPECT_EQ(o.triples.size(), 3u);
  EXPECT_EQ(o.num_concepts(), 3u);
  EXPECT_EQ(o.num_properties(), 2u);
  EXPECT_EQ(o.concepts[0].id, "a");
  EXPECT_EQ(o.concepts[1].id, "b");
  EXPECT_EQ(o.concepts[2].id, "c");
  // No header: every property is an aspect, first-appearance order.
  EXPECT_EQ(o.aspect_properties, (std::vector<std::string>{"p", "q"}));
}

TEST(ParseTriples, DuplicateLinesCollapse) {
  auto o = toy("a\tp\tb\na\tp\tb\nb\tp\tc\n");
  EXPECT_EQ(o.triples.size(), 2u);
}

TEST(ParseTriples, MalformedLineReportsLineNumber) {
  try {
    toy("@aspect p\na\tp\tb\na\tp\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(toy("a\tp\tb\tc\n"), ParseError);
}

TEST(ParseTriples, UnknownAspectIsValidationError) {
  EXPECT_THROW(toy("@aspect missing\na\tp\tb\n"), ValidationError);
}

TEST(ParseTriples, ReservedPropertyIdsRejected) {
  EXPECT_THROW(toy("a\tp#inv\tb\n"), ParseError);
  EXPECT_THROW(toy("a\t#self\tb\n"), ParseError);
}

TEST(ParseTriples, HeaderSelectsAspects) {
  auto o = toy("@aspect q\na\tp\tb\nb\tq\tc\n");
  EXPECT_EQ(o.aspect_properties, std::vector<std::string>{"q"});
}

TEST(ParseTriples, SerializeParseIsIdentity) {
  auto synth = synth_ontology({12, 3, 4, 7});
  auto back = parse_triples_text(serialize_triples(synth.ontology));
  ASSERT_EQ(back.num_concepts(), synth.ontology.num_concepts());
  ASSERT_EQ(back.num_properties(), synth.ontology.num_properties());
  ASSERT_EQ(back.triples.size(), synth.ontology.triples.size());
  EXPECT_EQ(back.aspect_properties, synth.ontology.aspect_properties);
  for (const auto& t : synth.ontology.triples) {
    const auto& o = synth.ontology;
    EXPECT_TRUE(back.contains(back.concept_index(o.concepts[t.head].id), back.property_index(o.properties[t.property].id),
                              back.concept_index(o.concepts[t.tail].id)));
  }
}

TEST(ParseTriples, ReadsFromFile) {
  TempDir dir;
  auto path = dir.write("onto.tsv", "@aspect p\nx\tp\ty\n");
  auto o = parse_triples(path);
  EXPECT_EQ(o.triples.size(), 1u);
  EXPECT_THROW(parse_triples((dir.path() / "nope.tsv").string()), Error);
}

TEST(Augment, ComponentCountsFollowPropertyCount) {
  auto imgc = augment_ontology(toy("a\tsubClassOf\tb\na\thasAttribute\tc\n"));
  EXPECT_EQ(imgc.k_agg, 5u);
  EXPECT_EQ(imgc.k_score, 2u);

  auto kgc = augment_ontology(toy("r1\tdomain\tA\nr1\trange\tB\nr1\tsubPropertyOf\tr2\nA\tsubClassOf\tB\n"));
  EXPECT_EQ(kgc.k_agg, 9u);
  EXPECT_EQ(kgc.k_score, 4u);
}

TEST(Augment, InverseTriplesDoubleCountAndSelfAdded) {
  auto o = toy("a\tp\tb\nb\tq\tc\nc\tp\ta\n");
  auto aug = augment_ontology(o);
  const auto& ao = aug.ontology;
  EXPECT_EQ(ao.triples.size(), 2 * o.triples.size());
  EXPECT_EQ(ao.original_triples().size(), o.triples.size());
  for (const auto& t : o.triples) {
    const auto inv = ao.property_index(o.properties[t.property].id + "#inv");
    EXPECT_TRUE(ao.contains(t.tail, inv, t.head));
    EXPECT_EQ(ao.properties[inv].inverse_of, t.property);
  }
  std::size_t selfs = 0;
  for (const auto& p : ao.properties) selfs += p.kind == PropertyKind::self;
  EXPECT_EQ(selfs, 1u);
  EXPECT_EQ(ao.properties[aug.self_property].id, "#self");
  EXPECT_THROW(augment_ontology(ao), ValidationError);
}

TEST(Augment, EmptyPropertySetRejected) {
  Ontology o;
  o.add_concept("lonely");
  EXPECT_THROW(augment_ontology(o), ValidationError);
}

TEST(Neighborhood, IsolatedConceptHasOnlySelf) {
  Ontology o = toy("a\tp\tb\n");
  o.add_concept("iso");
  auto aug = augment_ontology(o);
  NeighborhoodIndex idx(aug);
  const auto& n = neighborhood(idx, 2);
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n[0].node, 2u);
  EXPECT_EQ(n[0].property, aug.self_property);
}

TEST(Neighborhood, OutgoingTripleAndItsInverse) {
  auto aug = augment_ontology(toy("c\tp\tj\n"));
  NeighborhoodIndex idx(aug);
  const auto c = aug.ontology.concept_index("c");
  const auto j = aug.ontology.concept_index("j");
  const auto p = aug.ontology.property_index("p");
  const auto pinv = aug.ontology.property_index("p#inv");
  EXPECT_EQ(neighborhood(idx, c), (std::vector<Neighbor>{{c, aug.self_property}, {j, p}}));
  EXPECT_EQ(neighborhood(idx, j), (std::vector<Neighbor>{{c, pinv}, {j, aug.self_property}}));
}

TEST(Neighborhood, StarCenterEnumeration) {
  auto aug = augment_ontology(toy("hub\tp\ts1\nhub\tp\ts2\ns3\tq\thub\nhub\tq\ts4\n"));
  NeighborhoodIndex idx(aug);
  const auto& ao = aug.ontology;
  const auto hub = ao.concept_index("hub");
  // Hand enumeration: (s1,p) (s2,p) (s3,q#inv) (s4,q) plus (hub,#self).
  std::vector<Neighbor> expected{{ao.concept_index("s1"), ao.property_index("p")},
                                 {ao.concept_index("s2"), ao.property_index("p")},
                                 {ao.concept_index("s3"), ao.property_index("q#inv")},
                                 {ao.concept_index("s4"), ao.property_index("q")},
                                 {hub, aug.self_property}};
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(neighborhood(idx, hub), expected);
  EXPECT_THROW(neighborhood(idx, 99), ValidationError);
}

TEST(Neighborhood, SizeIsDegreePlusOne) {
  auto synth = synth_ontology({12, 3, 4, 3});
  auto aug = augment_ontology(synth.ontology);
  NeighborhoodIndex idx(aug);
  const auto& o = synth.ontology;
  for (std::size_t c = 0; c < o.num_concepts(); ++c) {
    std::size_t deg = 0;
    for (const auto& t : o.triples) deg += (t.head == c) + (t.tail == c);
    EXPECT_EQ(neighborhood(idx, c).size(), deg + 1);
    EXPECT_TRUE(std::is_sorted(idx.of(c).begin(), idx.of(c).end()));
  }
}

TEST(SynthOntology, ConstructionContract) {
  auto s = synth_ontology({12, 3, 4, 0});
  const auto& o = s.ontology;
  const auto pa = o.property_index(kSynthPropertyA);
  const auto pb = o.property_index(kSynthPropertyB);
  std::size_t na = 0, nb = 0;
  for (const auto& t : o.triples) {
    na += t.property == pa;
    nb += t.property == pb;
  }
  EXPECT_EQ(na, 12u);
  EXPECT_GE(nb, 12u);
  std::set<std::size_t> ga(s.labels[0].begin(), s.labels[0].end()), gb(s.labels[1].begin(), s.labels[1].end());
  EXPECT_EQ(ga.size(), 3u);
  EXPECT_EQ(gb.size(), 4u);
}

TEST(SynthOntology, LabelsRecoverableFromTriples) {
  auto s = synth_ontology({12, 3, 4, 5});
  const auto& o = s.ontology;
  // Group classes by the tail they reach through each aspect property.
  for (std::size_t a = 0; a < 2; ++a) {
    const auto p = o.property_index(o.aspect_properties[a]);
    std::map<std::size_t, std::size_t> tail_of;
    for (const auto& t : o.triples)
      if (t.property == p) tail_of[t.head] = t.tail;
    for (std::size_t i = 0; i < s.classes.size(); ++i)
      for (std::size_t j = 0; j < s.classes.size(); ++j)
        EXPECT_EQ(tail_of.at(i) == tail_of.at(j), s.labels[a][i] == s.labels[a][j]);
  }
}

TEST(SynthOntology, DeterministicPerSeed) {
  auto a = synth_ontology({12, 3, 4, 42});
  auto b = synth_ontology({12, 3, 4, 42});
  EXPECT_EQ(a.ontology.triples, b.ontology.triples);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_THROW(synth_ontology({2, 3, 1, 0}), ValidationError);
}

TEST(LoadSplit, SeenUnseenTotals) {
  TempDir dir;
  std::string onto, split = "@task imgc\n@seen\n";
  for (int i = 0; i < 50; ++i) onto += "cls" + std::to_string(i) + "\tsubClassOf\troot\n";
  for (int i = 0; i < 40; ++i) split += "cls" + std::to_string(i) + "\n";
  split += "@unseen\n";
  for (int i = 40; i < 50; ++i) split += "cls" + std::to_string(i) + "\n";
  auto o = parse_triples_text(onto);
  auto s = load_split(dir.write("split.txt", split), o);
  EXPECT_EQ(s.seen_classes.size(), 40u);
  EXPECT_EQ(s.unseen_classes.size(), 10u);
  EXPECT_EQ(s.all_classes().size(), 50u);
}

TEST(LoadSplit, OverlapAndUnknownIdsRejected) {
  TempDir dir;
  auto o = toy("a\tp\tb\nc\tp\tb\n");
  EXPECT_THROW(load_split(dir.write("s1.txt", "@task imgc\n@seen\na\n@unseen\na\n"), o), ValidationError);
  EXPECT_THROW(load_split(dir.write("s2.txt", "@task imgc\n@seen\na\n@unseen\nzzz\n"), o), ValidationError);
  EXPECT_THROW(load_split(dir.write("s3.txt", "@seen\na\n"), o), ParseError);
}

TEST(LoadSplit, KgcClosedEntitySet) {
  TempDir dir;
  auto o = toy("r1\tdomain\tT\nr2\tdomain\tT\n");
  dir.write("train.tsv", "e1\tr1\te2\ne2\tr1\te3\n");
  dir.write("test_ok.tsv", "e1\tr2\te3\n");
  dir.write("test_bad.tsv", "e1\tr2\te9\n");
  auto ok = load_split(dir.write("ok.txt", "@task kgc\n@seen\nr1\n@unseen\nr2\n@kgc_train train.tsv\n@kgc_test test_ok.tsv\n"), o);
  EXPECT_EQ(ok.kgc_train.size(), 2u);
  EXPECT_EQ(ok.kgc_test.size(), 1u);
  EXPECT_EQ(ok.entities(), (std::vector<std::string>{"e1", "e2", "e3"}));
  EXPECT_THROW(
      load_split(dir.write("bad.txt", "@task kgc\n@seen\nr1\n@unseen\nr2\n@kgc_train train.tsv\n@kgc_test test_bad.tsv\n"), o),
      ValidationError);
  // Test relation must be unseen.
  dir.write("test_seen.tsv", "e1\tr1\te3\n");
  EXPECT_THROW(
      load_split(dir.write("bad2.txt", "@task kgc\n@seen\nr1\n@unseen\nr2\n@kgc_train train.tsv\n@kgc_test test_seen.tsv\n"), o),
      ValidationError);
}

TEST(SynthOntology, DistinctPairsCoverEveryGroup) {
  SynthOntologySpec spec{10, 2, 5, 0, true};
  auto s = synth_ontology(spec);
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  std::set<std::size_t> a, b;
  for (std::size_t i = 0; i < 10; ++i) {
    pairs.emplace(s.labels[0][i], s.labels[1][i]);
    a.insert(s.labels[0][i]);
    b.insert(s.labels[1][i]);
  }
  EXPECT_EQ(pairs.size(), 10u);
  EXPECT_EQ(a.size(), 2u);
  EXPECT_EQ(b.size(), 5u);
  EXPECT_THROW(synth_ontology({11, 2, 5, 0, true}), ValidationError);
}
