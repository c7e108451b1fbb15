#include "disento/encoder.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace disento;
using disento::testing::TempDir;

namespace {

Ontology toy(const std::string& text) { return parse_triples_text(text, "toy"); }

EncoderConfig rd_config(std::size_t d) {
  EncoderConfig c;
  c.variant = EncoderVariant::rd;
  c.layers = 0;
  c.d = d;
  return c;
}

EncoderConfig agg_config(std::size_t d, std::size_t layers = 1, EncoderVariant v = EncoderVariant::agg) {
  EncoderConfig c;
  c.variant = v;
  c.layers = layers;
  c.d = d;
  return c;
}

// Independent re-evaluation of one aggregation layer written with plain loops
// over raw numbers; shares nothing with the library except parameter reads.
std::vector<std::vector<double>> oracle_layer(const Encoder& enc, const std::vector<std::vector<double>>& h,
                                              const std::vector<std::vector<double>>& hp) {
  const auto& sh = enc.shape();
  const auto& o = enc.ontology();
  const std::size_t D = sh.dim, K = sh.components;
  std::vector<std::vector<double>> out(sh.n_concepts, std::vector<double>(K * D, 0.0));
  for (std::size_t i = 0; i < sh.n_concepts; ++i) {
    // neighborhood: every augmented triple out of i, plus self
    std::vector<std::pair<std::size_t, std::size_t>> nbrs;
    for (const auto& t : o.triples)
      if (t.head == i) nbrs.emplace_back(t.tail, t.property);
    nbrs.emplace_back(i, enc.aug.self_property);
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> logit;
      for (auto [j, p] : nbrs) {
        if (enc.config.variant == EncoderVariant::agg_sub && p != k && p != enc.aug.self_property) {
          logit.push_back(-INFINITY);
          continue;
        }
        double s = 0;
        for (std::size_t d = 0; d < D; ++d) {
          const double w = enc.params.proj(p)[d];
          s += (h[i][k * D + d] * w) * (h[j][k * D + d] * w);
        }
        logit.push_back(s);
      }
      double mx = -INFINITY, z = 0;
      for (double l : logit) mx = std::max(mx, l);
      for (double l : logit) z += std::exp(l - mx);
      for (std::size_t d = 0; d < D; ++d) {
        double acc = 0;
        for (std::size_t n = 0; n < nbrs.size(); ++n) {
          auto [j, p] = nbrs[n];
          const double a = std::exp(logit[n] - mx) / z;
          acc += a * h[j][k * D + d] * hp[p][d] * enc.params.proj(p)[d];
        }
        out[i][k * D + d] = std::tanh(acc);
      }
    }
  }
  return out;
}

std::vector<std::vector<double>> to_rows(const Mat& m) {
  std::vector<std::vector<double>> r(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

// Max relative error between the analytic gradient and central differences.
double gradient_check(Encoder& enc, const std::vector<ScoringQuery>& batch, double step = 1e-5) {
  auto grad = enc.params.zeros_like();
  training_loss(enc, batch, &grad);
  double worst = 0;
  for (Eigen::Index i = 0; i < enc.params.flat.size(); ++i) {
    const double orig = enc.params.flat[i];
    enc.params.flat[i] = orig + step;
    const double up = training_loss(enc, batch);
    enc.params.flat[i] = orig - step;
    const double down = training_loss(enc, batch);
    enc.params.flat[i] = orig;
    const double fd = (up - down) / (2 * step);
    const double a = grad.flat[i];
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
    worst = std::max(worst, std::abs(a - fd) / denom);
  }
  return worst;
}

const char* kFiveConcepts = "@aspect p\n@aspect q\na\tp\tb\nb\tp\tc\na\tq\td\nc\tq\te\nd\tp\te\n";

}  // namespace

TEST(EncoderConfig, Validation) {
  auto o = toy("a\tp\tb\nb\tq\tc\n");
  EXPECT_THROW(Encoder(o, rd_config(5)), ValidationError);  // 5 % 2 != 0
  auto bad = rd_config(4);
  bad.layers = 1;
  EXPECT_THROW(Encoder(o, bad), ValidationError);
  auto bad2 = agg_config(4);
  bad2.layers = 0;
  EXPECT_THROW(Encoder(o, bad2), ValidationError);
  EXPECT_NO_THROW(Encoder(o, agg_config(4)));
}

TEST(Encoder, ShapesPerVariant) {
  auto o = toy("a\tp\tb\nb\tq\tc\n");
  Encoder rd(o, rd_config(8));
  EXPECT_EQ(rd.shape().components, 2u);
  EXPECT_EQ(rd.shape().dim, 4u);
  Encoder agg(o, agg_config(8));
  EXPECT_EQ(agg.shape().components, 5u);  // p, q, p#inv, q#inv, #self
  EXPECT_EQ(agg.shape().aspect_component, (std::vector<std::size_t>{0, 1}));
}

TEST(Attention, IsolatedConceptSingleWeight) {
  Ontology o = toy("a\tp\tb\n");
  o.add_concept("iso");
  Encoder enc(o, agg_config(2));
  enc.initialize(1);
  auto w = attention_weights(enc, initial_state(enc), 2, 0);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_DOUBLE_EQ(w[0], 1.0);
}

TEST(Attention, IdenticalProjectedEmbeddingsSplitEvenly) {
  Encoder enc(toy("a\tp\tb\n"), agg_config(2));
  enc.initialize(3);
  const auto a = enc.ontology().concept_index("a");
  const auto b = enc.ontology().concept_index("b");
  const auto p = enc.ontology().property_index("p");
  enc.params.h0(b, 0) = enc.params.h0(a, 0);
  enc.params.proj(p) = enc.params.proj(enc.aug.self_property);
  auto w = attention_weights(enc, initial_state(enc), a, 0);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_NEAR(w[0], 0.5, 1e-12);
  EXPECT_NEAR(w[1], 0.5, 1e-12);
}

TEST(Attention, HandComputedSoftmax) {
  Encoder enc(toy("a\tp\tb\n"), agg_config(2));
  const auto a = enc.ontology().concept_index("a");
  const auto b = enc.ontology().concept_index("b");
  const auto p = enc.ontology().property_index("p");
  const auto s = enc.aug.self_property;
  enc.params.h0(a, 0) = Eigen::Vector2d(1, 0);
  enc.params.h0(b, 0) = Eigen::Vector2d(0, 1);
  enc.params.proj(p) = Eigen::Vector2d(1, 1);
  enc.params.proj(s) = Eigen::Vector2d(1, 1);
  // N(a) sorted = [(a, self), (b, p)]; logits {1, 0}.
  auto w = attention_weights(enc, initial_state(enc), a, 0);
  EXPECT_NEAR(w[0], 0.7311, 1e-4);
  EXPECT_NEAR(w[1], 0.2689, 1e-4);
}

TEST(Attention, WeightsSumToOneEverywhere) {
  auto s = synth_ontology({12, 3, 4, 0});
  for (auto v : {EncoderVariant::agg, EncoderVariant::agg_sub}) {
    Encoder enc(s.ontology, agg_config(16, 2, v));
    enc.initialize(0);
    auto state = initial_state(enc);
    for (std::size_t l = 0; l < 2; ++l) {
      for (std::size_t i = 0; i < enc.shape().n_concepts; ++i)
        for (std::size_t k = 0; k < enc.shape().components; ++k) {
          auto w = attention_weights(enc, state, i, k);
          double sum = 0;
          for (double x : w) sum += x;
          EXPECT_NEAR(sum, 1.0, 1e-6);
        }
      state = aggregate_layer(enc, state, l);
    }
  }
}

TEST(Attention, NonFiniteLogitIsDivergence) {
  Encoder enc(toy("a\tp\tb\n"), agg_config(2));
  enc.initialize(0);
  enc.params.h0(0, 0)[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(attention_weights(enc, initial_state(enc), 0, 0), DivergenceError);
}

TEST(Aggregate, ZeroTableStaysZero) {
  Encoder enc(toy(kFiveConcepts), agg_config(4));
  enc.initialize(0);
  enc.params.table0_map().setZero();
  auto next = aggregate_layer(enc, initial_state(enc), 0);
  EXPECT_TRUE(next.table.isZero(0.0));
}

TEST(Aggregate, SingletonSelfNeighborIsTanhOfMessage) {
  Ontology o = toy("a\tp\tb\n");
  const auto iso = o.add_concept("iso");
  Encoder enc(o, agg_config(2));
  enc.initialize(5);
  auto st = initial_state(enc);
  auto next = aggregate_layer(enc, st, 0);
  const auto s = enc.aug.self_property;
  for (std::size_t k = 0; k < enc.shape().components; ++k) {
    Vec v = enc.params.h0(iso, k).cwiseProduct(enc.params.prop0(s)).cwiseProduct(enc.params.proj(s));
    const auto D = static_cast<Eigen::Index>(enc.shape().dim);
    Vec got = next.table.row(iso).segment(k * D, D).transpose();
    for (Eigen::Index d = 0; d < D; ++d) EXPECT_NEAR(got[d], std::tanh(v[d]), 1e-15);
  }
}

TEST(Aggregate, ChainMatchesBruteForceOracle) {
  for (auto v : {EncoderVariant::agg, EncoderVariant::agg_sub}) {
    Encoder enc(toy("@aspect p\nx\tp\ty\ny\tq\tz\n"), agg_config(2, 2, v));
    enc.initialize(11);
    auto fc = forward(enc);
    auto h = to_rows(fc.states[0].table);
    auto hp = to_rows(fc.states[0].props);
    for (std::size_t l = 0; l < 2; ++l) {
      auto expect = oracle_layer(enc, h, hp);
      auto got = to_rows(fc.states[l + 1].table);
      for (std::size_t i = 0; i < expect.size(); ++i)
        for (std::size_t j = 0; j < expect[i].size(); ++j) EXPECT_NEAR(got[i][j], expect[i][j], 1e-12);
      // property embeddings: hp(l+1) = hp(l) * theta(l)
      std::vector<std::vector<double>> hp_next(hp.size(), std::vector<double>(hp[0].size(), 0.0));
      for (std::size_t p = 0; p < hp.size(); ++p)
        for (std::size_t b = 0; b < hp[p].size(); ++b)
          for (std::size_t a = 0; a < hp[p].size(); ++a) hp_next[p][b] += hp[p][a] * enc.params.theta(l, p)(a, b);
      h = got;
      hp = hp_next;
    }
  }
}

TEST(Encode, RandomInitVariantIsIdentity) {
  Encoder enc(toy(kFiveConcepts), rd_config(6));
  enc.initialize(2);
  auto table = encode(enc);
  EXPECT_EQ(table.data, enc.params.table0());
  EXPECT_EQ(table.num_components(), 2u);
  EXPECT_EQ(table.dim, 3u);
}

TEST(Encode, OneLayerOnZeroTableIsZero) {
  Encoder enc(toy(kFiveConcepts), agg_config(4));
  enc.initialize(2);
  enc.params.table0_map().setZero();
  EXPECT_TRUE(encode(enc).data.isZero(0.0));
}

TEST(Encode, AggregationSelectsAspectComponents) {
  Encoder enc(toy("@aspect q\na\tp\tb\nb\tq\tc\n"), agg_config(3));
  enc.initialize(4);
  auto fc = forward(enc);
  auto table = encode(enc);
  ASSERT_EQ(table.num_components(), 1u);
  const auto q = enc.ontology().property_index("q");
  for (std::size_t i = 0; i < table.size(); ++i)
    EXPECT_EQ(Vec(table.component(i, 0)), Vec(fc.states[1].table.row(i).segment(q * 3, 3).transpose()));
}

TEST(TripleScore, ZeroDistanceIsHalf) {
  ComponentEmbeddingTable t{{"i", "j"}, {"p"}, 2, Mat(2, 2)};
  t.data << 1, 2, 1.5, 1.5;
  Mat rel(1, 2);
  rel << 0.5, -0.5;
  EXPECT_DOUBLE_EQ(triple_score(t, rel, 0, 0, 1), 0.5);
}

TEST(TripleScore, HandEvaluation) {
  ComponentEmbeddingTable t{{"i", "j"}, {"p"}, 2, Mat(2, 2)};
  t.data << 1, 0, 0, 0;
  Mat rel = Mat::Zero(1, 2);
  EXPECT_NEAR(triple_score(t, rel, "i", "p", "j"), 0.2689, 1e-4);
  EXPECT_THROW(triple_score(t, rel, "i", "other", "j"), ValidationError);
}

TEST(TripleScore, StrictlyInUnitIntervalAndMonotone) {
  ComponentEmbeddingTable t{{"i", "j"}, {"p"}, 1, Mat(2, 1)};
  Mat rel = Mat::Zero(1, 1);
  t.data << 0, 0;
  double prev = 1.0;
  for (double dist : {0.0, 0.1, 1.0, 5.0, 20.0, 35.0}) {
    t.data(1, 0) = dist;
    const double q = triple_score(t, rel, 0, 0, 1);
    EXPECT_GT(q, 0.0);
    EXPECT_LT(q, 1.0);
    EXPECT_LT(q, prev + (dist == 0.0 ? 1e-12 : 0.0));
    prev = q;
  }
}

TEST(TripleScore, ComponentLocality) {
  Rng rng(9);
  ComponentEmbeddingTable t{{"a", "b", "c"}, {"p", "q", "r"}, 4, normal_mat(rng, 3, 12, 1.0)};
  Mat rel = normal_mat(rng, 3, 4, 1.0);
  const double before = triple_score(t, rel, 0, 1, 2);
  for (int trial = 0; trial < 20; ++trial) {
    t.component(0, 0) = normal_vec(rng, 4, 3.0);
    t.component(2, 2) = normal_vec(rng, 4, 3.0);
    EXPECT_EQ(triple_score(t, rel, 0, 1, 2), before);
  }
}

TEST(AttentiveScore, SingleComponentReducesToPropertyGuided) {
  Rng rng(1);
  ComponentEmbeddingTable t{{"a", "b"}, {"p"}, 3, normal_mat(rng, 2, 3, 1.0)};
  Mat rel = normal_mat(rng, 1, 3, 1.0);
  EXPECT_NEAR(attentive_triple_score(t, rel, 0, 0, 1), triple_score(t, rel, 0, 0, 1), 1e-15);
}

TEST(AttentiveScore, IdenticalComponentsEqualPropertyGuided) {
  Rng rng(2);
  ComponentEmbeddingTable t{{"a", "b"}, {"p", "q"}, 3, Mat(2, 6)};
  Vec a = normal_vec(rng, 3, 1.0), b = normal_vec(rng, 3, 1.0);
  t.data.row(0) << a.transpose(), a.transpose();
  t.data.row(1) << b.transpose(), b.transpose();
  Mat rel = normal_mat(rng, 2, 3, 1.0);
  EXPECT_NEAR(attentive_triple_score(t, rel, 0, 1, 1), triple_score(t, rel, 0, 1, 1), 1e-12);
}

TEST(AttentiveScore, TwoComponentHandEvaluation) {
  ComponentEmbeddingTable t{{"a", "b"}, {"p", "q"}, 2, Mat(2, 4)};
  t.data << 1, 0, 0, 1,   //
      0, 0, 2, 0;
  Mat rel(2, 2);
  rel << 1, 0, 0, 0;
  // head: logits (1, 0) -> beta (e/(1+e), 1/(1+e)); mix = (b0, b1)
  const double b0 = std::exp(1.0) / (1 + std::exp(1.0)), b1 = 1 - b0;
  // tail: logits (0, 2) -> beta (1/(1+e^2), e^2/(1+e^2)); mix = (2*t1, 0)
  const double t1 = std::exp(2.0) / (1 + std::exp(2.0));
  const double dx = b0 + 1 - 2 * t1, dy = b1;
  EXPECT_NEAR(attentive_triple_score(t, rel, 0, 0, 1), 1 / (1 + std::exp(std::sqrt(dx * dx + dy * dy))), 1e-12);
}

TEST(TrainingLoss, HandArithmeticLog2) {
  // |C| = 2, one query whose candidate scores are both 0.5.
  Mat table(2, 1);
  table << 0, 0;
  Mat rel = Mat::Zero(1, 1);
  std::vector<ScoringQuery> q{{0, 0, 0, {0}}};
  const double loss = scoring_loss(table, 1, 1, rel, q, ScoringMode::property_guided, 0.0);
  EXPECT_NEAR(loss, std::log(2.0), 1e-12);
}

TEST(TrainingLoss, PerfectFitNearZero) {
  // Translational scores never reach 1, so exercise the clamped per-candidate
  // term directly: q equal to the binary labels, eps = 0.
  const std::vector<double> labels{1, 0, 0, 1, 0};
  double loss = 0;
  for (double t : labels) loss += smoothed_bce(t, t);
  loss /= static_cast<double>(labels.size());
  EXPECT_LE(loss, labels.size() * kProbClamp);
  EXPECT_GT(loss, 0.0);
}

TEST(TrainingLoss, InvariantToCandidateOrdering) {
  Rng rng(4);
  Mat table = normal_mat(rng, 5, 4, 1.0);
  Mat rel = normal_mat(rng, 2, 2, 1.0);
  std::vector<ScoringQuery> q{{0, 0, 0, {1, 3}}, {2, 1, 1, {4}}};
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};  // new index of old row
  Mat permuted(5, 4);
  for (std::size_t i = 0; i < 5; ++i) permuted.row(perm[i]) = table.row(i);
  std::vector<ScoringQuery> pq;
  for (auto x : q) {
    x.head = perm[x.head];
    for (auto& t : x.tails) t = perm[t];
    pq.push_back(x);
  }
  for (auto mode : {ScoringMode::property_guided, ScoringMode::attentive}) {
    EXPECT_NEAR(scoring_loss(table, 2, 2, rel, q, mode, 0.1), scoring_loss(permuted, 2, 2, rel, pq, mode, 0.1), 1e-14);
  }
}

class GradientCheck : public ::testing::TestWithParam<std::pair<EncoderVariant, std::size_t>> {};

TEST_P(GradientCheck, AnalyticMatchesCentralDifferences) {
  auto [variant, layers] = GetParam();
  EncoderConfig cfg = uses_aggregation(variant) ? agg_config(6, layers, variant) : rd_config(6);
  cfg.variant = variant;
  Encoder enc(toy(kFiveConcepts), cfg);
  enc.initialize(17);
  // Perturb away from the near-identity initialization.
  Rng rng(5);
  enc.params.flat += normal_vec(rng, enc.params.flat.size(), 0.3);
  auto queries = enc.training_queries();
  EXPECT_LT(gradient_check(enc, queries), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Variants, GradientCheck,
                         ::testing::Values(std::pair{EncoderVariant::rd, std::size_t{0}},
                                           std::pair{EncoderVariant::rd_atten, std::size_t{0}},
                                           std::pair{EncoderVariant::agg, std::size_t{1}},
                                           std::pair{EncoderVariant::agg, std::size_t{2}},
                                           std::pair{EncoderVariant::agg_sub, std::size_t{2}},
                                           std::pair{EncoderVariant::agg_atten, std::size_t{1}}));

TEST(TrainEncoder, LossDecreasesAndMovingAverageTrendsDown) {
  auto s = synth_ontology({12, 3, 4, 0});
  for (auto variant : {EncoderVariant::rd, EncoderVariant::agg}) {
    auto cfg = variant == EncoderVariant::rd ? rd_config(16) : agg_config(16);
    cfg.epochs = 200;
    cfg.batch_size = 8;
    auto res = train_encoder(s.ontology, cfg);
    ASSERT_EQ(res.loss_history.size(), 200u);
    EXPECT_LT(res.loss_history.back(), res.loss_history.front());
    // Non-overlapping window-10 means never increase.
    std::vector<double> means;
    for (std::size_t w = 0; w + 10 <= res.loss_history.size(); w += 10) {
      double m = 0;
      for (std::size_t i = w; i < w + 10; ++i) m += res.loss_history[i];
      means.push_back(m / 10);
    }
    for (std::size_t i = 1; i < means.size(); ++i) EXPECT_LE(means[i], means[i - 1] + 1e-12) << "window " << i;
  }
}

TEST(TrainEncoder, DeterministicPerSeed) {
  auto s = synth_ontology({12, 3, 4, 0});
  auto cfg = agg_config(8);
  cfg.epochs = 15;
  auto a = train_encoder(s.ontology, cfg);
  auto b = train_encoder(s.ontology, cfg);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.encoder.params.flat, b.encoder.params.flat);
  cfg.seed = 1;
  auto c = train_encoder(s.ontology, cfg);
  EXPECT_NE(a.loss_history, c.loss_history);
}

TEST(TrainEncoder, PlainSgdIsAvailable) {
  auto s = synth_ontology({12, 3, 4, 0});
  auto cfg = rd_config(8);
  cfg.optimizer = OptimizerKind::sgd;
  cfg.learning_rate = 0.5;
  cfg.epochs = 50;
  auto res = train_encoder(s.ontology, cfg);
  EXPECT_LT(res.loss_history.back(), res.loss_history.front());
}

TEST(TransE, MatchesSingleAspectRandomInitEncoder) {
  auto o = toy("@aspect p\na\tp\tb\nb\tp\tc\nc\tp\ta\nd\tp\ta\n");
  Encoder enc(o, rd_config(5));
  enc.initialize(3);
  EncoderConfig cfg = rd_config(5);
  cfg.epochs = 0;
  auto transe = transe_baseline(o, 5, cfg);
  // Give both models identical parameters.
  transe.entities = enc.params.table0();
  transe.relations = enc.params.relations();
  auto table = encode(enc);
  const Mat rels = enc.params.relations();
  for (std::size_t h = 0; h < 4; ++h)
    for (std::size_t t = 0; t < 4; ++t) EXPECT_NEAR(triple_score(table, rels, h, 0, t), transe.score(h, 0, t), 1e-9);
  // And identical losses over the same queries.
  auto q = enc.training_queries();
  EXPECT_NEAR(training_loss(enc, q), transe_loss(transe, transe_queries(o), 0.1), 1e-12);
}

TEST(TransE, TrainedTriplesBeatCorruptions) {
  auto s = synth_ontology({12, 3, 4, 1});
  EncoderConfig cfg = rd_config(16);
  cfg.epochs = 300;
  cfg.batch_size = 8;
  auto m = transe_baseline(s.ontology, 16, cfg);
  const auto triples = s.ontology.original_triples();
  Rng rng(7);
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto& t = triples[uniform_index(rng, triples.size())];
    std::size_t corrupt;
    do corrupt = uniform_index(rng, s.ontology.num_concepts());
    while (s.ontology.contains(t.head, t.property, corrupt));
    wins += m.score(t.head, t.property, t.tail) > m.score(t.head, t.property, corrupt);
  }
  EXPECT_GT(wins, 50);
}

TEST(TransE, DeterministicPerSeed) {
  auto s = synth_ontology({12, 3, 4, 1});
  EncoderConfig cfg = rd_config(8);
  cfg.epochs = 20;
  auto a = transe_baseline(s.ontology, 8, cfg);
  auto b = transe_baseline(s.ontology, 8, cfg);
  EXPECT_EQ(a.entities, b.entities);
  EXPECT_EQ(a.relations, b.relations);
}

TEST(EmbeddingPersistence, TextAndBinaryRoundTripBitExact) {
  TempDir dir;
  auto s = synth_ontology({12, 3, 4, 0});
  auto cfg = agg_config(8);
  cfg.epochs = 3;
  auto res = train_encoder(s.ontology, cfg);
  auto table = encode(res.encoder);
  for (const char* name : {"emb.txt", "emb.bin"}) {
    const auto path = (dir.path() / name).string();
    save_embeddings(table, path);
    auto back = load_embeddings(path);
    EXPECT_EQ(back.concept_ids, table.concept_ids);
    EXPECT_EQ(back.aspects, table.aspects);
    EXPECT_EQ(back.dim, table.dim);
    ASSERT_EQ(back.data.rows(), table.data.rows());
    EXPECT_EQ(0, std::memcmp(back.data.data(), table.data.data(), sizeof(double) * table.data.size()));
  }
}

TEST(EncoderCheckpoint, RestoresParameters) {
  TempDir dir;
  auto s = synth_ontology({12, 3, 4, 0});
  auto cfg = agg_config(8, 1, EncoderVariant::agg_sub);
  cfg.epochs = 2;
  auto res = train_encoder(s.ontology, cfg);
  const auto path = (dir.path() / "enc.bin").string();
  encoder_checkpoint(res.encoder).save(path);
  auto back = encoder_from_checkpoint(s.ontology, TensorArchive::load(path));
  EXPECT_EQ(back.params.flat, res.encoder.params.flat);
  EXPECT_EQ(back.config.variant, EncoderVariant::agg_sub);
  EXPECT_EQ(encode(back).data, encode(res.encoder).data);
}
