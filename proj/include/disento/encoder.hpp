#pragma once

// Disentangled ontology encoder.
//
// Every concept carries one vector per component. Aggregation variants run L
// layers of property-aware attention over the augmented neighborhood, where
// each component is aggregated separately:
//
//   logit(i, j, p)  = (h_i^k o W_p) . (h_j^k o W_p)
//   alpha           = softmax over the neighborhood of i
//   h_i^k(l+1)      = tanh( sum_j alpha * (h_j^k o hp_p o W_p) )
//   hp_p(l+1)       = hp_p(l) * Theta_p(l)
//
// Triples are then scored per aspect with only that aspect's component:
//
//   q(i, p_k, j) = sigmoid( -|| c_i^k + r_k - c_j^k || )
//
// and trained with 1-vs-all binary cross entropy under label smoothing.

#include "disento/archive.hpp"
#include "disento/ontology.hpp"

#include <map>
#include <span>

namespace disento {

enum class EncoderVariant { rd, agg, rd_atten, agg_atten, agg_sub };

inline EncoderVariant parse_variant(std::string_view s) {
  if (s == "RD") return EncoderVariant::rd;
  if (s == "AGG") return EncoderVariant::agg;
  if (s == "RD_atten") return EncoderVariant::rd_atten;
  if (s == "AGG_atten") return EncoderVariant::agg_atten;
  if (s == "AGG_sub") return EncoderVariant::agg_sub;
  throw ValidationError("unknown encoder variant '" + std::string(s) + "'");
}

inline const char* to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::rd: return "RD";
    case EncoderVariant::agg: return "AGG";
    case EncoderVariant::rd_atten: return "RD_atten";
    case EncoderVariant::agg_atten: return "AGG_atten";
    case EncoderVariant::agg_sub: return "AGG_sub";
  }
  return "?";
}

inline bool uses_aggregation(EncoderVariant v) {
  return v == EncoderVariant::agg || v == EncoderVariant::agg_atten || v == EncoderVariant::agg_sub;
}

inline bool uses_attentive_scoring(EncoderVariant v) {
  return v == EncoderVariant::rd_atten || v == EncoderVariant::agg_atten;
}

struct EncoderConfig {
  // Total scoring embedding size; each component has d / K_score entries.
  std::size_t d = 32;
  std::size_t layers = 1;
  double learning_rate = 1e-3;
  double label_smoothing = 0.1;
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  EncoderVariant variant = EncoderVariant::agg;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;

  void validate(std::size_t k_score) const {
    require(k_score >= 1, "encoder needs at least one scoring aspect");
    require(d >= k_score && d % k_score == 0,
            "embedding size d=" + std::to_string(d) + " must be divisible by K_score=" + std::to_string(k_score));
    require(uses_aggregation(variant) ? layers >= 1 : layers == 0,
            std::string("variant ") + to_string(variant) + " requires layers " +
                (uses_aggregation(variant) ? ">= 1" : "== 0"));
    require(learning_rate > 0 && std::isfinite(learning_rate), "learning rate must be positive");
    require(label_smoothing >= 0 && label_smoothing < 1, "label smoothing must lie in [0, 1)");
    require(batch_size >= 1, "batch size must be >= 1");
  }
};

inline constexpr double kProbClamp = 1e-7;

// ---------------------------------------------------------------------------
// Output table

struct ComponentEmbeddingTable {
  std::vector<std::string> concept_ids;
  std::vector<std::string> aspects;
  std::size_t dim = 0;
  // Row i is the concatenation [c_i^1, ..., c_i^K] in aspect order.
  Mat data;

  std::size_t size() const { return concept_ids.size(); }
  std::size_t num_components() const { return aspects.size(); }

  auto component(std::size_t i, std::size_t k) const {
    return data.row(static_cast<Eigen::Index>(i)).segment(static_cast<Eigen::Index>(k * dim),
                                                         static_cast<Eigen::Index>(dim)).transpose();
  }
  auto component(std::size_t i, std::size_t k) {
    return data.row(static_cast<Eigen::Index>(i)).segment(static_cast<Eigen::Index>(k * dim),
                                                         static_cast<Eigen::Index>(dim)).transpose();
  }
  Vec concatenated(std::size_t i) const { return data.row(static_cast<Eigen::Index>(i)).transpose(); }

  std::size_t aspect_index(std::string_view property) const {
    for (std::size_t k = 0; k < aspects.size(); ++k)
      if (aspects[k] == property) return k;
    throw ValidationError("property '" + std::string(property) + "' is not a scoring aspect");
  }

  std::size_t concept_index(std::string_view id) const {
    for (std::size_t i = 0; i < concept_ids.size(); ++i)
      if (concept_ids[i] == id) return i;
    throw ValidationError("concept '" + std::string(id) + "' not in embedding table");
  }
};

// ---------------------------------------------------------------------------
// Parameters

struct EncoderShape {
  std::size_t n_concepts = 0;
  // Components held per concept: K_score for RD variants, K_agg for AGG.
  std::size_t components = 0;
  std::size_t dim = 0;
  std::size_t n_properties = 0;  // augmented count (AGG only)
  std::size_t layers = 0;
  std::size_t k_score = 0;
  bool aggregation = false;
  // Stored component feeding each scoring aspect.
  std::vector<std::size_t> aspect_component;
};

// Flat parameter vector with named views. Blocks, in order:
// table0 [n x comps x dim], and for aggregation variants prop0 [P x dim],
// proj [P x dim], theta [layers x P x dim x dim]; finally the scoring
// relation embeddings [k_score x dim].
class EncoderParams {
 public:
  EncoderShape shape;
  Vec flat;

  EncoderParams() = default;

  explicit EncoderParams(EncoderShape s) : shape(std::move(s)) {
    const auto& sh = shape;
    off_table_ = 0;
    std::size_t off = sh.n_concepts * sh.components * sh.dim;
    if (sh.aggregation) {
      off_prop_ = off;
      off += sh.n_properties * sh.dim;
      off_proj_ = off;
      off += sh.n_properties * sh.dim;
      off_theta_ = off;
      off += sh.layers * sh.n_properties * sh.dim * sh.dim;
    }
    off_rel_ = off;
    off += sh.k_score * sh.dim;
    flat = Vec::Zero(static_cast<Eigen::Index>(off));
  }

  EncoderParams zeros_like() const { return EncoderParams(shape); }

  using Segment = Eigen::VectorBlock<Vec>;
  using ConstSegment = Eigen::VectorBlock<const Vec>;

  Segment seg(std::size_t off) { return flat.segment(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(shape.dim)); }
  ConstSegment seg(std::size_t off) const {
    return flat.segment(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(shape.dim));
  }

  Segment h0(std::size_t i, std::size_t k) { return seg(off_table_ + (i * shape.components + k) * shape.dim); }
  ConstSegment h0(std::size_t i, std::size_t k) const { return seg(off_table_ + (i * shape.components + k) * shape.dim); }
  Segment prop0(std::size_t p) { return seg(off_prop_ + p * shape.dim); }
  ConstSegment prop0(std::size_t p) const { return seg(off_prop_ + p * shape.dim); }
  Segment proj(std::size_t p) { return seg(off_proj_ + p * shape.dim); }
  ConstSegment proj(std::size_t p) const { return seg(off_proj_ + p * shape.dim); }
  Segment relation(std::size_t k) { return seg(off_rel_ + k * shape.dim); }
  ConstSegment relation(std::size_t k) const { return seg(off_rel_ + k * shape.dim); }

  Eigen::Map<Mat> theta(std::size_t l, std::size_t p) {
    const auto d = static_cast<Eigen::Index>(shape.dim);
    return Eigen::Map<Mat>(flat.data() + theta_off(l, p), d, d);
  }
  Eigen::Map<const Mat> theta(std::size_t l, std::size_t p) const {
    const auto d = static_cast<Eigen::Index>(shape.dim);
    return Eigen::Map<const Mat>(flat.data() + theta_off(l, p), d, d);
  }

  // Layer-0 table as n x (comps*dim).
  Mat table0() const {
    const auto n = static_cast<Eigen::Index>(shape.n_concepts);
    const auto w = static_cast<Eigen::Index>(shape.components * shape.dim);
    return Eigen::Map<const Mat>(flat.data() + off_table_, n, w);
  }
  Eigen::Map<Mat> table0_map() {
    return Eigen::Map<Mat>(flat.data() + off_table_, static_cast<Eigen::Index>(shape.n_concepts),
                           static_cast<Eigen::Index>(shape.components * shape.dim));
  }

  Mat props0() const {
    return Eigen::Map<const Mat>(flat.data() + off_prop_, static_cast<Eigen::Index>(shape.n_properties),
                                 static_cast<Eigen::Index>(shape.dim));
  }

  Mat relations() const {
    return Eigen::Map<const Mat>(flat.data() + off_rel_, static_cast<Eigen::Index>(shape.k_score),
                                 static_cast<Eigen::Index>(shape.dim));
  }
  Eigen::Map<Mat> relations_map() {
    return Eigen::Map<Mat>(flat.data() + off_rel_, static_cast<Eigen::Index>(shape.k_score),
                           static_cast<Eigen::Index>(shape.dim));
  }

 private:
  std::size_t off_table_ = 0, off_prop_ = 0, off_proj_ = 0, off_theta_ = 0, off_rel_ = 0;

  std::size_t theta_off(std::size_t l, std::size_t p) const {
    return off_theta_ + (l * shape.n_properties + p) * shape.dim * shape.dim;
  }
};

// ---------------------------------------------------------------------------
// Encoder: ontology view + neighborhood + parameters

struct ScoringQuery {
  std::size_t head = 0;
  std::size_t relation = 0;   // row of the relation embedding matrix
  std::size_t component = 0;  // output component used by property-guided scoring
  std::vector<std::size_t> tails;
};

class Encoder {
 public:
  AugmentedOntology aug;
  NeighborhoodIndex nbr;
  EncoderConfig config;
  EncoderParams params;

  Encoder() = default;

  Encoder(const Ontology& o, const EncoderConfig& cfg) : aug(augment_ontology(o)), nbr(aug), config(cfg) {
    config.validate(aug.k_score);
    const auto& ao = aug.ontology;
    EncoderShape sh;
    sh.n_concepts = ao.num_concepts();
    sh.dim = config.d / aug.k_score;
    sh.k_score = aug.k_score;
    sh.aggregation = uses_aggregation(config.variant);
    sh.layers = sh.aggregation ? config.layers : 0;
    sh.n_properties = ao.num_properties();
    sh.components = sh.aggregation ? aug.k_agg : aug.k_score;
    const auto aspect_idx = ao.aspect_property_indices();
    for (std::size_t k = 0; k < sh.k_score; ++k) sh.aspect_component.push_back(sh.aggregation ? aspect_idx[k] : k);
    params = EncoderParams(sh);
    build_pair_lists();
  }

  const EncoderShape& shape() const { return params.shape; }
  const Ontology& ontology() const { return aug.ontology; }

  // Neighborhood pairs used when aggregating component k of concept i.
  const std::vector<Neighbor>& pairs(std::size_t i, std::size_t k) const {
    if (config.variant == EncoderVariant::agg_sub) return sub_pairs_.at(i * shape().components + k);
    return nbr.of(i);
  }

  void initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "encoder-init"));
    const auto& sh = shape();
    const double s = 1.0 / std::sqrt(static_cast<double>(sh.dim));
    for (std::size_t i = 0; i < sh.n_concepts; ++i)
      for (std::size_t k = 0; k < sh.components; ++k) params.h0(i, k) = normal_vec(rng, sh.dim, s);
    if (sh.aggregation) {
      for (std::size_t p = 0; p < sh.n_properties; ++p)
        params.prop0(p) = Vec::Ones(sh.dim) + normal_vec(rng, sh.dim, 0.1);
      for (std::size_t p = 0; p < sh.n_properties; ++p)
        params.proj(p) = Vec::Ones(sh.dim) + normal_vec(rng, sh.dim, 0.1);
      for (std::size_t l = 0; l < sh.layers; ++l)
        for (std::size_t p = 0; p < sh.n_properties; ++p)
          params.theta(l, p) = Mat::Identity(sh.dim, sh.dim) + normal_mat(rng, sh.dim, sh.dim, 0.1 * s);
    }
    for (std::size_t k = 0; k < sh.k_score; ++k) params.relation(k) = normal_vec(rng, sh.dim, s);
  }

  // One query per (head, aspect) with all true tails, in deterministic order.
  std::vector<ScoringQuery> training_queries() const {
    const auto& o = ontology();
    const auto aspects = o.aspect_property_indices();
    std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> grouped;
    for (const auto& t : o.triples) {
      auto it = std::find(aspects.begin(), aspects.end(), t.property);
      if (it == aspects.end()) continue;
      const auto k = static_cast<std::size_t>(it - aspects.begin());
      grouped[{k, t.head}].push_back(t.tail);
    }
    std::vector<ScoringQuery> out;
    for (auto& [key, tails] : grouped) {
      std::sort(tails.begin(), tails.end());
      out.push_back({key.second, key.first, key.first, std::move(tails)});
    }
    return out;
  }

 private:
  std::vector<std::vector<Neighbor>> sub_pairs_;

  void build_pair_lists() {
    if (config.variant != EncoderVariant::agg_sub) return;
    const auto& sh = shape();
    sub_pairs_.resize(sh.n_concepts * sh.components);
    for (std::size_t i = 0; i < sh.n_concepts; ++i)
      for (std::size_t k = 0; k < sh.components; ++k) {
        auto& out = sub_pairs_[i * sh.components + k];
        for (const auto& nb : nbr.of(i))
          if (nb.property == k || nb.property == aug.self_property) out.push_back(nb);
      }
  }
};

// ---------------------------------------------------------------------------
// Aggregation

struct LayerState {
  Mat table;  // n x (comps*dim)
  Mat props;  // P x dim; empty for RD
};

inline LayerState initial_state(const Encoder& enc) {
  LayerState s;
  s.table = enc.params.table0();
  if (enc.shape().aggregation) s.props = enc.params.props0();
  return s;
}

namespace detail {
inline auto comp(const Mat& table, std::size_t i, std::size_t k, std::size_t dim) {
  return table.row(static_cast<Eigen::Index>(i))
      .segment(static_cast<Eigen::Index>(k * dim), static_cast<Eigen::Index>(dim))
      .transpose();
}
inline auto comp(Mat& table, std::size_t i, std::size_t k, std::size_t dim) {
  return table.row(static_cast<Eigen::Index>(i))
      .segment(static_cast<Eigen::Index>(k * dim), static_cast<Eigen::Index>(dim))
      .transpose();
}
}  // namespace detail

// Property-aware attention over the (possibly restricted) neighborhood of
// concept i for component k at the given layer state.
inline std::vector<double> attention_weights(const Encoder& enc, const LayerState& state, std::size_t i,
                                             std::size_t k) {
  const auto& sh = enc.shape();
  require(sh.aggregation, "attention is only defined for aggregation variants");
  require(k < sh.components, "component index out of range");
  const auto& pairs = enc.pairs(i, k);
  std::vector<double> logits;
  logits.reserve(pairs.size());
  const Vec hi = detail::comp(state.table, i, k, sh.dim);
  for (const auto& nb : pairs) {
    const auto w = enc.params.proj(nb.property);
    const double e = (hi.cwiseProduct(w)).dot(detail::comp(state.table, nb.node, k, sh.dim).cwiseProduct(w));
    if (!std::isfinite(e)) throw DivergenceError("non-finite attention logit");
    logits.push_back(e);
  }
  return softmax(logits);
}

// Attention weights for every (concept, component), flattened i*comps + k.
using AttentionCache = std::vector<std::vector<double>>;

inline LayerState aggregate_layer(const Encoder& enc, const LayerState& in, std::size_t layer,
                                  AttentionCache* cache = nullptr) {
  const auto& sh = enc.shape();
  require(sh.aggregation && layer < sh.layers, "layer index out of range");
  LayerState out;
  out.table = Mat::Zero(in.table.rows(), in.table.cols());
  if (cache) cache->assign(sh.n_concepts * sh.components, {});
  for (std::size_t i = 0; i < sh.n_concepts; ++i) {
    for (std::size_t k = 0; k < sh.components; ++k) {
      auto alpha = attention_weights(enc, in, i, k);
      const auto& pairs = enc.pairs(i, k);
      Vec acc = Vec::Zero(sh.dim);
      for (std::size_t n = 0; n < pairs.size(); ++n) {
        const auto& nb = pairs[n];
        acc += alpha[n] * detail::comp(in.table, nb.node, k, sh.dim)
                              .cwiseProduct(in.props.row(nb.property).transpose())
                              .cwiseProduct(enc.params.proj(nb.property));
      }
      detail::comp(out.table, i, k, sh.dim) = acc.array().tanh().matrix();
      if (cache) (*cache)[i * sh.components + k] = std::move(alpha);
    }
  }
  out.props = Mat(in.props.rows(), in.props.cols());
  for (std::size_t p = 0; p < sh.n_properties; ++p)
    out.props.row(p) = in.props.row(p) * enc.params.theta(layer, p);
  if (!all_finite(out.table)) throw DivergenceError("non-finite values after aggregation layer " + std::to_string(layer));
  return out;
}

struct ForwardCache {
  std::vector<LayerState> states;       // layers + 1
  std::vector<AttentionCache> attention;  // layers
};

inline ForwardCache forward(const Encoder& enc) {
  ForwardCache fc;
  fc.states.push_back(initial_state(enc));
  for (std::size_t l = 0; l < enc.shape().layers; ++l) {
    fc.attention.emplace_back();
    fc.states.push_back(aggregate_layer(enc, fc.states.back(), l, &fc.attention.back()));
  }
  return fc;
}

// Reduces the final stored components to the K_score scoring components.
inline Mat select_aspect_components(const EncoderShape& sh, const Mat& final_table) {
  Mat out(static_cast<Eigen::Index>(sh.n_concepts), static_cast<Eigen::Index>(sh.k_score * sh.dim));
  for (std::size_t i = 0; i < sh.n_concepts; ++i)
    for (std::size_t k = 0; k < sh.k_score; ++k)
      detail::comp(out, i, k, sh.dim) = detail::comp(final_table, i, sh.aspect_component[k], sh.dim);
  return out;
}

inline ComponentEmbeddingTable make_table(const Encoder& enc, Mat data) {
  ComponentEmbeddingTable t;
  for (const auto& c : enc.ontology().concepts) t.concept_ids.push_back(c.id);
  t.aspects = enc.ontology().aspect_properties;
  t.dim = enc.shape().dim;
  t.data = std::move(data);
  return t;
}

inline ComponentEmbeddingTable encode(const Encoder& enc) {
  const auto fc = forward(enc);
  return make_table(enc, select_aspect_components(enc.shape(), fc.states.back().table));
}

// Backpropagates d(loss)/d(final stored table) through all aggregation layers
// into `grad` (same layout as the encoder parameters).
inline void backward(const Encoder& enc, const ForwardCache& fc, Mat d_table, EncoderParams& grad) {
  const auto& sh = enc.shape();
  const auto dim = sh.dim;
  Mat d_props = sh.aggregation ? Mat::Zero(static_cast<Eigen::Index>(sh.n_properties), static_cast<Eigen::Index>(dim))
                               : Mat();
  for (std::size_t l = sh.layers; l-- > 0;) {
    const auto& in = fc.states[l];
    const auto& out = fc.states[l + 1];
    // Property embedding chain: props(l+1) = props(l) * theta(l).
    Mat d_props_in = Mat::Zero(d_props.rows(), d_props.cols());
    for (std::size_t p = 0; p < sh.n_properties; ++p) {
      const Vec dp_next = d_props.row(p).transpose();
      grad.theta(l, p) += in.props.row(p).transpose() * dp_next.transpose();
      d_props_in.row(p) = (enc.params.theta(l, p) * dp_next).transpose();
    }
    Mat d_in = Mat::Zero(in.table.rows(), in.table.cols());
    for (std::size_t i = 0; i < sh.n_concepts; ++i) {
      for (std::size_t k = 0; k < sh.components; ++k) {
        const Vec dout = detail::comp(d_table, i, k, dim);
        if (dout.isZero(0.0)) continue;
        const Vec o = detail::comp(out.table, i, k, dim);
        const Vec g = dout.cwiseProduct((Vec::Ones(dim) - o.cwiseProduct(o)));
        const auto& pairs = enc.pairs(i, k);
        const auto& alpha = fc.attention[l][i * sh.components + k];
        const Vec hi = detail::comp(in.table, i, k, dim);
        std::vector<double> d_alpha(pairs.size());
        double weighted = 0.0;
        for (std::size_t n = 0; n < pairs.size(); ++n) {
          const auto& nb = pairs[n];
          const Vec hj = detail::comp(in.table, nb.node, k, dim);
          const Vec hp = in.props.row(nb.property).transpose();
          const Vec w = enc.params.proj(nb.property);
          const Vec dm = alpha[n] * g;
          d_alpha[n] = g.dot(hj.cwiseProduct(hp).cwiseProduct(w));
          weighted += alpha[n] * d_alpha[n];
          detail::comp(d_in, nb.node, k, dim) += dm.cwiseProduct(hp).cwiseProduct(w);
          d_props_in.row(nb.property) += dm.cwiseProduct(hj).cwiseProduct(w).transpose();
          grad.proj(nb.property) += dm.cwiseProduct(hj).cwiseProduct(hp);
        }
        for (std::size_t n = 0; n < pairs.size(); ++n) {
          const auto& nb = pairs[n];
          const double de = alpha[n] * (d_alpha[n] - weighted);
          if (de == 0.0) continue;
          const Vec hj = detail::comp(in.table, nb.node, k, dim);
          const Vec w = enc.params.proj(nb.property);
          const Vec w2 = w.cwiseProduct(w);
          detail::comp(d_in, i, k, dim) += de * hj.cwiseProduct(w2);
          detail::comp(d_in, nb.node, k, dim) += de * hi.cwiseProduct(w2);
          grad.proj(nb.property) += 2.0 * de * w.cwiseProduct(hi).cwiseProduct(hj);
        }
      }
    }
    d_table = std::move(d_in);
    d_props = std::move(d_props_in);
  }
  grad.table0_map() += d_table;
  if (sh.aggregation)
    for (std::size_t p = 0; p < sh.n_properties; ++p) grad.prop0(p) += d_props.row(p).transpose();
}

// ---------------------------------------------------------------------------
// Scoring

inline double translation_distance(const Eigen::Ref<const Vec>& head, const Eigen::Ref<const Vec>& rel,
                                   const Eigen::Ref<const Vec>& tail) {
  return (head + rel - tail).norm();
}

// Property-guided score of (i, aspect k, j) using only the k-th components.
inline double triple_score(const ComponentEmbeddingTable& table, const Mat& relations, std::size_t head,
                           std::size_t aspect, std::size_t tail) {
  require(aspect < table.num_components() && static_cast<Eigen::Index>(aspect) < relations.rows(),
          "aspect index out of range");
  return sigmoid(-translation_distance(table.component(head, aspect), relations.row(aspect).transpose(),
                                       table.component(tail, aspect)));
}

inline double triple_score(const ComponentEmbeddingTable& table, const Mat& relations, std::string_view head,
                           std::string_view property, std::string_view tail) {
  return triple_score(table, relations, table.concept_index(head), table.aspect_index(property),
                      table.concept_index(tail));
}

namespace detail {
// Attention-weighted mix of a concept's components keyed by a relation vector.
struct AttentiveMix {
  Vec mixed;
  std::vector<double> beta;
};

inline AttentiveMix attentive_mix(const Mat& table, std::size_t i, std::size_t comps, std::size_t dim,
                                  const Vec& rel) {
  std::vector<double> logits(comps);
  for (std::size_t k = 0; k < comps; ++k) logits[k] = comp(table, i, k, dim).dot(rel);
  AttentiveMix m{Vec::Zero(static_cast<Eigen::Index>(dim)), softmax(logits)};
  for (std::size_t k = 0; k < comps; ++k) m.mixed += m.beta[k] * comp(table, i, k, dim);
  return m;
}
}  // namespace detail

// Ablation scorer: each endpoint is a softmax(c^k . r)-weighted mix of its
// components instead of the aspect-indexed component.
inline double attentive_triple_score(const ComponentEmbeddingTable& table, const Mat& relations, std::size_t head,
                                     std::size_t aspect, std::size_t tail) {
  require(static_cast<Eigen::Index>(aspect) < relations.rows(), "aspect index out of range");
  const Vec rel = relations.row(aspect).transpose();
  const auto K = table.num_components();
  const auto h = detail::attentive_mix(table.data, head, K, table.dim, rel);
  const auto t = detail::attentive_mix(table.data, tail, K, table.dim, rel);
  return sigmoid(-translation_distance(h.mixed, rel, t.mixed));
}

enum class ScoringMode { property_guided, attentive };

inline double smoothed_bce(double q, double target) {
  const double qc = std::clamp(q, kProbClamp, 1.0 - kProbClamp);
  return -(target * std::log(qc) + (1.0 - target) * std::log(1.0 - qc));
}

// d(bce)/d(logit) for q = sigmoid(logit); zero where the clamp is active.
inline double smoothed_bce_dlogit(double q, double target) {
  if (q < kProbClamp || q > 1.0 - kProbClamp) return 0.0;
  return q - target;
}

// Mean 1-vs-all smoothed cross entropy over the queries, every concept a
// candidate tail. Gradients are accumulated into d_table / d_rel if given.
inline double scoring_loss(const Mat& table, std::size_t comps, std::size_t dim, const Mat& relations,
                           std::span<const ScoringQuery> queries, ScoringMode mode, double smoothing,
                           Mat* d_table = nullptr, Mat* d_rel = nullptr) {
  require(!queries.empty(), "scoring loss needs at least one query");
  const auto n = static_cast<std::size_t>(table.rows());
  const double scale = 1.0 / (static_cast<double>(queries.size()) * static_cast<double>(n));
  const bool want_grad = d_table != nullptr;
  std::vector<double> target(n);
  double total = 0.0;

  if (mode == ScoringMode::property_guided) {
    for (const auto& q : queries) {
      std::fill(target.begin(), target.end(), smoothing);
      for (auto t : q.tails) target[t] = 1.0 - smoothing;
      const Vec rel = relations.row(q.relation).transpose();
      const Vec base = detail::comp(table, q.head, q.component, dim) + rel;
      Vec d_base = Vec::Zero(static_cast<Eigen::Index>(dim));
      for (std::size_t c = 0; c < n; ++c) {
        const Vec v = base - detail::comp(table, c, q.component, dim);
        const double dist = v.norm();
        const double prob = sigmoid(-dist);
        total += smoothed_bce(prob, target[c]);
        if (!want_grad || dist == 0.0) continue;
        const double g = smoothed_bce_dlogit(prob, target[c]) * scale;
        const Vec dv = (-g / dist) * v;
        d_base += dv;
        detail::comp(*d_table, c, q.component, dim) -= dv;
      }
      if (want_grad) {
        detail::comp(*d_table, q.head, q.component, dim) += d_base;
        d_rel->row(q.relation) += d_base.transpose();
      }
    }
    return total * scale;
  }

  // Attentive: mixes depend only on (concept, relation); cache per relation.
  std::map<std::size_t, std::vector<detail::AttentiveMix>> mixes;
  std::map<std::size_t, Mat> d_mix;  // relation -> n x dim
  for (const auto& q : queries) {
    auto it = mixes.find(q.relation);
    if (it == mixes.end()) {
      const Vec rel = relations.row(q.relation).transpose();
      std::vector<detail::AttentiveMix> v;
      v.reserve(n);
      for (std::size_t c = 0; c < n; ++c) v.push_back(detail::attentive_mix(table, c, comps, dim, rel));
      it = mixes.emplace(q.relation, std::move(v)).first;
      if (want_grad) d_mix.emplace(q.relation, Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim)));
    }
    const auto& mix = it->second;
    std::fill(target.begin(), target.end(), smoothing);
    for (auto t : q.tails) target[t] = 1.0 - smoothing;
    const Vec rel = relations.row(q.relation).transpose();
    const Vec base = mix[q.head].mixed + rel;
    Vec d_base = Vec::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t c = 0; c < n; ++c) {
      const Vec v = base - mix[c].mixed;
      const double dist = v.norm();
      const double prob = sigmoid(-dist);
      total += smoothed_bce(prob, target[c]);
      if (!want_grad || dist == 0.0) continue;
      const double g = smoothed_bce_dlogit(prob, target[c]) * scale;
      const Vec dv = (-g / dist) * v;
      d_base += dv;
      d_mix[q.relation].row(c) -= dv.transpose();
    }
    if (want_grad) {
      d_mix[q.relation].row(q.head) += d_base.transpose();
      d_rel->row(q.relation) += d_base.transpose();
    }
  }
  if (want_grad) {
    for (const auto& [r, dm] : d_mix) {
      const Vec rel = relations.row(r).transpose();
      const auto& mix = mixes.at(r);
      for (std::size_t c = 0; c < n; ++c) {
        const Vec de = dm.row(c).transpose();
        if (de.isZero(0.0)) continue;
        const auto& beta = mix[c].beta;
        std::vector<double> d_beta(comps);
        double weighted = 0.0;
        for (std::size_t k = 0; k < comps; ++k) {
          const Vec ck = detail::comp(table, c, k, dim);
          d_beta[k] = ck.dot(de);
          weighted += beta[k] * d_beta[k];
          detail::comp(*d_table, c, k, dim) += beta[k] * de;
        }
        for (std::size_t k = 0; k < comps; ++k) {
          const double da = beta[k] * (d_beta[k] - weighted);
          detail::comp(*d_table, c, k, dim) += da * rel;
          d_rel->row(r) += da * detail::comp(table, c, k, dim).transpose();
        }
      }
    }
  }
  return total * scale;
}

inline ScoringMode scoring_mode(EncoderVariant v) {
  return uses_attentive_scoring(v) ? ScoringMode::attentive : ScoringMode::property_guided;
}

// Full encoder loss for a batch; gradients w.r.t. all parameters go to `grad`.
inline double training_loss(const Encoder& enc, std::span<const ScoringQuery> batch, EncoderParams* grad = nullptr) {
  const auto& sh = enc.shape();
  const auto fc = forward(enc);
  const Mat table = select_aspect_components(sh, fc.states.back().table);
  const Mat rels = enc.params.relations();
  if (!grad)
    return scoring_loss(table, sh.k_score, sh.dim, rels, batch, scoring_mode(enc.config.variant),
                        enc.config.label_smoothing);
  Mat d_table = Mat::Zero(table.rows(), table.cols());
  Mat d_rel = Mat::Zero(rels.rows(), rels.cols());
  const double loss = scoring_loss(table, sh.k_score, sh.dim, rels, batch, scoring_mode(enc.config.variant),
                                   enc.config.label_smoothing, &d_table, &d_rel);
  Mat d_final = Mat::Zero(fc.states.back().table.rows(), fc.states.back().table.cols());
  for (std::size_t i = 0; i < sh.n_concepts; ++i)
    for (std::size_t k = 0; k < sh.k_score; ++k)
      detail::comp(d_final, i, sh.aspect_component[k], sh.dim) += detail::comp(d_table, i, k, sh.dim);
  backward(enc, fc, std::move(d_final), *grad);
  grad->relations_map() += d_rel;
  return loss;
}

struct EncoderTrainResult {
  Encoder encoder;
  std::vector<double> loss_history;  // mean batch loss per epoch
};

inline EncoderTrainResult train_encoder(const Ontology& o, const EncoderConfig& cfg) {
  EncoderTrainResult res;
  res.encoder = Encoder(o, cfg);
  auto& enc = res.encoder;
  enc.initialize(cfg.seed);
  auto queries = enc.training_queries();
  require(!queries.empty(), "ontology has no triples on aspect properties");
  Rng rng(derive_seed(cfg.seed, "encoder-batches"));
  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<ScoringQuery> batch;
      for (std::size_t b = start; b < std::min(order.size(), start + cfg.batch_size); ++b)
        batch.push_back(queries[order[b]]);
      auto grad = enc.params.zeros_like();
      const double loss = training_loss(enc, batch, &grad);
      if (!std::isfinite(loss) || !grad.flat.allFinite())
        throw DivergenceError("encoder loss became non-finite at epoch " + std::to_string(epoch));
      opt.step(enc.params.flat, grad.flat);
      sum += loss;
      ++batches;
    }
    res.loss_history.push_back(sum / static_cast<double>(batches));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Entangled TransE baseline: one vector per concept, one per property.

struct TransEModel {
  std::vector<std::string> entity_ids;
  std::vector<std::string> relation_ids;
  Mat entities;   // n x d
  Mat relations;  // R x d

  double score(std::size_t h, std::size_t r, std::size_t t) const {
    return sigmoid(-translation_distance(entities.row(h).transpose(), relations.row(r).transpose(),
                                         entities.row(t).transpose()));
  }

  ComponentEmbeddingTable as_table() const {
    ComponentEmbeddingTable t;
    t.concept_ids = entity_ids;
    t.aspects = {"transe"};
    t.dim = static_cast<std::size_t>(entities.cols());
    t.data = entities;
    return t;
  }
};

inline std::vector<ScoringQuery> transe_queries(const Ontology& o) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> grouped;
  for (const auto& t : o.triples)
    if (o.properties[t.property].kind == PropertyKind::original) grouped[{t.property, t.head}].push_back(t.tail);
  std::vector<ScoringQuery> out;
  for (auto& [key, tails] : grouped) {
    std::sort(tails.begin(), tails.end());
    out.push_back({key.second, key.first, 0, std::move(tails)});
  }
  return out;
}

inline double transe_loss(const TransEModel& m, std::span<const ScoringQuery> batch, double smoothing,
                          Mat* d_ent = nullptr, Mat* d_rel = nullptr) {
  return scoring_loss(m.entities, 1, static_cast<std::size_t>(m.entities.cols()), m.relations, batch,
                      ScoringMode::property_guided, smoothing, d_ent, d_rel);
}

// Uses d, learning rate, smoothing, batch size, epochs, optimizer and seed
// from `cfg`; the variant is ignored.
inline TransEModel transe_baseline(const Ontology& o, std::size_t d, const EncoderConfig& cfg,
                                   std::vector<double>* history = nullptr) {
  require(d >= 1, "TransE dimension must be positive");
  require(o.num_properties() >= 1, "TransE needs at least one relation");
  TransEModel m;
  for (const auto& c : o.concepts) m.entity_ids.push_back(c.id);
  for (const auto& p : o.properties)
    if (p.kind == PropertyKind::original) m.relation_ids.push_back(p.id);
  Rng rng(derive_seed(cfg.seed, "transe-init"));
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  m.entities = normal_mat(rng, static_cast<Eigen::Index>(o.num_concepts()), static_cast<Eigen::Index>(d), s);
  m.relations = normal_mat(rng, static_cast<Eigen::Index>(m.relation_ids.size()), static_cast<Eigen::Index>(d), s);
  auto queries = transe_queries(o);
  require(!queries.empty(), "TransE needs at least one triple");
  Rng brng(derive_seed(cfg.seed, "transe-batches"));
  Optimizer opt_e(cfg.optimizer, cfg.learning_rate), opt_r(cfg.optimizer, cfg.learning_rate);
  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, brng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<ScoringQuery> batch;
      for (std::size_t b = start; b < std::min(order.size(), start + cfg.batch_size); ++b)
        batch.push_back(queries[order[b]]);
      Mat de = Mat::Zero(m.entities.rows(), m.entities.cols());
      Mat dr = Mat::Zero(m.relations.rows(), m.relations.cols());
      const double loss = transe_loss(m, batch, cfg.label_smoothing, &de, &dr);
      if (!std::isfinite(loss)) throw DivergenceError("TransE loss became non-finite at epoch " + std::to_string(epoch));
      Eigen::Map<Vec> pe(m.entities.data(), m.entities.size());
      Eigen::Map<Vec> pr(m.relations.data(), m.relations.size());
      opt_e.step(pe, Eigen::Map<const Vec>(de.data(), de.size()));
      opt_r.step(pr, Eigen::Map<const Vec>(dr.data(), dr.size()));
      sum += loss;
      ++batches;
    }
    if (history) history->push_back(sum / static_cast<double>(batches));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string embeddings_to_text(const ComponentEmbeddingTable& t) {
  std::ostringstream out;
  out << "disento-embeddings 1\n" << t.size() << '\t' << t.num_components() << '\t' << t.dim << '\n';
  out << "aspects";
  for (const auto& a : t.aspects) out << '\t' << a;
  out << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) {
    out << t.concept_ids[i];
    for (Eigen::Index j = 0; j < t.data.cols(); ++j) out << '\t' << format_double(t.data(i, j));
    out << '\n';
  }
  return out.str();
}

inline ComponentEmbeddingTable embeddings_from_text(const std::string& text, const std::string& source = "<embeddings>") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> const std::string& {
    if (!std::getline(in, line)) throw ParseError(source, lineno, "unexpected end of embedding file");
    ++lineno;
    return line;
  };
  if (next() != "disento-embeddings 1") throw ParseError(source, lineno, "bad embedding header");
  auto dims = split(next(), '\t');
  if (dims.size() != 3) throw ParseError(source, lineno, "expected |C|, K, d/K");
  ComponentEmbeddingTable t;
  const auto n = static_cast<std::size_t>(parse_int(dims[0]));
  const auto K = static_cast<std::size_t>(parse_int(dims[1]));
  t.dim = static_cast<std::size_t>(parse_int(dims[2]));
  auto asp = split(next(), '\t');
  if (asp.empty() || asp[0] != "aspects" || asp.size() != K + 1) throw ParseError(source, lineno, "bad aspect line");
  t.aspects.assign(asp.begin() + 1, asp.end());
  t.data = Mat(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(K * t.dim));
  for (std::size_t i = 0; i < n; ++i) {
    auto f = split(next(), '\t');
    if (f.size() != K * t.dim + 1) throw ParseError(source, lineno, "embedding row has wrong length");
    t.concept_ids.push_back(f[0]);
    for (std::size_t j = 0; j < K * t.dim; ++j) t.data(i, j) = parse_double(f[j + 1]);
  }
  return t;
}

inline std::string embeddings_to_binary(const ComponentEmbeddingTable& t) {
  std::ostringstream out(std::ios::binary);
  io::write_magic(out, "DZEM");
  io::write_pod<std::uint32_t>(out, 1);
  io::write_pod<std::uint64_t>(out, t.size());
  io::write_pod<std::uint64_t>(out, t.num_components());
  io::write_pod<std::uint64_t>(out, t.dim);
  for (const auto& a : t.aspects) io::write_string(out, a);
  for (const auto& c : t.concept_ids) io::write_string(out, c);
  io::write_doubles(out, t.data.data(), static_cast<std::size_t>(t.data.size()));
  return out.str();
}

inline ComponentEmbeddingTable embeddings_from_binary(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  io::expect_magic(in, "DZEM", "embedding");
  if (io::read_pod<std::uint32_t>(in) != 1) throw Error("unsupported embedding version");
  ComponentEmbeddingTable t;
  const auto n = io::read_pod<std::uint64_t>(in);
  const auto K = io::read_pod<std::uint64_t>(in);
  t.dim = io::read_pod<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < K; ++k) t.aspects.push_back(io::read_string(in));
  for (std::uint64_t i = 0; i < n; ++i) t.concept_ids.push_back(io::read_string(in));
  t.data = Mat(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(K * t.dim));
  io::read_doubles(in, t.data.data(), static_cast<std::size_t>(t.data.size()));
  return t;
}

inline void save_embeddings(const ComponentEmbeddingTable& t, const std::string& path) {
  io::write_artifact(path, path.ends_with(".bin") ? embeddings_to_binary(t) : embeddings_to_text(t));
}

inline ComponentEmbeddingTable load_embeddings(const std::string& path) {
  auto bytes = read_file(path);
  return path.ends_with(".bin") ? embeddings_from_binary(bytes) : embeddings_from_text(bytes, path);
}

inline TensorArchive encoder_checkpoint(const Encoder& enc) {
  TensorArchive a;
  a.set_meta("kind", "encoder");
  a.set_meta("variant", to_string(enc.config.variant));
  a.set_meta("d", std::to_string(enc.config.d));
  a.set_meta("layers", std::to_string(enc.config.layers));
  a.set_meta("learning_rate", format_double(enc.config.learning_rate));
  a.set_meta("label_smoothing", format_double(enc.config.label_smoothing));
  a.set_meta("batch_size", std::to_string(enc.config.batch_size));
  a.set_meta("epochs", std::to_string(enc.config.epochs));
  a.set_meta("optimizer", to_string(enc.config.optimizer));
  a.set_meta("seed", std::to_string(enc.config.seed));
  a.put("params", as_row(enc.params.flat));
  a.put("relations", enc.params.relations());
  return a;
}

inline Encoder encoder_from_checkpoint(const Ontology& o, const TensorArchive& a) {
  EncoderConfig cfg;
  cfg.variant = parse_variant(a.get_meta("variant"));
  cfg.d = static_cast<std::size_t>(parse_int(a.get_meta("d")));
  cfg.layers = static_cast<std::size_t>(parse_int(a.get_meta("layers")));
  cfg.learning_rate = parse_double(a.get_meta("learning_rate"));
  cfg.label_smoothing = parse_double(a.get_meta("label_smoothing"));
  cfg.batch_size = static_cast<std::size_t>(parse_int(a.get_meta("batch_size")));
  cfg.epochs = static_cast<std::size_t>(parse_int(a.get_meta("epochs")));
  cfg.optimizer = parse_optimizer(a.get_meta("optimizer"));
  cfg.seed = static_cast<std::uint64_t>(parse_int(a.get_meta("seed")));
  Encoder enc(o, cfg);
  const Vec flat = as_vec(a.get("params"));
  require(flat.size() == enc.params.flat.size(), "encoder checkpoint does not match ontology shape");
  enc.params.flat = flat;
  return enc;
}

}  // namespace disento
