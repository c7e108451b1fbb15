#pragma once

// Per-class sample features: file IO, block-structured synthetic features and
// offset features for KG relations.

#include <map>

#include "disento/encoder.hpp"
#include "disento/io.hpp"

namespace disento {

enum class FeatureKind { real, synthetic };

inline std::string to_string(FeatureKind k) { return k == FeatureKind::real ? "real" : "synthetic"; }

inline FeatureKind parse_feature_kind(const std::string& s) {
  if (s == "real") return FeatureKind::real;
  if (s == "synthetic") return FeatureKind::synthetic;
  throw ValidationError("unknown feature kind '" + s + "'");
}

class FeatureStore {
 public:
  std::size_t feature_dim = 0;
  FeatureKind kind = FeatureKind::real;
  std::vector<std::string> warnings;

  FeatureStore() = default;
  FeatureStore(std::size_t dim, FeatureKind k) : feature_dim(dim), kind(k) {}

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t num_classes() const { return classes_.size(); }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(const std::string& id) const { return index_.count(id) > 0; }

  // Registers a class with no samples yet; returns its position.
  std::size_t add_class(const std::string& id) {
    if (auto i = find(id)) return *i;
    index_.emplace(id, classes_.size());
    classes_.push_back(id);
    samples_.emplace_back();
    return classes_.size() - 1;
  }

  void add(const std::string& id, const Vec& v) {
    if (static_cast<std::size_t>(v.size()) != feature_dim)
      throw ValidationError("feature for '" + id + "' has length " + std::to_string(v.size()) + ", expected " +
                            std::to_string(feature_dim));
    if (!all_finite(v)) throw ValidationError("feature for '" + id + "' is not finite");
    samples_[add_class(id)].push_back(v);
  }

  const std::vector<Vec>& samples(const std::string& id) const {
    auto i = find(id);
    if (!i) throw ValidationError("no features for class '" + id + "'");
    return samples_[*i];
  }
  const std::vector<Vec>& samples(std::size_t i) const { return samples_.at(i); }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& s : samples_) n += s.size();
    return n;
  }

  Vec mean(const std::string& id) const {
    const auto& s = samples(id);
    if (s.empty()) throw ValidationError("class '" + id + "' has no samples");
    Vec m = Vec::Zero(static_cast<Eigen::Index>(feature_dim));
    for (const auto& v : s) m += v;
    return m / static_cast<double>(s.size());
  }

  // Stacked samples of `ids` (rows) with their position in `ids` as label.
  std::pair<Mat, std::vector<std::size_t>> stacked(const std::vector<std::string>& ids) const {
    std::size_t n = 0;
    for (const auto& id : ids) n += samples(id).size();
    Mat x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(feature_dim));
    std::vector<std::size_t> y;
    y.reserve(n);
    Eigen::Index r = 0;
    for (std::size_t c = 0; c < ids.size(); ++c)
      for (const auto& v : samples(ids[c])) {
        x.row(r++) = v.transpose();
        y.push_back(c);
      }
    return {std::move(x), std::move(y)};
  }

  friend bool operator==(const FeatureStore& a, const FeatureStore& b) {
    return a.feature_dim == b.feature_dim && a.kind == b.kind && a.classes_ == b.classes_ && a.samples_ == b.samples_;
  }

 private:
  std::vector<std::string> classes_;
  std::vector<std::vector<Vec>> samples_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Text layout: "<dim>\t<count>[\t<kind>]" then one "<class>\t<v1> <v2> ..." per sample.
inline std::string serialize_features_text(const FeatureStore& s) {
  std::ostringstream out;
  out << s.feature_dim << '\t' << s.total() << '\t' << to_string(s.kind) << '\n';
  for (const auto& id : s.classes())
    for (const auto& v : s.samples(id)) {
      out << id << '\t';
      for (Eigen::Index j = 0; j < v.size(); ++j) out << (j ? " " : "") << format_double(v[j]);
      out << '\n';
    }
  return out.str();
}

inline FeatureStore parse_features_text(const std::string& text, const std::string& source = "<features>") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::optional<FeatureStore> store;
  std::size_t declared = 0, seen = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto cols = split(t, '\t');
    if (!store) {
      if (cols.size() < 2 || cols.size() > 3) throw ParseError(source, lineno, "expected header '<dim>\\t<count>[\\t<kind>]'");
      try {
        const auto dim = parse_int(cols[0]);
        const auto count = parse_int(cols[1]);
        if (dim <= 0 || count < 0) throw ValidationError("bad header values");
        store.emplace(static_cast<std::size_t>(dim), cols.size() == 3 ? parse_feature_kind(cols[2]) : FeatureKind::real);
        declared = static_cast<std::size_t>(count);
      } catch (const ParseError&) {
        throw;
      } catch (const std::exception& e) {
        throw ParseError(source, lineno, e.what());
      }
      continue;
    }
    if (cols.size() != 2) throw ParseError(source, lineno, "expected '<class>\\t<values>'");
    std::vector<std::string> parts;
    for (auto& p : split(trim(cols[1]), ' '))
      if (!p.empty()) parts.push_back(std::move(p));
    Vec v(static_cast<Eigen::Index>(parts.size()));
    try {
      for (std::size_t j = 0; j < parts.size(); ++j) v[static_cast<Eigen::Index>(j)] = parse_double(parts[j]);
      store->add(std::string(trim(cols[0])), v);
    } catch (const std::exception& e) {
      throw ParseError(source, lineno, e.what());
    }
    ++seen;
  }
  if (!store) throw ParseError(source, lineno, "missing header");
  if (seen != declared)
    throw ParseError(source, lineno,
                     "header declares " + std::to_string(declared) + " records, found " + std::to_string(seen));
  if (seen == 0) store->warnings.push_back(source + ": feature file has no class records");
  return *store;
}

inline std::string serialize_features_binary(const FeatureStore& s) {
  std::ostringstream out(std::ios::binary);
  io::write_magic(out, "DZFT");
  io::write_pod<std::uint32_t>(out, 1);
  io::write_pod<std::uint64_t>(out, s.feature_dim);
  io::write_pod<std::uint8_t>(out, s.kind == FeatureKind::real ? 0 : 1);
  io::write_pod<std::uint64_t>(out, s.num_classes());
  for (const auto& id : s.classes()) {
    io::write_string(out, id);
    const auto& samples = s.samples(id);
    io::write_pod<std::uint64_t>(out, samples.size());
    for (const auto& v : samples) io::write_doubles(out, v.data(), static_cast<std::size_t>(v.size()));
  }
  return out.str();
}

inline FeatureStore parse_features_binary(const std::string& bytes, const std::string& source = "<features>") {
  std::istringstream in(bytes, std::ios::binary);
  io::expect_magic(in, "DZFT", source);
  if (io::read_pod<std::uint32_t>(in) != 1) throw ParseError(source, 0, "unsupported feature file version");
  const auto dim = io::read_pod<std::uint64_t>(in);
  const auto kind = io::read_pod<std::uint8_t>(in);
  if (dim == 0 || kind > 1) throw ParseError(source, 0, "bad feature file header");
  FeatureStore s(dim, kind == 0 ? FeatureKind::real : FeatureKind::synthetic);
  const auto n_classes = io::read_pod<std::uint64_t>(in);
  for (std::uint64_t c = 0; c < n_classes; ++c) {
    const auto id = io::read_string(in);
    s.add_class(id);
    const auto n = io::read_pod<std::uint64_t>(in);
    for (std::uint64_t k = 0; k < n; ++k) {
      Vec v(static_cast<Eigen::Index>(dim));
      io::read_doubles(in, v.data(), dim);
      s.add(id, v);
    }
  }
  if (s.total() == 0) s.warnings.push_back(source + ": feature file has no class records");
  return s;
}

inline bool is_binary_path(const std::string& path) { return path.size() >= 4 && path.ends_with(".bin"); }

inline FeatureStore load_features(const std::string& path) {
  const auto bytes = read_file(path);
  return is_binary_path(path) ? parse_features_binary(bytes, path) : parse_features_text(bytes, path);
}

inline void save_features(const FeatureStore& s, const std::string& path) {
  io::write_artifact(path, is_binary_path(path) ? serialize_features_binary(s) : serialize_features_text(s));
}

// Block mean for one factor: the factor's half of the vector is cut into
// n_groups equal chunks and group g lights chunk g at unit norm. Distinct
// groups are therefore always sqrt(2) apart within the block.
inline Vec factor_block_mean(std::size_t half, std::size_t n_groups, std::size_t group) {
  require(n_groups >= 1 && group < n_groups, "factor group out of range");
  const std::size_t chunk = half / n_groups;
  require(chunk >= 1, "feature block too small for the number of factor groups");
  Vec m = Vec::Zero(static_cast<Eigen::Index>(half));
  m.segment(static_cast<Eigen::Index>(group * chunk), static_cast<Eigen::Index>(chunk))
      .setConstant(1.0 / std::sqrt(static_cast<double>(chunk)));
  return m;
}

inline Vec synth_class_mean(std::size_t dim, const std::array<std::size_t, 2>& n_groups,
                            const std::array<std::size_t, 2>& labels) {
  require(dim >= 2 && dim % 2 == 0, "synthetic feature dim must be even");
  const std::size_t half = dim / 2;
  Vec m(static_cast<Eigen::Index>(dim));
  m.head(static_cast<Eigen::Index>(half)) = factor_block_mean(half, n_groups[0], labels[0]);
  m.tail(static_cast<Eigen::Index>(half)) = factor_block_mean(half, n_groups[1], labels[1]);
  return m;
}

// labels[a][c] is the aspect-a factor group of classes[c].
inline FeatureStore synth_features(const std::vector<std::string>& classes,
                                   const std::array<std::vector<std::size_t>, 2>& labels, std::size_t dim,
                                   std::size_t n_per_class, double noise_sigma, std::uint64_t seed) {
  require(n_per_class >= 1, "n_per_class must be at least 1");
  require(noise_sigma >= 0 && std::isfinite(noise_sigma), "noise sigma must be finite and non-negative");
  for (const auto& l : labels) require(l.size() == classes.size(), "one factor label per class required");
  std::array<std::size_t, 2> n_groups{};
  for (std::size_t a = 0; a < 2; ++a)
    n_groups[a] = labels[a].empty() ? 1 : *std::max_element(labels[a].begin(), labels[a].end()) + 1;
  FeatureStore s(dim, FeatureKind::synthetic);
  Rng rng(seed);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const Vec mu = synth_class_mean(dim, n_groups, {labels[0][c], labels[1][c]});
    for (std::size_t n = 0; n < n_per_class; ++n) s.add(classes[c], mu + normal_vec(rng, mu.size(), noise_sigma));
  }
  return s;
}

// Instance KG viewed as an ontology (entities as concepts, relations as
// properties) so the translational baseline can embed it.
inline Ontology kg_as_ontology(const std::vector<KgTriple>& triples) {
  Ontology o;
  for (const auto& t : triples) {
    const auto h = o.add_concept(t.head);
    const auto p = o.add_property(t.relation);
    o.add_triple(h, p, o.add_concept(t.tail));
  }
  for (const auto& p : o.properties) o.aspect_properties.push_back(p.id);
  o.validate();
  return o;
}

struct EntityEmbeddings {
  std::vector<std::string> ids;
  Mat vectors;  // n x dim
  std::unordered_map<std::string, std::size_t> index;

  EntityEmbeddings() = default;
  EntityEmbeddings(std::vector<std::string> i, Mat v) : ids(std::move(i)), vectors(std::move(v)) {
    require(static_cast<std::size_t>(vectors.rows()) == ids.size(), "one embedding row per entity required");
    for (std::size_t k = 0; k < ids.size(); ++k) index.emplace(ids[k], k);
  }
  explicit EntityEmbeddings(const TransEModel& m) : EntityEmbeddings(m.entity_ids, m.entities) {}

  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
  Vec at(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError("no embedding for entity '" + id + "'");
    return vectors.row(static_cast<Eigen::Index>(it->second)).transpose();
  }
};

// Joint embedding of an entity pair.
inline Vec pair_offset(const EntityEmbeddings& e, const std::string& head, const std::string& tail) {
  return e.at(tail) - e.at(head);
}

// Candidate scores for (head, relation) queries: cosine(relation vector, x_t − x_h).
inline std::vector<double> score_tails(const Vec& relation, const EntityEmbeddings& e, const std::string& head,
                                       const std::vector<std::string>& candidates) {
  require(!candidates.empty(), "candidate set is empty");
  require(static_cast<std::size_t>(relation.size()) == e.dim(), "relation vector does not match entity embedding size");
  std::vector<double> s;
  s.reserve(candidates.size());
  for (const auto& t : candidates) s.push_back(cosine(relation, pair_offset(e, head, t)));
  return s;
}

// One offset sample per training triple of each relation in `relations`.
inline FeatureStore kgc_relation_features(const std::vector<KgTriple>& triples, const EntityEmbeddings& entities,
                                          const std::vector<std::string>& relations) {
  FeatureStore s(entities.dim(), FeatureKind::real);
  std::unordered_set<std::string> wanted(relations.begin(), relations.end());
  for (const auto& r : relations) s.add_class(r);
  for (const auto& t : triples)
    if (wanted.count(t.relation)) s.add(t.relation, pair_offset(entities, t.head, t.tail));
  for (const auto& r : relations)
    if (s.samples(r).empty()) throw ValidationError("relation '" + r + "' has no training triples");
  return s;
}

}  // namespace disento
