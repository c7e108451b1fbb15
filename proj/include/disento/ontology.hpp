#pragma once

// Ontology parsing, validation, inverse/self augmentation, neighborhood
// indexing, dataset splits and synthetic ontologies with known factors.

#include "disento/common.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace disento {

inline constexpr std::string_view kInverseSuffix = "#inv";
inline constexpr std::string_view kSelfProperty = "#self";

enum class PropertyKind { original, inverse, self };

struct Concept {
  std::string id;
  std::size_t index = 0;
};

struct Property {
  std::string id;
  std::size_t index = 0;
  PropertyKind kind = PropertyKind::original;
  // For inverse properties: index of the original. Unused otherwise.
  std::size_t inverse_of = 0;
};

struct OntologyTriple {
  std::size_t head = 0;
  std::size_t property = 0;
  std::size_t tail = 0;

  friend auto operator<=>(const OntologyTriple&, const OntologyTriple&) = default;
};

class Ontology {
 public:
  std::vector<Concept> concepts;
  std::vector<Property> properties;
  std::vector<OntologyTriple> triples;
  // Property ids selected as scoring aspects, in component order.
  std::vector<std::string> aspect_properties;

  std::size_t num_concepts() const { return concepts.size(); }
  std::size_t num_properties() const { return properties.size(); }

  std::size_t num_original_properties() const {
    return static_cast<std::size_t>(std::count_if(properties.begin(), properties.end(),
                                                  [](const Property& p) { return p.kind == PropertyKind::original; }));
  }

  bool is_augmented() const {
    return std::any_of(properties.begin(), properties.end(),
                       [](const Property& p) { return p.kind == PropertyKind::self; });
  }

  std::optional<std::size_t> find_concept(std::string_view id) const {
    auto it = concept_lookup_.find(std::string(id));
    if (it == concept_lookup_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> find_property(std::string_view id) const {
    auto it = property_lookup_.find(std::string(id));
    if (it == property_lookup_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t concept_index(std::string_view id) const {
    if (auto i = find_concept(id)) return *i;
    throw ValidationError("unknown concept '" + std::string(id) + "'");
  }

  std::size_t property_index(std::string_view id) const {
    if (auto i = find_property(id)) return *i;
    throw ValidationError("unknown property '" + std::string(id) + "'");
  }

  // Property index of each scoring aspect, in aspect order.
  std::vector<std::size_t> aspect_property_indices() const {
    std::vector<std::size_t> out;
    out.reserve(aspect_properties.size());
    for (const auto& a : aspect_properties) out.push_back(property_index(a));
    return out;
  }

  // Triples over original properties only (the scoring set).
  std::vector<OntologyTriple> original_triples() const {
    std::vector<OntologyTriple> out;
    for (const auto& t : triples)
      if (properties[t.property].kind == PropertyKind::original) out.push_back(t);
    return out;
  }

  std::size_t add_concept(const std::string& id) {
    if (auto i = find_concept(id)) return *i;
    const std::size_t idx = concepts.size();
    concepts.push_back({id, idx});
    concept_lookup_.emplace(id, idx);
    return idx;
  }

  std::size_t add_property(const std::string& id, PropertyKind kind = PropertyKind::original,
                           std::size_t inverse_of = 0) {
    if (auto i = find_property(id)) return *i;
    const std::size_t idx = properties.size();
    properties.push_back({id, idx, kind, inverse_of});
    property_lookup_.emplace(id, idx);
    return idx;
  }

  // Inserts unless already present; returns whether it was new.
  bool add_triple(std::size_t h, std::size_t p, std::size_t t) {
    OntologyTriple tr{h, p, t};
    if (!triple_set_.insert(tr).second) return false;
    triples.push_back(tr);
    return true;
  }

  bool contains(std::size_t h, std::size_t p, std::size_t t) const {
    return triple_set_.count(OntologyTriple{h, p, t}) > 0;
  }

  void validate() const {
    for (std::size_t i = 0; i < concepts.size(); ++i)
      require(concepts[i].index == i, "concept indices must be contiguous");
    for (std::size_t i = 0; i < properties.size(); ++i)
      require(properties[i].index == i, "property indices must be contiguous");
    for (const auto& t : triples)
      require(t.head < concepts.size() && t.tail < concepts.size() && t.property < properties.size(),
              "triple index out of range");
    require(!aspect_properties.empty(), "ontology needs at least one aspect property");
    std::set<std::string> seen;
    for (const auto& a : aspect_properties) {
      auto idx = find_property(a);
      require(idx.has_value(), "aspect property '" + a + "' does not occur in any triple");
      require(properties[*idx].kind == PropertyKind::original,
              "aspect property '" + a + "' must be an original property");
      require(seen.insert(a).second, "aspect property '" + a + "' listed twice");
    }
  }

 private:
  std::unordered_map<std::string, std::size_t> concept_lookup_;
  std::unordered_map<std::string, std::size_t> property_lookup_;
  std::set<OntologyTriple> triple_set_;
};

namespace detail {
inline bool is_reserved_property_id(std::string_view id) {
  return id == kSelfProperty ||
         (id.size() >= kInverseSuffix.size() && id.substr(id.size() - kInverseSuffix.size()) == kInverseSuffix);
}
}  // namespace detail

// Parses the `@aspect <property>` header plus tab-separated head/property/tail
// lines. Blank lines are skipped. Without a header every property is an aspect.
inline Ontology parse_triples_text(const std::string& text, const std::string& source = "<memory>") {
  Ontology o;
  std::vector<std::pair<std::string, std::size_t>> aspects;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (trim(raw).empty()) continue;
    if (raw.rfind("@aspect", 0) == 0) {
      auto name = std::string(trim(std::string_view(raw).substr(7)));
      if (name.empty()) throw ParseError(source, lineno, "@aspect without a property name");
      aspects.emplace_back(name, lineno);
      continue;
    }
    auto fields = split(raw, '\t');
    if (fields.size() != 3)
      throw ParseError(source, lineno, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    for (const auto& f : fields)
      if (f.empty()) throw ParseError(source, lineno, "empty field");
    if (detail::is_reserved_property_id(fields[1]))
      throw ParseError(source, lineno, "property id '" + fields[1] + "' collides with a reserved augmentation id");
    const auto h = o.add_concept(fields[0]);
    const auto p = o.add_property(fields[1]);
    const auto t = o.add_concept(fields[2]);
    o.add_triple(h, p, t);
  }
  if (aspects.empty()) {
    for (const auto& p : o.properties) o.aspect_properties.push_back(p.id);
  } else {
    for (const auto& [name, line] : aspects) {
      if (!o.find_property(name))
        throw ValidationError(source + ":" + std::to_string(line) + ": aspect property '" + name +
                              "' does not occur in any triple");
      o.aspect_properties.push_back(name);
    }
  }
  o.validate();
  return o;
}

inline Ontology parse_triples(const std::string& path) { return parse_triples_text(read_file(path), path); }

// Writes original triples only; augmentation is recomputed on load.
inline std::string serialize_triples(const Ontology& o) {
  std::ostringstream out;
  for (const auto& a : o.aspect_properties) out << "@aspect " << a << '\n';
  for (const auto& t : o.triples) {
    if (o.properties[t.property].kind != PropertyKind::original) continue;
    out << o.concepts[t.head].id << '\t' << o.properties[t.property].id << '\t' << o.concepts[t.tail].id << '\n';
  }
  return out.str();
}

struct AugmentedOntology {
  Ontology ontology;
  // Number of components used by aggregation variants: one per augmented property.
  std::size_t k_agg = 0;
  // Number of scoring aspects.
  std::size_t k_score = 0;
  std::size_t self_property = 0;
};

// Adds `<p>#inv` for each original property, inverse triples, and `#self`.
// Property layout afterwards: originals [0,P), inverses [P,2P), self at 2P.
inline AugmentedOntology augment_ontology(const Ontology& src) {
  require(!src.is_augmented(), "ontology is already augmented");
  const std::size_t P = src.num_properties();
  require(P > 0, "cannot augment an ontology with no properties");
  src.validate();

  Ontology o;
  for (const auto& c : src.concepts) o.add_concept(c.id);
  for (const auto& p : src.properties) o.add_property(p.id);
  for (std::size_t i = 0; i < P; ++i) {
    const std::string inv = src.properties[i].id + std::string(kInverseSuffix);
    require(!src.find_property(inv), "inverse property id collision: '" + inv + "'");
    o.add_property(inv, PropertyKind::inverse, i);
  }
  const auto self = o.add_property(std::string(kSelfProperty), PropertyKind::self);
  for (const auto& t : src.triples) o.add_triple(t.head, t.property, t.tail);
  for (const auto& t : src.triples) o.add_triple(t.tail, P + t.property, t.head);
  o.aspect_properties = src.aspect_properties;

  AugmentedOntology out;
  out.k_agg = 2 * P + 1;
  out.k_score = src.aspect_properties.size();
  out.self_property = self;
  out.ontology = std::move(o);
  return out;
}

struct Neighbor {
  std::size_t node = 0;
  std::size_t property = 0;
  friend auto operator<=>(const Neighbor&, const Neighbor&) = default;
};

// Per-concept (neighbor, property) pairs over the augmented triple set,
// including the self pair, sorted by (neighbor, property).
class NeighborhoodIndex {
 public:
  NeighborhoodIndex() = default;

  explicit NeighborhoodIndex(const AugmentedOntology& aug) : self_property_(aug.self_property) {
    const auto& o = aug.ontology;
    lists_.resize(o.num_concepts());
    for (const auto& t : o.triples) lists_[t.head].push_back({t.tail, t.property});
    for (std::size_t i = 0; i < lists_.size(); ++i) {
      lists_[i].push_back({i, self_property_});
      std::sort(lists_[i].begin(), lists_[i].end());
    }
  }

  std::size_t size() const { return lists_.size(); }
  std::size_t self_property() const { return self_property_; }

  const std::vector<Neighbor>& of(std::size_t c) const {
    if (c >= lists_.size())
      throw ValidationError("concept index " + std::to_string(c) + " out of range [0, " +
                            std::to_string(lists_.size()) + ")");
    return lists_[c];
  }

 private:
  std::vector<std::vector<Neighbor>> lists_;
  std::size_t self_property_ = 0;
};

inline const std::vector<Neighbor>& neighborhood(const NeighborhoodIndex& idx, std::size_t c) { return idx.of(c); }

// ---------------------------------------------------------------------------
// Synthetic two-aspect ontology

struct SynthOntologySpec {
  std::size_t n_classes = 12;
  std::size_t n_groups_a = 3;
  std::size_t n_groups_b = 4;
  std::uint64_t seed = 0;
  // Give every class its own (group_a, group_b) pair.
  bool distinct_pairs = false;
};

struct SynthOntology {
  Ontology ontology;
  std::vector<std::string> classes;
  // labels[aspect][class] = ground-truth group.
  std::array<std::vector<std::size_t>, 2> labels;
};

inline constexpr const char* kSynthPropertyA = "subClassOf";
inline constexpr const char* kSynthPropertyB = "hasAttribute";

// Each class links to one taxonomy group node via property A and one attribute
// group node via property B. Group assignment is a seeded balanced shuffle per
// aspect, drawn independently so the aspects are not confounded.
inline SynthOntology synth_ontology(const SynthOntologySpec& spec) {
  require(spec.n_groups_a >= 1 && spec.n_groups_b >= 1, "synthetic ontology needs at least one group per aspect");
  require(spec.n_classes >= spec.n_groups_a && spec.n_classes >= spec.n_groups_b,
          "synthetic ontology needs n_classes >= groups for every aspect");
  Rng rng(derive_seed(spec.seed, "synth-ontology"));
  SynthOntology out;
  const std::array<std::size_t, 2> groups{spec.n_groups_a, spec.n_groups_b};
  if (!spec.distinct_pairs) {
    for (std::size_t a = 0; a < 2; ++a) {
      auto& lab = out.labels[a];
      for (std::size_t i = 0; i < spec.n_classes; ++i) lab.push_back(i % groups[a]);
      shuffle(lab, rng);
    }
  } else {
    require(spec.n_classes <= groups[0] * groups[1], "distinct pairs need n_classes <= n_groups_a * n_groups_b");
    std::vector<std::size_t> cells(groups[0] * groups[1]);
    std::iota(cells.begin(), cells.end(), 0);
    // Redraw until every group of both aspects is used.
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw ValidationError("could not cover every group with distinct pairs");
      shuffle(cells, rng);
      std::vector<bool> used_a(groups[0]), used_b(groups[1]);
      for (std::size_t i = 0; i < spec.n_classes; ++i) {
        used_a[cells[i] / groups[1]] = true;
        used_b[cells[i] % groups[1]] = true;
      }
      if (std::all_of(used_a.begin(), used_a.end(), std::identity{}) &&
          std::all_of(used_b.begin(), used_b.end(), std::identity{}))
        break;
    }
    for (std::size_t i = 0; i < spec.n_classes; ++i) {
      out.labels[0].push_back(cells[i] / groups[1]);
      out.labels[1].push_back(cells[i] % groups[1]);
    }
  }
  auto pad = [](std::size_t i, std::size_t width) {
    std::string s = std::to_string(i);
    return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
  };
  const std::size_t w = std::to_string(spec.n_classes).size();
  Ontology& o = out.ontology;
  for (std::size_t i = 0; i < spec.n_classes; ++i) {
    out.classes.push_back("class_" + pad(i, w));
    o.add_concept(out.classes.back());
  }
  const auto pa = o.add_property(kSynthPropertyA);
  const auto pb = o.add_property(kSynthPropertyB);
  for (std::size_t i = 0; i < spec.n_classes; ++i) {
    const auto g = o.add_concept("taxon_" + std::to_string(out.labels[0][i]));
    o.add_triple(i, pa, g);
  }
  for (std::size_t i = 0; i < spec.n_classes; ++i) {
    const auto g = o.add_concept("attr_" + std::to_string(out.labels[1][i]));
    o.add_triple(i, pb, g);
  }
  o.aspect_properties = {kSynthPropertyA, kSynthPropertyB};
  o.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Dataset splits

enum class TaskKind { imgc, kgc };

inline TaskKind parse_task(std::string_view s) {
  if (s == "imgc") return TaskKind::imgc;
  if (s == "kgc") return TaskKind::kgc;
  throw ValidationError("unknown task '" + std::string(s) + "'");
}

inline const char* to_string(TaskKind t) { return t == TaskKind::imgc ? "imgc" : "kgc"; }

struct KgTriple {
  std::string head, relation, tail;
  friend bool operator==(const KgTriple&, const KgTriple&) = default;
};

struct DatasetSplit {
  TaskKind task = TaskKind::imgc;
  std::vector<std::string> seen_classes;
  std::vector<std::string> unseen_classes;
  std::vector<KgTriple> kgc_train, kgc_valid, kgc_test;

  // Training entity vocabulary in first-appearance order.
  std::vector<std::string> entities() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& t : kgc_train)
      for (const auto* e : {&t.head, &t.tail})
        if (seen.insert(*e).second) out.push_back(*e);
    return out;
  }

  std::vector<std::string> all_classes() const {
    auto v = seen_classes;
    v.insert(v.end(), unseen_classes.begin(), unseen_classes.end());
    return v;
  }
};

inline std::vector<KgTriple> parse_kg_triples_text(const std::string& text, const std::string& source) {
  std::vector<KgTriple> out;
  std::set<std::tuple<std::string, std::string, std::string>> dedup;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (trim(raw).empty()) continue;
    auto f = split(raw, '\t');
    if (f.size() != 3) throw ParseError(source, lineno, "expected 3 tab-separated fields");
    if (dedup.emplace(f[0], f[1], f[2]).second) out.push_back({f[0], f[1], f[2]});
  }
  return out;
}

inline std::string serialize_kg_triples(const std::vector<KgTriple>& ts) {
  std::string out;
  for (const auto& t : ts) out += t.head + '\t' + t.relation + '\t' + t.tail + '\n';
  return out;
}

inline void validate_split(const DatasetSplit& s, const Ontology& o) {
  std::unordered_set<std::string> seen(s.seen_classes.begin(), s.seen_classes.end());
  std::unordered_set<std::string> unseen(s.unseen_classes.begin(), s.unseen_classes.end());
  require(seen.size() == s.seen_classes.size(), "duplicate id in seen class list");
  require(unseen.size() == s.unseen_classes.size(), "duplicate id in unseen class list");
  for (const auto& c : s.seen_classes) {
    require(!unseen.count(c), "class '" + c + "' is both seen and unseen");
    require(o.find_concept(c).has_value(), "seen class '" + c + "' is not an ontology concept");
  }
  for (const auto& c : s.unseen_classes)
    require(o.find_concept(c).has_value(), "unseen class '" + c + "' is not an ontology concept");
  if (s.task != TaskKind::kgc) return;
  require(!s.kgc_train.empty(), "kgc split has no training triples");
  std::unordered_set<std::string> train_entities;
  for (const auto& t : s.kgc_train) {
    require(seen.count(t.relation), "training relation '" + t.relation + "' is not a seen class");
    train_entities.insert(t.head);
    train_entities.insert(t.tail);
  }
  auto check_eval = [&](const std::vector<KgTriple>& ts, const char* name) {
    for (const auto& t : ts) {
      for (const auto* e : {&t.head, &t.tail})
        require(train_entities.count(*e),
                std::string(name) + " entity '" + *e + "' never appears in training triples (closed entity set)");
    }
  };
  check_eval(s.kgc_valid, "validation");
  check_eval(s.kgc_test, "test");
  for (const auto& t : s.kgc_test)
    require(unseen.count(t.relation), "test relation '" + t.relation + "' is not an unseen class");
}

// Split file: `@task imgc|kgc`, then `@seen` / `@unseen` sections of one id
// per line, and for kgc `@kgc_train|@kgc_valid|@kgc_test <path>` (relative
// paths resolve against the split file's directory).
inline DatasetSplit load_split(const std::string& path, const Ontology& o) {
  DatasetSplit s;
  const auto base = std::filesystem::path(path).parent_path();
  enum class Section { none, seen, unseen } section = Section::none;
  bool have_task = false;
  std::size_t lineno = 0;
  for (const auto& raw : read_lines(path)) {
    ++lineno;
    auto line = std::string(trim(raw));
    if (line.empty()) continue;
    if (line[0] == '@') {
      auto sp = line.find_first_of(" \t");
      auto key = line.substr(0, sp);
      auto val = sp == std::string::npos ? std::string() : std::string(trim(std::string_view(line).substr(sp)));
      if (key == "@task") {
        try {
          s.task = parse_task(val);
        } catch (const ValidationError& e) {
          throw ParseError(path, lineno, e.what());
        }
        have_task = true;
      } else if (key == "@seen") {
        section = Section::seen;
      } else if (key == "@unseen") {
        section = Section::unseen;
      } else if (key == "@kgc_train" || key == "@kgc_valid" || key == "@kgc_test") {
        if (val.empty()) throw ParseError(path, lineno, key + " needs a path");
        auto p = std::filesystem::path(val);
        if (p.is_relative()) p = base / p;
        auto ts = parse_kg_triples_text(read_file(p.string()), p.string());
        (key == "@kgc_train" ? s.kgc_train : key == "@kgc_valid" ? s.kgc_valid : s.kgc_test) = std::move(ts);
        section = Section::none;
      } else {
        throw ParseError(path, lineno, "unknown directive '" + key + "'");
      }
      continue;
    }
    if (section == Section::seen)
      s.seen_classes.push_back(line);
    else if (section == Section::unseen)
      s.unseen_classes.push_back(line);
    else
      throw ParseError(path, lineno, "id outside of a @seen/@unseen section");
  }
  if (!have_task) throw ParseError(path, lineno, "missing @task directive");
  validate_split(s, o);
  return s;
}

inline std::string serialize_split(const DatasetSplit& s, const std::string& train_path = "",
                                   const std::string& valid_path = "", const std::string& test_path = "") {
  std::ostringstream out;
  out << "@task " << to_string(s.task) << "\n@seen\n";
  for (const auto& c : s.seen_classes) out << c << '\n';
  out << "@unseen\n";
  for (const auto& c : s.unseen_classes) out << c << '\n';
  if (s.task == TaskKind::kgc) {
    if (!train_path.empty()) out << "@kgc_train " << train_path << '\n';
    if (!valid_path.empty()) out << "@kgc_valid " << valid_path << '\n';
    if (!test_path.empty()) out << "@kgc_test " << test_path << '\n';
  }
  return out.str();
}

}  // namespace disento
