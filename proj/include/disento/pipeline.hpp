#pragma once

// Experiment orchestration: flat key-value configs, synthetic benchmarks,
// one function per stage, sweeps and case-study export. Every stage writes
// into an append-only output directory.

#include <filesystem>
#include <functional>

#include "disento/case_study.hpp"
#include "disento/gan.hpp"
#include "disento/gcn.hpp"

namespace disento {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config files

// `key = value` lines, '#' comments, keys like `encoder.epochs`.
struct ConfigFile {
  std::vector<std::pair<std::string, std::string>> entries;
  fs::path base_dir;

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries)
      if (k == key) {
        v = value;
        return;
      }
    entries.emplace_back(key, value);
  }
};

inline ConfigFile parse_config_text(const std::string& text, const std::string& source = "<config>") {
  ConfigFile cf;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, lineno, "expected 'key = value'");
    const std::string key(trim(t.substr(0, eq)));
    const std::string value(trim(t.substr(eq + 1)));
    if (key.empty()) throw ParseError(source, lineno, "empty key");
    if (!seen.insert(key).second) throw ParseError(source, lineno, "duplicate key '" + key + "'");
    cf.entries.emplace_back(key, value);
  }
  return cf;
}

inline ConfigFile load_config_file(const std::string& path) {
  auto cf = parse_config_text(read_file(path), path);
  cf.base_dir = fs::absolute(path).parent_path();
  return cf;
}

// ---------------------------------------------------------------------------
// Experiment config

struct SynthConfig {
  std::size_t n_classes = 10;
  std::size_t groups_a = 2;
  std::size_t groups_b = 5;
  std::size_t n_seen = 6;
  std::size_t feature_dim = 64;
  std::size_t n_per_class = 50;
  double noise = 0.1;
  double seen_test_fraction = 0.2;
  // kgc only
  std::size_t n_entities = 60;
  std::size_t entity_dim = 16;
  std::size_t heads_per_relation = 15;
};

struct KgcConfig {
  std::size_t transe_dim = 32;
  std::size_t transe_epochs = 300;
  std::size_t transe_batch = 16;
};

struct ExperimentConfig {
  std::string dataset = "synthetic";
  TaskKind task = TaskKind::imgc;
  std::string ontology, split, train_features, test_features, labels;
  std::string learner = "gcn";
  EncoderConfig encoder{.epochs = 500};
  GcnConfig gcn;
  GanConfig gan;
  bool n_synth_set = false;
  bool filtered_ranking = false;
  std::vector<std::size_t> hits{1, 5, 10};
  SynthConfig synth;
  KgcConfig kgc;
  std::uint64_t seed = 0;
  std::string output = "out";

  // Stage seeds are split off the root seed by fixed labels.
  std::uint64_t stage_seed(std::string_view label) const { return derive_seed(seed, label); }

  EncoderConfig encoder_config() const {
    EncoderConfig e = encoder;
    e.seed = stage_seed("encoder");
    if (!uses_aggregation(e.variant)) e.layers = 0;
    return e;
  }
  GcnConfig gcn_config() const {
    GcnConfig g = gcn;
    g.seed = stage_seed("gcn");
    return g;
  }
  GanConfig gan_config() const {
    GanConfig g = gan;
    g.seed = stage_seed("gan");
    if (!n_synth_set) g.n_synth_per_class = task == TaskKind::imgc ? 300 : 20;
    return g;
  }
};

struct ConfigKey {
  std::string name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const fs::path&)> set;
};

namespace detail {

inline std::size_t to_size(const std::string& v) {
  const auto x = parse_int(v);
  if (x < 0) throw ValidationError("expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

inline bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("expected true/false, got '" + v + "'");
}

inline std::string resolve(const std::string& v, const fs::path& base) {
  if (v.empty() || fs::path(v).is_absolute() || base.empty()) return v;
  return (base / v).lexically_normal().string();
}

template <typename T>
ConfigKey size_key(std::string name, T ExperimentConfig::*section, std::size_t T::*field) {
  return {std::move(name), [=](const ExperimentConfig& c) { return std::to_string(c.*section.*field); },
          [=](ExperimentConfig& c, const std::string& v, const fs::path&) { c.*section.*field = to_size(v); }};
}

template <typename T>
ConfigKey real_key(std::string name, T ExperimentConfig::*section, double T::*field) {
  return {std::move(name), [=](const ExperimentConfig& c) { return format_double(c.*section.*field); },
          [=](ExperimentConfig& c, const std::string& v, const fs::path&) { c.*section.*field = parse_double(v); }};
}

inline ConfigKey path_key(std::string name, std::string ExperimentConfig::*field) {
  return {std::move(name), [=](const ExperimentConfig& c) { return c.*field; },
          [=](ExperimentConfig& c, const std::string& v, const fs::path& base) { c.*field = resolve(v, base); }};
}

}  // namespace detail

inline const std::vector<ConfigKey>& config_keys() {
  using namespace detail;
  using E = ExperimentConfig;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back({"seed", [](const E& c) { return std::to_string(c.seed); },
                 [](E& c, const std::string& v, const fs::path&) { c.seed = static_cast<std::uint64_t>(to_size(v)); }});
    k.push_back({"dataset", [](const E& c) { return c.dataset; },
                 [](E& c, const std::string& v, const fs::path&) { c.dataset = v; }});
    k.push_back({"task", [](const E& c) { return to_string(c.task); },
                 [](E& c, const std::string& v, const fs::path&) { c.task = parse_task(v); }});
    k.push_back({"output", [](const E& c) { return c.output; },
                 [](E& c, const std::string& v, const fs::path& b) { c.output = resolve(v, b); }});
    k.push_back(path_key("data.ontology", &E::ontology));
    k.push_back(path_key("data.split", &E::split));
    k.push_back(path_key("data.train_features", &E::train_features));
    k.push_back(path_key("data.test_features", &E::test_features));
    k.push_back(path_key("data.labels", &E::labels));
    k.push_back({"learner", [](const E& c) { return c.learner; },
                 [](E& c, const std::string& v, const fs::path&) {
                   if (v != "gcn" && v != "gan") throw ValidationError("learner must be gcn or gan, got '" + v + "'");
                   c.learner = v;
                 }});
    k.push_back({"encoder.variant", [](const E& c) { return to_string(c.encoder.variant); },
                 [](E& c, const std::string& v, const fs::path&) { c.encoder.variant = parse_variant(v); }});
    k.push_back(size_key("encoder.d", &E::encoder, &EncoderConfig::d));
    k.push_back(size_key("encoder.layers", &E::encoder, &EncoderConfig::layers));
    k.push_back(size_key("encoder.epochs", &E::encoder, &EncoderConfig::epochs));
    k.push_back(size_key("encoder.batch_size", &E::encoder, &EncoderConfig::batch_size));
    k.push_back(real_key("encoder.learning_rate", &E::encoder, &EncoderConfig::learning_rate));
    k.push_back(real_key("encoder.label_smoothing", &E::encoder, &EncoderConfig::label_smoothing));
    k.push_back({"encoder.optimizer", [](const E& c) { return std::string(to_string(c.encoder.optimizer)); },
                 [](E& c, const std::string& v, const fs::path&) { c.encoder.optimizer = parse_optimizer(v); }});
    k.push_back(size_key("gcn.hidden", &E::gcn, &GcnConfig::hidden));
    k.push_back(size_key("gcn.layers", &E::gcn, &GcnConfig::layers));
    k.push_back(size_key("gcn.epochs", &E::gcn, &GcnConfig::epochs));
    k.push_back(real_key("gcn.tau", &E::gcn, &GcnConfig::tau));
    k.push_back(real_key("gcn.learning_rate", &E::gcn, &GcnConfig::learning_rate));
    k.push_back(real_key("gcn.leaky_slope", &E::gcn, &GcnConfig::leaky_slope));
    k.push_back({"gcn.optimizer", [](const E& c) { return std::string(to_string(c.gcn.optimizer)); },
                 [](E& c, const std::string& v, const fs::path&) { c.gcn.optimizer = parse_optimizer(v); }});
    k.push_back({"gcn.fusion", [](const E& c) { return std::string(to_string(c.gcn.fusion)); },
                 [](E& c, const std::string& v, const fs::path&) { c.gcn.fusion = parse_fusion(v); }});
    k.push_back(size_key("gan.noise_dim", &E::gan, &GanConfig::noise_dim));
    k.push_back(size_key("gan.hidden_g", &E::gan, &GanConfig::hidden_g));
    k.push_back(size_key("gan.hidden_d", &E::gan, &GanConfig::hidden_d));
    k.push_back(real_key("gan.lambda1", &E::gan, &GanConfig::lambda1));
    k.push_back(real_key("gan.lambda2", &E::gan, &GanConfig::lambda2));
    k.push_back(real_key("gan.beta", &E::gan, &GanConfig::beta));
    k.push_back(real_key("gan.lr_g", &E::gan, &GanConfig::lr_g));
    k.push_back(real_key("gan.lr_d", &E::gan, &GanConfig::lr_d));
    k.push_back(size_key("gan.d_steps_per_g_step", &E::gan, &GanConfig::d_steps_per_g_step));
    k.push_back(size_key("gan.epochs", &E::gan, &GanConfig::epochs));
    k.push_back(size_key("gan.batch_size", &E::gan, &GanConfig::batch_size));
    k.push_back({"gan.n_synth_per_class", [](const E& c) { return std::to_string(c.gan_config().n_synth_per_class); },
                 [](E& c, const std::string& v, const fs::path&) {
                   c.gan.n_synth_per_class = to_size(v);
                   c.n_synth_set = true;
                 }});
    k.push_back(size_key("gan.classifier_epochs", &E::gan, &GanConfig::classifier_epochs));
    k.push_back(real_key("gan.classifier_lr", &E::gan, &GanConfig::classifier_lr));
    k.push_back({"metrics.filtered", [](const E& c) { return std::string(c.filtered_ranking ? "true" : "false"); },
                 [](E& c, const std::string& v, const fs::path&) { c.filtered_ranking = to_bool(v); }});
    k.push_back({"metrics.hits",
                 [](const E& c) {
                   std::string s;
                   for (auto h : c.hits) s += (s.empty() ? "" : ",") + std::to_string(h);
                   return s;
                 },
                 [](E& c, const std::string& v, const fs::path&) {
                   c.hits.clear();
                   for (const auto& p : split(v, ',')) c.hits.push_back(to_size(std::string(trim(p))));
                 }});
    k.push_back(size_key("synth.n_classes", &E::synth, &SynthConfig::n_classes));
    k.push_back(size_key("synth.groups_a", &E::synth, &SynthConfig::groups_a));
    k.push_back(size_key("synth.groups_b", &E::synth, &SynthConfig::groups_b));
    k.push_back(size_key("synth.n_seen", &E::synth, &SynthConfig::n_seen));
    k.push_back(size_key("synth.feature_dim", &E::synth, &SynthConfig::feature_dim));
    k.push_back(size_key("synth.n_per_class", &E::synth, &SynthConfig::n_per_class));
    k.push_back(real_key("synth.noise", &E::synth, &SynthConfig::noise));
    k.push_back(real_key("synth.seen_test_fraction", &E::synth, &SynthConfig::seen_test_fraction));
    k.push_back(size_key("synth.n_entities", &E::synth, &SynthConfig::n_entities));
    k.push_back(size_key("synth.entity_dim", &E::synth, &SynthConfig::entity_dim));
    k.push_back(size_key("synth.heads_per_relation", &E::synth, &SynthConfig::heads_per_relation));
    k.push_back(size_key("kgc.transe_dim", &E::kgc, &KgcConfig::transe_dim));
    k.push_back(size_key("kgc.transe_epochs", &E::kgc, &KgcConfig::transe_epochs));
    k.push_back(size_key("kgc.transe_batch", &E::kgc, &KgcConfig::transe_batch));
    return k;
  }();
  return keys;
}

inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value,
                             const fs::path& base = {}) {
  for (const auto& k : config_keys())
    if (k.name == key) {
      try {
        k.set(c, value, base);
      } catch (const std::exception& e) {
        throw ValidationError("config key '" + key + "': " + e.what());
      }
      return;
    }
  throw ValidationError("unknown config key '" + key + "'");
}

inline void validate(const ExperimentConfig& c) {
  require(c.encoder.epochs >= 1, "encoder.epochs must be positive");
  require(c.encoder.batch_size >= 1, "encoder.batch_size must be positive");
  require(c.encoder.label_smoothing >= 0 && c.encoder.label_smoothing < 1, "encoder.label_smoothing must lie in [0,1)");
  require(c.encoder.learning_rate > 0, "encoder.learning_rate must be positive");
  c.gcn_config().validate();
  c.gan_config().validate();
  require(!c.hits.empty(), "metrics.hits must list at least one k");
  for (auto h : c.hits) require(h >= 1, "metrics.hits entries must be positive");
  require(!c.output.empty(), "output directory must be set");
}

inline ExperimentConfig experiment_config(const ConfigFile& cf) {
  ExperimentConfig c;
  for (const auto& [k, v] : cf.entries) set_config_value(c, k, v, cf.base_dir);
  validate(c);
  return c;
}

// Every key with its effective value, in declaration order.
inline std::string config_echo(const ExperimentConfig& c) {
  std::ostringstream out;
  for (const auto& k : config_keys()) out << k.name << " = " << k.get(c) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic benchmarks

struct SyntheticDataset {
  TaskKind task = TaskKind::imgc;
  Ontology ontology;
  std::vector<std::string> classes;
  std::array<std::vector<std::size_t>, 2> labels;
  DatasetSplit split;
  FeatureStore train, test;  // imgc
};

// Picks `n_seen` seen classes so that every group of both aspects still has a
// seen member; unseen classes are then compositions of seen factors.
inline std::vector<bool> choose_seen(const std::array<std::vector<std::size_t>, 2>& labels, std::size_t n_seen,
                                     Rng& rng) {
  const std::size_t n = labels[0].size();
  require(n_seen >= 1 && n_seen < n, "need at least one seen and one unseen class");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    shuffle(order, rng);
    std::vector<bool> seen(n, false);
    for (std::size_t i = 0; i < n_seen; ++i) seen[order[i]] = true;
    bool ok = true;
    for (std::size_t a = 0; a < 2 && ok; ++a)
      for (std::size_t i = 0; i < n && ok; ++i) {
        bool covered = false;
        for (std::size_t j = 0; j < n; ++j) covered |= seen[j] && labels[a][j] == labels[a][i];
        ok = covered;
      }
    if (ok) return seen;
  }
  throw ValidationError("cannot choose seen classes covering every factor group");
}

inline SyntheticDataset make_synthetic_imgc(const SynthConfig& s, std::uint64_t seed) {
  require(s.seen_test_fraction >= 0 && s.seen_test_fraction < 1, "seen_test_fraction must lie in [0,1)");
  SyntheticDataset d;
  d.task = TaskKind::imgc;
  auto onto = synth_ontology({s.n_classes, s.groups_a, s.groups_b, derive_seed(seed, "synth-ontology"), true});
  d.ontology = std::move(onto.ontology);
  d.classes = onto.classes;
  d.labels = onto.labels;
  Rng rng(derive_seed(seed, "synth-split"));
  const auto seen = choose_seen(d.labels, s.n_seen, rng);
  d.split.task = TaskKind::imgc;
  for (std::size_t i = 0; i < d.classes.size(); ++i) (seen[i] ? d.split.seen_classes : d.split.unseen_classes).push_back(d.classes[i]);
  const auto all = synth_features(d.classes, d.labels, s.feature_dim, s.n_per_class, s.noise, derive_seed(seed, "synth-features"));
  d.train = FeatureStore(s.feature_dim, FeatureKind::synthetic);
  d.test = FeatureStore(s.feature_dim, FeatureKind::synthetic);
  const auto n_test_seen = static_cast<std::size_t>(std::round(s.seen_test_fraction * static_cast<double>(s.n_per_class)));
  require(n_test_seen < s.n_per_class, "seen classes need at least one training sample");
  for (std::size_t i = 0; i < d.classes.size(); ++i) {
    const auto& samples = all.samples(d.classes[i]);
    for (std::size_t n = 0; n < samples.size(); ++n) {
      const bool to_test = !seen[i] || n >= samples.size() - n_test_seen;
      (to_test ? d.test : d.train).add(d.classes[i], samples[n]);
    }
  }
  return d;
}

// Relations are the ontology classes; a relation's translation vector is the
// sum of one random vector per factor group, and each triple's tail is the
// entity nearest to head + relation.
inline SyntheticDataset make_synthetic_kgc(const SynthConfig& s, std::uint64_t seed) {
  SyntheticDataset d;
  d.task = TaskKind::kgc;
  auto onto = synth_ontology({s.n_classes, s.groups_a, s.groups_b, derive_seed(seed, "synth-ontology"), true});
  d.ontology = std::move(onto.ontology);
  d.classes = onto.classes;
  d.labels = onto.labels;
  Rng rng(derive_seed(seed, "synth-split"));
  const auto seen = choose_seen(d.labels, s.n_seen, rng);
  require(s.n_entities >= 3 && s.entity_dim >= 1, "synthetic KG needs entities");
  Rng gen(derive_seed(seed, "synth-kg"));
  const auto ne = static_cast<Eigen::Index>(s.n_entities), de = static_cast<Eigen::Index>(s.entity_dim);
  const Mat x = normal_mat(gen, ne, de, 1.0);
  const Mat fa = normal_mat(gen, static_cast<Eigen::Index>(s.groups_a), de, 1.0);
  const Mat fb = normal_mat(gen, static_cast<Eigen::Index>(s.groups_b), de, 1.0);
  auto ent = [](Eigen::Index i) { return "ent_" + std::string(i < 10 ? "0" : "") + std::to_string(i); };
  std::vector<KgTriple> train, test;
  std::vector<std::size_t> heads(s.n_entities);
  std::iota(heads.begin(), heads.end(), 0);
  for (std::size_t r = 0; r < d.classes.size(); ++r) {
    const Eigen::RowVectorXd rel = fa.row(static_cast<Eigen::Index>(d.labels[0][r])) + fb.row(static_cast<Eigen::Index>(d.labels[1][r]));
    shuffle(heads, gen);
    for (std::size_t k = 0; k < std::min(s.heads_per_relation, heads.size()); ++k) {
      const auto h = static_cast<Eigen::Index>(heads[k]);
      const Eigen::RowVectorXd target = x.row(h) + rel;
      Eigen::Index best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index t = 0; t < ne; ++t) {
        if (t == h) continue;
        const double dist = (x.row(t) - target).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = t;
        }
      }
      (seen[r] ? train : test).push_back({ent(h), d.classes[r], ent(best)});
    }
  }
  d.split.task = TaskKind::kgc;
  for (std::size_t i = 0; i < d.classes.size(); ++i) (seen[i] ? d.split.seen_classes : d.split.unseen_classes).push_back(d.classes[i]);
  d.split.kgc_train = train;
  std::unordered_set<std::string> known;
  for (const auto& t : train) {
    known.insert(t.head);
    known.insert(t.tail);
  }
  for (const auto& t : test)
    if (known.count(t.head) && known.count(t.tail)) d.split.kgc_test.push_back(t);
  require(!d.split.kgc_test.empty(), "synthetic KG produced no evaluable test triples");
  return d;
}

inline SyntheticDataset make_synthetic_dataset(const ExperimentConfig& c) {
  const auto seed = c.stage_seed("synth");
  return c.task == TaskKind::imgc ? make_synthetic_imgc(c.synth, seed) : make_synthetic_kgc(c.synth, seed);
}

inline std::string labels_tsv(const std::vector<std::string>& classes, const std::array<std::vector<std::size_t>, 2>& labels) {
  std::ostringstream out;
  for (std::size_t i = 0; i < classes.size(); ++i) out << classes[i] << '\t' << labels[0][i] << '\t' << labels[1][i] << '\n';
  return out.str();
}

struct ClassLabels {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> labels;  // [aspect][class]
};

inline ClassLabels parse_labels_tsv(const std::string& text, const std::string& source = "<labels>") {
  ClassLabels out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto f = split(t, '\t');
    if (f.size() < 2) throw ParseError(source, lineno, "expected '<class>\\t<label>...'");
    if (out.labels.empty()) out.labels.resize(f.size() - 1);
    if (f.size() - 1 != out.labels.size()) throw ParseError(source, lineno, "inconsistent label count");
    out.classes.push_back(f[0]);
    for (std::size_t a = 1; a < f.size(); ++a) out.labels[a - 1].push_back(detail::to_size(f[a]));
  }
  return out;
}

// Writes the dataset files plus `dataset.cfg` pointing at them.
inline std::string write_synthetic_dataset(const SyntheticDataset& d, const fs::path& dir) {
  fs::create_directories(dir);
  io::write_artifact(dir / "ontology.tsv", serialize_triples(d.ontology));
  std::string cfg = std::string("# synthetic ") + to_string(d.task) + " benchmark\n";
  cfg += std::string("task = ") + to_string(d.task) + "\n";
  cfg += "data.ontology = ontology.tsv\n";
  cfg += "data.split = split.txt\n";
  cfg += "data.labels = labels.tsv\n";
  if (d.task == TaskKind::imgc) {
    io::write_artifact(dir / "split.txt", serialize_split(d.split, "", "", ""));
    save_features(d.train, (dir / "train_features.tsv").string());
    save_features(d.test, (dir / "test_features.tsv").string());
    cfg += "data.train_features = train_features.tsv\ndata.test_features = test_features.tsv\n";
  } else {
    io::write_artifact(dir / "kg_train.tsv", serialize_kg_triples(d.split.kgc_train));
    io::write_artifact(dir / "kg_valid.tsv", serialize_kg_triples(d.split.kgc_valid));
    io::write_artifact(dir / "kg_test.tsv", serialize_kg_triples(d.split.kgc_test));
    io::write_artifact(dir / "split.txt", serialize_split(d.split, "kg_train.tsv", "kg_valid.tsv", "kg_test.tsv"));
  }
  io::write_artifact(dir / "labels.tsv", labels_tsv(d.classes, d.labels));
  io::write_artifact(dir / "dataset.cfg", cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// Loaded inputs

struct TaskData {
  Ontology ontology;
  DatasetSplit split;
  FeatureStore train, test;      // imgc
  EntityEmbeddings entities;     // kgc
  FeatureStore relation_features;  // kgc, seen relations
  std::vector<std::string> warnings;

  std::vector<std::string> classes() const {
    auto c = split.seen_classes;
    c.insert(c.end(), split.unseen_classes.begin(), split.unseen_classes.end());
    return c;
  }
};

inline TransEModel kgc_entity_model(const ExperimentConfig& c, const DatasetSplit& s) {
  EncoderConfig ec;
  ec.epochs = c.kgc.transe_epochs;
  ec.batch_size = c.kgc.transe_batch;
  ec.seed = c.stage_seed("transe");
  return transe_baseline(kg_as_ontology(s.kgc_train), c.kgc.transe_dim, ec);
}

inline TaskData load_task_data(const ExperimentConfig& c) {
  require(!c.ontology.empty(), "data.ontology is not set");
  require(!c.split.empty(), "data.split is not set");
  TaskData d;
  d.ontology = parse_triples(c.ontology);
  d.split = load_split(c.split, d.ontology);
  require(d.split.task == c.task, std::string("split file declares task '") + to_string(d.split.task) + "' but config says '" +
                                      to_string(c.task) + "'");
  if (c.task == TaskKind::imgc) {
    require(!c.train_features.empty() && !c.test_features.empty(), "imgc needs data.train_features and data.test_features");
    d.train = load_features(c.train_features);
    d.test = load_features(c.test_features);
    require(d.train.feature_dim == d.test.feature_dim, "train and test features differ in dimension");
    for (const auto* s : {&d.train, &d.test}) d.warnings.insert(d.warnings.end(), s->warnings.begin(), s->warnings.end());
    for (const auto& cls : d.split.seen_classes)
      if (!d.train.contains(cls) || d.train.samples(cls).empty())
        throw ValidationError("seen class '" + cls + "' has no training features");
    for (const auto& cls : d.split.unseen_classes)
      if (d.train.contains(cls) && !d.train.samples(cls).empty())
        throw ValidationError("unseen class '" + cls + "' has training features");
  } else {
    d.entities = EntityEmbeddings(kgc_entity_model(c, d.split));
    d.relation_features = kgc_relation_features(d.split.kgc_train, d.entities, d.split.seen_classes);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Stages

struct StageError : Error {
  std::string stage;
  StageError(std::string s, const std::string& what) : Error("[" + s + "] " + what), stage(std::move(s)) {}
};

template <typename F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline std::string history_csv(const std::vector<std::pair<std::string, const std::vector<double>*>>& cols) {
  std::ostringstream out;
  out << "epoch";
  for (const auto& [name, v] : cols) out << ',' << name;
  out << '\n';
  const std::size_t n = cols.empty() ? 0 : cols[0].second->size();
  for (std::size_t i = 0; i < n; ++i) {
    out << i;
    for (const auto& [name, v] : cols) out << ',' << format_double((*v)[i]);
    out << '\n';
  }
  return out.str();
}

inline void write_config_echo(const ExperimentConfig& c, const fs::path& out) {
  fs::create_directories(out);
  const auto p = out / "config.echo";
  if (fs::exists(p) && read_file(p.string()) != config_echo(c))
    throw ValidationError("output directory '" + out.string() +
                          "' already holds artifacts of a different config; use a fresh output directory");
  io::write_artifact(p, config_echo(c));
}

struct IngestSummary {
  std::size_t concepts = 0, properties = 0, triples = 0, seen = 0, unseen = 0, train_samples = 0, test_samples = 0,
              kg_train = 0, kg_test = 0;
  std::vector<std::string> warnings;
};

inline IngestSummary stage_ingest(const ExperimentConfig& c) {
  return run_stage("ingest", [&] {
    const auto d = load_task_data(c);
    IngestSummary s;
    s.concepts = d.ontology.num_concepts();
    s.properties = d.ontology.num_properties();
    s.triples = d.ontology.triples.size();
    s.seen = d.split.seen_classes.size();
    s.unseen = d.split.unseen_classes.size();
    s.train_samples = d.train.total();
    s.test_samples = d.test.total();
    s.kg_train = d.split.kgc_train.size();
    s.kg_test = d.split.kgc_test.size();
    s.warnings = d.warnings;
    const fs::path out(c.output);
    write_config_echo(c, out);
    nlohmann::ordered_json j{{"concepts", s.concepts},       {"properties", s.properties},
                             {"triples", s.triples},         {"seen_classes", s.seen},
                             {"unseen_classes", s.unseen},   {"train_samples", s.train_samples},
                             {"test_samples", s.test_samples}, {"kg_train", s.kg_train},
                             {"kg_test", s.kg_test},         {"warnings", s.warnings}};
    io::write_artifact(out / "ingest.json", j.dump(2) + "\n");
    return s;
  });
}

inline ComponentEmbeddingTable stage_train_encoder(const ExperimentConfig& c) {
  return run_stage("train-encoder", [&] {
    const auto o = parse_triples(c.ontology);
    auto res = train_encoder(o, c.encoder_config());
    const auto table = encode(res.encoder);
    const fs::path out(c.output);
    write_config_echo(c, out);
    save_embeddings(table, (out / "embeddings.tsv").string());
    encoder_checkpoint(res.encoder).save((out / "encoder.ckpt").string());
    io::write_artifact(out / "encoder_history.csv", history_csv({{"loss", &res.loss_history}}));
    return table;
  });
}

inline ComponentEmbeddingTable load_stage_embeddings(const ExperimentConfig& c) {
  const auto p = fs::path(c.output) / "embeddings.tsv";
  if (!fs::exists(p)) throw ValidationError("missing " + p.string() + "; run train-encoder first");
  return load_embeddings(p.string());
}

inline void write_entity_embeddings(const TaskData& d, const fs::path& out) {
  if (d.split.task != TaskKind::kgc) return;
  ComponentEmbeddingTable t{d.entities.ids, {"entity"}, d.entities.dim(), d.entities.vectors};
  save_embeddings(t, (out / "entity_embeddings.tsv").string());
}

inline GcnTrainResult stage_train_gcn(const ExperimentConfig& c) {
  return run_stage("train-gcn", [&] {
    const auto d = load_task_data(c);
    const auto table = load_stage_embeddings(c);
    const auto classes = d.classes();
    const auto cfg = c.gcn_config();
    const auto graphs = build_semantic_graphs(table, classes, cfg.tau);
    const auto gt = c.task == TaskKind::imgc ? ground_truth_classifiers(d.train, d.split.seen_classes)
                                             : ground_truth_classifiers(d.relation_features, d.split.seen_classes);
    auto res = train_gcn(graphs, classes, gt, cfg);
    const fs::path out(c.output);
    write_config_echo(c, out);
    write_entity_embeddings(d, out);
    fs::create_directories(out / "graphs");
    for (const auto& g : graphs)
      io::write_artifact(out / "graphs" / ("aspect_" + std::to_string(g.aspect) + ".tsv"), graph_edges_tsv(g, classes));
    classifier_archive(res.classifiers).save((out / "classifiers.ckpt").string());
    io::write_artifact(out / "gcn_history.csv", history_csv({{"loss", &res.loss_history}}));
    return res;
  });
}

inline GanModel stage_train_gan(const ExperimentConfig& c) {
  return run_stage("train-gan", [&] {
    const auto d = load_task_data(c);
    const auto table = load_stage_embeddings(c);
    const auto cfg = c.gan_config();
    const auto& real = c.task == TaskKind::imgc ? d.train : d.relation_features;
    auto m = train_gan(table, real, d.split.seen_classes, cfg);
    const fs::path out(c.output);
    write_config_echo(c, out);
    write_entity_embeddings(d, out);
    gan_checkpoint(m).save((out / "gan.ckpt").string());
    io::write_artifact(out / "gan_history.csv",
                       history_csv({{"loss_d", &m.history.loss_d}, {"loss_g", &m.history.loss_g}, {"gap", &m.history.gap}}));
    const auto synth = synthesize_dataset(m.g, d.split.unseen_classes, table, cfg.n_synth_per_class,
                                          c.stage_seed("gan-synthesize"), cfg.leaky_slope);
    save_features(synth, (out / "synthetic_unseen.bin").string());
    return m;
  });
}

struct Evaluation {
  MetricsRecord metrics;
  std::string predictions_csv;
  std::vector<std::string> warnings;
};

// Ranks of the true tail for every test triple. `score(query)` returns one
// score per candidate in `candidates` order.
inline RankResult kgc_ranks(const std::vector<KgTriple>& queries, const std::vector<std::string>& candidates,
                            const std::function<std::vector<double>(const KgTriple&)>& score,
                            const std::vector<KgTriple>& known, bool filtered) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < candidates.size(); ++i) pos.emplace(candidates[i], i);
  RankResult ranks;
  for (const auto& q : queries) {
    auto it = pos.find(q.tail);
    if (it == pos.end()) throw ValidationError("test tail '" + q.tail + "' is not a candidate entity");
    std::vector<std::size_t> skip;
    if (filtered)
      for (const auto& k : known)
        if (k.head == q.head && k.relation == q.relation && k.tail != q.tail) skip.push_back(pos.at(k.tail));
    ranks.push_back(rank_of(score(q), it->second, skip));
  }
  return ranks;
}

inline void add_ranking_metrics(MetricsRecord& r, const RankResult& ranks, const std::vector<std::size_t>& ks) {
  const auto m = mrr_and_hits(ranks, ks);
  r.values["mrr"] = m.mrr;
  for (const auto& [k, h] : m.hits) r.values["hit@" + std::to_string(k)] = h;
  r.values["queries"] = static_cast<double>(ranks.size());
}

inline Evaluation stage_evaluate(const ExperimentConfig& c) {
  return run_stage("evaluate", [&] {
    const auto d = load_task_data(c);
    const fs::path out(c.output);
    Evaluation ev;
    ev.metrics = {c.dataset, to_string(c.encoder.variant), c.learner, c.seed, {}};
    std::ostringstream pred;
    const auto& seen = d.split.seen_classes;
    const auto& unseen = d.split.unseen_classes;

    ClassifierMatrix classifiers;
    Generator gen;
    ComponentEmbeddingTable table;
    const auto gan_cfg = c.gan_config();
    FeatureStore synth;
    if (c.learner == "gcn") {
      const auto p = out / "classifiers.ckpt";
      if (!fs::exists(p)) throw ValidationError("missing " + p.string() + "; run train-gcn first");
      classifiers = classifiers_from_archive(TensorArchive::load(p.string()));
    } else {
      const auto p = out / "gan.ckpt";
      if (!fs::exists(p)) throw ValidationError("missing " + p.string() + "; run train-gan first");
      gen = generator_from_checkpoint(TensorArchive::load(p.string()));
      table = load_stage_embeddings(c);
      if (c.task == TaskKind::imgc) synth = load_features((out / "synthetic_unseen.bin").string());
    }

    if (c.task == TaskKind::imgc) {
      std::vector<std::string> unseen_ids, all_ids;
      std::vector<std::size_t> unseen_rows;
      const auto all_classes = d.classes();
      const auto [x_all, y_all] = d.test.stacked(d.test.classes());
      std::unordered_set<std::string> unseen_set(unseen.begin(), unseen.end());
      for (Eigen::Index i = 0; i < x_all.rows(); ++i) {
        const auto& label = d.test.classes()[y_all[static_cast<std::size_t>(i)]];
        all_ids.push_back(label);
        if (unseen_set.count(label)) {
          unseen_ids.push_back(label);
          unseen_rows.push_back(static_cast<std::size_t>(i));
        }
      }
      Mat x_unseen(static_cast<Eigen::Index>(unseen_rows.size()), x_all.cols());
      for (std::size_t r = 0; r < unseen_rows.size(); ++r) x_unseen.row(static_cast<Eigen::Index>(r)) = x_all.row(static_cast<Eigen::Index>(unseen_rows[r]));
      std::vector<std::string> p_std, p_gen;
      if (c.learner == "gcn") {
        p_std = predict_by_classifiers(classifiers, x_unseen, unseen);
        p_gen = predict_by_classifiers(classifiers, x_all, all_classes);
      } else {
        p_std = predict_imgc(synth, d.train, seen, unseen, x_unseen, ZslMode::standard, gan_cfg);
        p_gen = predict_imgc(synth, d.train, seen, unseen, x_all, ZslMode::generalized, gan_cfg);
      }
      const auto acc_zsl = macro_accuracy(p_std, unseen_ids, unseen);
      std::vector<std::string> ps, ls, pu, lu;
      for (std::size_t i = 0; i < all_ids.size(); ++i) {
        const bool u = unseen_set.count(all_ids[i]) > 0;
        (u ? pu : ps).push_back(p_gen[i]);
        (u ? lu : ls).push_back(all_ids[i]);
      }
      const auto acc_s = macro_accuracy(ps, ls, seen);
      const auto acc_u = macro_accuracy(pu, lu, unseen);
      for (const auto* m : {&acc_zsl, &acc_s, &acc_u}) ev.warnings.insert(ev.warnings.end(), m->warnings.begin(), m->warnings.end());
      ev.metrics.values["acc_zsl"] = acc_zsl.value;
      ev.metrics.values["acc_seen"] = acc_s.value;
      ev.metrics.values["acc_unseen"] = acc_u.value;
      ev.metrics.values["H"] = harmonic_mean_H(acc_s.value, acc_u.value);
      pred << "sample,label,standard,generalized\n";
      std::size_t k = 0;
      for (std::size_t i = 0; i < all_ids.size(); ++i) {
        const bool u = unseen_set.count(all_ids[i]) > 0;
        pred << i << ',' << all_ids[i] << ',' << (u ? p_std[k++] : "") << ',' << p_gen[i] << '\n';
      }
    } else {
      const auto candidates = d.split.entities();
      std::vector<KgTriple> known = d.split.kgc_train;
      known.insert(known.end(), d.split.kgc_valid.begin(), d.split.kgc_valid.end());
      known.insert(known.end(), d.split.kgc_test.begin(), d.split.kgc_test.end());
      std::map<std::string, Vec> prototypes;
      if (c.learner == "gcn") {
        for (const auto& r : unseen) prototypes[r] = classifiers.weights.row(classifiers.row(r)).transpose();
      } else {
        Rng rng(c.stage_seed("gan-prototypes"));
        for (const auto& r : unseen)
          prototypes[r] = class_prototype(gen, table.concatenated(table.concept_index(r)), gan_cfg.n_synth_per_class, rng,
                                          gan_cfg.leaky_slope);
      }
      std::vector<std::vector<double>> all_scores;
      auto score = [&](const KgTriple& q) {
        auto it = prototypes.find(q.relation);
        if (it == prototypes.end()) throw ValidationError("test relation '" + q.relation + "' is not unseen");
        all_scores.push_back(score_tails(it->second, d.entities, q.head, candidates));
        return all_scores.back();
      };
      const auto ranks = kgc_ranks(d.split.kgc_test, candidates, score, known, c.filtered_ranking);
      add_ranking_metrics(ev.metrics, ranks, c.hits);
      pred << "query,head,relation,tail,rank,top10\n";
      for (std::size_t i = 0; i < ranks.size(); ++i) {
        const auto& q = d.split.kgc_test[i];
        const auto order = rank_order(all_scores[i]);
        pred << i << ',' << q.head << ',' << q.relation << ',' << q.tail << ',' << ranks[i] << ',';
        for (std::size_t k = 0; k < std::min<std::size_t>(10, order.size()); ++k) pred << (k ? " " : "") << candidates[order[k]];
        pred << '\n';
      }
    }
    ev.predictions_csv = pred.str();
    write_config_echo(c, out);
    io::write_artifact(out / "metrics.json", metrics_json({ev.metrics}));
    io::write_artifact(out / "metrics.csv", metrics_csv({ev.metrics}));
    io::write_artifact(out / "predictions.csv", ev.predictions_csv);
    return ev;
  });
}

struct Report {
  std::string config_echo;
  Evaluation evaluation;
  std::vector<double> encoder_loss, learner_loss;
};

inline Report run_experiment(const ExperimentConfig& c) {
  Report r;
  r.config_echo = config_echo(c);
  stage_train_encoder(c);
  if (c.learner == "gcn")
    r.learner_loss = stage_train_gcn(c).loss_history;
  else
    r.learner_loss = stage_train_gan(c).history.loss_g;
  r.evaluation = stage_evaluate(c);
  return r;
}

// ---------------------------------------------------------------------------
// Sweeps

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

// "key=v1,v2,..."
inline GridAxis parse_grid_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw ValidationError("grid axis must look like key=v1,v2 (got '" + spec + "')");
  GridAxis a{std::string(trim(spec.substr(0, eq))), {}};
  for (const auto& v : split(spec.substr(eq + 1), ','))
    if (!trim(v).empty()) a.values.emplace_back(trim(v));
  require(!a.key.empty() && !a.values.empty(), "grid axis '" + spec + "' has no values");
  return a;
}

struct SweepCell {
  std::vector<std::pair<std::string, std::string>> point;
  std::string status = "ok";
  MetricsRecord metrics;
};

inline std::vector<std::vector<std::pair<std::string, std::string>>> grid_points(const std::vector<GridAxis>& grid) {
  require(!grid.empty(), "sweep grid is empty");
  std::vector<std::vector<std::pair<std::string, std::string>>> pts{{}};
  for (const auto& axis : grid) {
    require(!axis.values.empty(), "grid axis '" + axis.key + "' has no values");
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& p : pts)
      for (const auto& v : axis.values) {
        auto q = p;
        q.emplace_back(axis.key, v);
        next.push_back(std::move(q));
      }
    pts = std::move(next);
  }
  return pts;
}

inline std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::set<std::string> names;
  for (const auto& c : cells)
    for (const auto& [k, v] : c.metrics.values) names.insert(k);
  std::ostringstream out;
  out << "cell";
  if (!cells.empty())
    for (const auto& [k, v] : cells[0].point) out << ',' << k;
  out << ",dataset,variant,learner,seed,status";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    out << i;
    for (const auto& [k, v] : c.point) out << ',' << v;
    std::string status = c.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << ',' << c.metrics.dataset << ',' << c.metrics.variant << ',' << c.metrics.learner << ',' << c.metrics.seed << ','
        << status;
    for (const auto& n : names) {
      out << ',';
      if (auto it = c.metrics.values.find(n); it != c.metrics.values.end()) out << format_double(it->second);
    }
    out << '\n';
  }
  return out.str();
}

// One full run per grid point in out/sweep/cell_<i>; failing cells are recorded
// and the sweep moves on.
inline std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::vector<GridAxis>& grid) {
  const auto points = grid_points(grid);
  std::vector<SweepCell> cells;
  for (std::size_t i = 0; i < points.size(); ++i) {
    SweepCell cell;
    cell.point = points[i];
    ExperimentConfig c = base;
    c.output = (fs::path(base.output) / "sweep" / ("cell_" + std::to_string(i))).string();
    cell.metrics = {c.dataset, to_string(c.encoder.variant), c.learner, c.seed, {}};
    try {
      for (const auto& [k, v] : cell.point) set_config_value(c, k, v);
      validate(c);
      cell.metrics = run_experiment(c).evaluation.metrics;
    } catch (const std::exception& e) {
      cell.status = std::string("failed: ") + e.what();
    }
    cells.push_back(std::move(cell));
  }
  fs::create_directories(base.output);
  io::write_artifact(fs::path(base.output) / "sweep.csv", sweep_csv(cells));
  return cells;
}

// ---------------------------------------------------------------------------
// Case study

struct CaseStudyResult {
  CaseStudyExport files;
  std::optional<DisentanglementReport> report;
};

// Exports every ontology class listed in the labels file (or all split
// classes when no labels are configured).
inline CaseStudyResult stage_export_case_study(const ExperimentConfig& c, std::size_t n_neighbors = 2) {
  return run_stage("export-case-study", [&] {
    const auto table = load_stage_embeddings(c);
    std::vector<std::string> names;
    std::vector<std::vector<std::size_t>> labels;
    if (!c.labels.empty()) {
      auto l = parse_labels_tsv(read_file(c.labels), c.labels);
      names = l.classes;
      labels = l.labels;
    } else {
      const auto o = parse_triples(c.ontology);
      names = load_split(c.split, o).seen_classes;
      const auto u = load_split(c.split, o).unseen_classes;
      names.insert(names.end(), u.begin(), u.end());
    }
    std::vector<std::size_t> rows;
    for (const auto& n : names) rows.push_back(table.concept_index(n));
    CaseStudyResult r;
    r.files = export_case_study(table, rows, labels, n_neighbors);
    if (!labels.empty() && labels.size() == table.num_components()) r.report = disentanglement_report(table, rows, labels);
    const fs::path out(c.output);
    write_config_echo(c, out);
    io::write_artifact(out / "case_study_coordinates.csv", r.files.coordinates_csv);
    io::write_artifact(out / "case_study_neighbors.csv", r.files.neighbors_csv);
    if (r.report) {
      std::ostringstream s;
      s << "component,label_aspect,purity,chance\n";
      for (std::size_t k = 0; k < r.report->purity.size(); ++k)
        for (std::size_t a = 0; a < r.report->purity[k].size(); ++a)
          s << table.aspects[k] << ',' << a << ',' << format_double(r.report->purity[k][a]) << ','
            << format_double(r.report->chance[a]) << '\n';
      io::write_artifact(out / "case_study_purity.csv", s.str());
    }
    return r;
  });
}

}  // namespace disento
