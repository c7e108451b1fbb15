#pragma once

// Classifier propagation: per-aspect cosine graphs over task classes, a
// two-layer GCN whose weights are shared by all graphs, fusion of the
// per-aspect outputs and MSE regression onto seen-class feature means.

#include "disento/archive.hpp"
#include "disento/features.hpp"
#include "disento/metrics.hpp"

namespace disento {

struct SemanticGraph {
  std::size_t aspect = 0;
  std::string aspect_id;
  Mat adjacency;  // m x m, 0/1, symmetric, unit diagonal
  Mat features;   // m x (d/K)
};

inline std::vector<SemanticGraph> build_semantic_graphs(const ComponentEmbeddingTable& table,
                                                        const std::vector<std::string>& classes, double tau) {
  require(tau > -1 && tau < 1, "similarity threshold must lie in (-1, 1)");
  require(!classes.empty(), "semantic graph needs at least one class");
  const auto m = static_cast<Eigen::Index>(classes.size());
  std::vector<std::size_t> rows;
  for (const auto& c : classes) rows.push_back(table.concept_index(c));
  std::vector<SemanticGraph> out;
  for (std::size_t k = 0; k < table.num_components(); ++k) {
    SemanticGraph g{k, table.aspects[k], Mat::Zero(m, m), Mat(m, static_cast<Eigen::Index>(table.dim))};
    for (Eigen::Index i = 0; i < m; ++i) {
      g.features.row(i) = table.component(rows[i], k).transpose();
      if (g.features.row(i).squaredNorm() == 0)
        throw ValidationError("class '" + classes[i] + "' has a zero-norm component for aspect '" + table.aspects[k] + "'");
    }
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        if (i != j && cosine(g.features.row(i).transpose(), g.features.row(j).transpose()) > tau) g.adjacency(i, j) = 1;
    g.adjacency = g.adjacency.cwiseMax(g.adjacency.transpose()).eval();
    g.adjacency.diagonal().setOnes();
    out.push_back(std::move(g));
  }
  return out;
}

inline Mat normalize_adjacency(const Mat& a) {
  require(a.rows() == a.cols(), "adjacency must be square");
  const Vec deg = a.rowwise().sum();
  for (Eigen::Index i = 0; i < deg.size(); ++i)
    if (!(deg[i] > 0)) throw ValidationError("adjacency row " + std::to_string(i) + " has zero degree");
  const Vec s = deg.cwiseSqrt().cwiseInverse();
  return s.asDiagonal() * a * s.asDiagonal();
}

// One edge per unordered pair (self-loops omitted).
inline std::string graph_edges_tsv(const SemanticGraph& g, const std::vector<std::string>& classes) {
  std::ostringstream out;
  out << "# aspect " << g.aspect_id << '\n';
  for (Eigen::Index i = 0; i < g.adjacency.rows(); ++i)
    for (Eigen::Index j = i + 1; j < g.adjacency.cols(); ++j)
      if (g.adjacency(i, j) != 0) out << classes[i] << '\t' << classes[j] << '\n';
  return out.str();
}

enum class FusionMode { average, linear };

inline FusionMode parse_fusion(std::string_view s) {
  if (s == "average") return FusionMode::average;
  if (s == "linear") return FusionMode::linear;
  throw ValidationError("unknown fusion mode '" + std::string(s) + "'");
}
inline const char* to_string(FusionMode f) { return f == FusionMode::average ? "average" : "linear"; }

struct GcnConfig {
  std::size_t hidden = 64;
  std::size_t layers = 2;
  double tau = 0.95;
  FusionMode fusion = FusionMode::average;
  double learning_rate = 1e-3;
  std::size_t epochs = 500;
  double leaky_slope = 0.2;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;

  void validate() const {
    require(layers >= 1, "GCN needs at least one layer");
    require(hidden >= 1, "GCN hidden size must be positive");
    require(learning_rate > 0 && std::isfinite(learning_rate), "GCN learning rate must be positive");
    require(tau > -1 && tau < 1, "similarity threshold must lie in (-1, 1)");
  }
};

// Flat parameter vector: Φ^0..Φ^{L-1}, then W₁ (KF x F) for linear fusion.
struct GcnParams {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  std::vector<Eigen::Index> offsets;
  Eigen::Index fusion_offset = -1;
  Eigen::Index fusion_rows = 0, out_dim = 0;
  Vec flat;

  GcnParams() = default;
  GcnParams(std::size_t in_dim, std::size_t hidden, std::size_t out, std::size_t layers, std::size_t n_aspects,
            FusionMode fusion) {
    Eigen::Index off = 0, prev = static_cast<Eigen::Index>(in_dim);
    out_dim = static_cast<Eigen::Index>(out);
    for (std::size_t l = 0; l < layers; ++l) {
      const Eigen::Index cols = l + 1 == layers ? out_dim : static_cast<Eigen::Index>(hidden);
      shapes.emplace_back(prev, cols);
      offsets.push_back(off);
      off += prev * cols;
      prev = cols;
    }
    if (fusion == FusionMode::linear) {
      fusion_offset = off;
      fusion_rows = static_cast<Eigen::Index>(n_aspects) * out_dim;
      off += fusion_rows * out_dim;
    }
    flat = Vec::Zero(off);
  }

  std::size_t layers() const { return shapes.size(); }
  bool linear_fusion() const { return fusion_offset >= 0; }

  Eigen::Map<Mat> phi(std::size_t l) { return {flat.data() + offsets[l], shapes[l].first, shapes[l].second}; }
  Eigen::Map<const Mat> phi(std::size_t l) const {
    return {flat.data() + offsets[l], shapes[l].first, shapes[l].second};
  }
  Eigen::Map<Mat> w1() {
    require(linear_fusion(), "average fusion has no W1");
    return {flat.data() + fusion_offset, fusion_rows, out_dim};
  }
  Eigen::Map<const Mat> w1() const {
    require(linear_fusion(), "average fusion has no W1");
    return {flat.data() + fusion_offset, fusion_rows, out_dim};
  }
  GcnParams zeros_like() const {
    GcnParams g = *this;
    g.flat.setZero();
    return g;
  }
};

// Stacked (1/K)·I blocks: linear fusion then starts out equal to averaging.
inline Mat block_average_w1(std::size_t k, std::size_t f) {
  Mat w = Mat::Zero(static_cast<Eigen::Index>(k * f), static_cast<Eigen::Index>(f));
  for (std::size_t b = 0; b < k; ++b)
    w.block(static_cast<Eigen::Index>(b * f), 0, static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(f))
        .diagonal()
        .setConstant(1.0 / static_cast<double>(k));
  return w;
}

inline GcnParams init_gcn_params(std::size_t in_dim, std::size_t out_dim, std::size_t n_aspects, const GcnConfig& cfg) {
  cfg.validate();
  GcnParams p(in_dim, cfg.hidden, out_dim, cfg.layers, n_aspects, cfg.fusion);
  Rng rng(derive_seed(cfg.seed, "gcn-init"));
  for (std::size_t l = 0; l < p.layers(); ++l) {
    const auto [r, c] = p.shapes[l];
    p.phi(l) = normal_mat(rng, r, c, std::sqrt(2.0 / static_cast<double>(r + c)));
  }
  if (p.linear_fusion()) p.w1() = block_average_w1(n_aspects, out_dim);
  return p;
}

inline Mat fuse_average(const std::vector<Mat>& zs) {
  require(!zs.empty(), "fusion needs at least one aspect output");
  // Running mean: identical inputs come back bit-exact.
  Mat out = zs[0];
  for (std::size_t k = 1; k < zs.size(); ++k) {
    require(zs[k].rows() == out.rows() && zs[k].cols() == out.cols(), "aspect outputs differ in shape");
    out += (zs[k] - out) / static_cast<double>(k + 1);
  }
  return out;
}

inline Mat concat_columns(const std::vector<Mat>& zs) {
  require(!zs.empty(), "fusion needs at least one aspect output");
  const Eigen::Index m = zs[0].rows(), f = zs[0].cols();
  Mat cat(m, f * static_cast<Eigen::Index>(zs.size()));
  for (std::size_t k = 0; k < zs.size(); ++k) {
    require(zs[k].rows() == m && zs[k].cols() == f, "aspect outputs differ in shape");
    cat.middleCols(static_cast<Eigen::Index>(k) * f, f) = zs[k];
  }
  return cat;
}

inline Mat fuse_linear(const std::vector<Mat>& zs, const Eigen::Ref<const Mat>& w1) {
  const Mat cat = concat_columns(zs);
  require(w1.rows() == cat.cols(), "W1 rows must equal K*F");
  return cat * w1;
}

struct GcnForward {
  std::vector<Mat> norm_adj;                   // per aspect
  std::vector<std::vector<Mat>> pre, act;      // [k][l]: pre-activation, layer input (act[k][0] = S_k)
  std::vector<Mat> outputs;                    // Z_k
  Mat fused;
};

inline double leaky(double x, double slope) { return x > 0 ? x : slope * x; }

inline GcnForward gcn_forward(const std::vector<SemanticGraph>& graphs, const GcnParams& p, double slope) {
  require(!graphs.empty(), "propagation needs at least one graph");
  GcnForward fw;
  for (const auto& g : graphs) {
    require(g.features.cols() == p.shapes[0].first, "graph features do not match the first GCN layer");
    fw.norm_adj.push_back(normalize_adjacency(g.adjacency));
    const Mat& a = fw.norm_adj.back();
    std::vector<Mat> pre, act{g.features};
    for (std::size_t l = 0; l < p.layers(); ++l) {
      pre.push_back(a * act.back() * p.phi(l));
      if (l + 1 < p.layers())
        act.push_back(pre.back().unaryExpr([slope](double x) { return leaky(x, slope); }));
    }
    fw.outputs.push_back(pre.back());
    fw.pre.push_back(std::move(pre));
    fw.act.push_back(std::move(act));
  }
  fw.fused = p.linear_fusion() ? fuse_linear(fw.outputs, p.w1()) : fuse_average(fw.outputs);
  if (!fw.fused.allFinite()) throw DivergenceError("GCN output is not finite");
  return fw;
}

inline std::vector<Mat> propagate(const std::vector<SemanticGraph>& graphs, const GcnParams& p, double slope = 0.2) {
  return gcn_forward(graphs, p, slope).outputs;
}

struct ClassifierMatrix {
  std::vector<std::string> classes;
  Mat weights;  // m x F
  std::vector<bool> seen;

  std::size_t row(const std::string& id) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == id) return i;
    throw ValidationError("no classifier for class '" + id + "'");
  }
};

// Seen-class targets: the mean training feature of each class.
inline ClassifierMatrix ground_truth_classifiers(const FeatureStore& store, const std::vector<std::string>& seen) {
  ClassifierMatrix c;
  c.classes = seen;
  c.weights = Mat(static_cast<Eigen::Index>(seen.size()), static_cast<Eigen::Index>(store.feature_dim));
  for (std::size_t i = 0; i < seen.size(); ++i) c.weights.row(i) = store.mean(seen[i]).transpose();
  c.seen.assign(seen.size(), true);
  return c;
}

// Targets aligned to graph rows; rows without a target are ignored.
struct GcnTargets {
  Mat values;                         // m x F
  std::vector<std::size_t> rows;      // graph rows carrying a target
};

inline GcnTargets align_targets(const ClassifierMatrix& gt, const std::vector<std::string>& classes) {
  GcnTargets t;
  t.values = Mat::Zero(static_cast<Eigen::Index>(classes.size()), gt.weights.cols());
  for (std::size_t i = 0; i < classes.size(); ++i)
    for (std::size_t j = 0; j < gt.classes.size(); ++j)
      if (gt.classes[j] == classes[i]) {
        t.values.row(i) = gt.weights.row(j);
        t.rows.push_back(i);
      }
  require(!t.rows.empty(), "no target classifier matches a graph class");
  return t;
}

// Mean over target rows of the squared distance between fused and target rows.
inline double gcn_loss(const std::vector<SemanticGraph>& graphs, const GcnParams& p, const GcnTargets& t, double slope,
                       GcnParams* grad = nullptr) {
  auto fw = gcn_forward(graphs, p, slope);
  require(fw.fused.cols() == t.values.cols(), "target classifier size does not match GCN output");
  const double n = static_cast<double>(t.rows.size());
  Mat d_fused = Mat::Zero(fw.fused.rows(), fw.fused.cols());
  double loss = 0;
  for (auto r : t.rows) {
    const Eigen::RowVectorXd diff = fw.fused.row(r) - t.values.row(r);
    loss += diff.squaredNorm();
    d_fused.row(r) = 2.0 * diff / n;
  }
  loss /= n;
  if (!grad) return loss;
  *grad = p.zeros_like();
  const std::size_t K = graphs.size();
  std::vector<Mat> d_out(K);
  if (p.linear_fusion()) {
    grad->w1() = concat_columns(fw.outputs).transpose() * d_fused;
    const Mat d_cat = d_fused * p.w1().transpose();
    for (std::size_t k = 0; k < K; ++k) d_out[k] = d_cat.middleCols(static_cast<Eigen::Index>(k) * p.out_dim, p.out_dim);
  } else {
    for (std::size_t k = 0; k < K; ++k) d_out[k] = d_fused / static_cast<double>(K);
  }
  for (std::size_t k = 0; k < K; ++k) {
    const Mat& a = fw.norm_adj[k];
    Mat d_pre = d_out[k];
    for (std::size_t l = p.layers(); l-- > 0;) {
      const Mat ad = a.transpose() * d_pre;
      grad->phi(l) += fw.act[k][l].transpose() * ad;
      if (l == 0) break;
      const Mat d_act = ad * p.phi(l).transpose();
      d_pre = d_act.cwiseProduct(fw.pre[k][l - 1].unaryExpr([slope](double x) { return x > 0 ? 1.0 : slope; }));
    }
  }
  return loss;
}

struct GcnTrainResult {
  GcnParams params;
  std::vector<double> loss_history;
  ClassifierMatrix classifiers;
};

inline GcnTrainResult train_gcn(const std::vector<SemanticGraph>& graphs, const std::vector<std::string>& classes,
                                const ClassifierMatrix& gt, const GcnConfig& cfg) {
  cfg.validate();
  require(!graphs.empty(), "train_gcn needs at least one graph");
  require(static_cast<std::size_t>(graphs[0].features.rows()) == classes.size(), "graph rows must match classes");
  const auto targets = align_targets(gt, classes);
  GcnTrainResult res;
  res.params = init_gcn_params(static_cast<std::size_t>(graphs[0].features.cols()),
                               static_cast<std::size_t>(gt.weights.cols()), graphs.size(), cfg);
  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  GcnParams grad;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double loss = gcn_loss(graphs, res.params, targets, cfg.leaky_slope, &grad);
    if (!std::isfinite(loss) || !grad.flat.allFinite())
      throw DivergenceError("GCN loss became non-finite at epoch " + std::to_string(e));
    res.loss_history.push_back(loss);
    opt.step(res.params.flat, grad.flat);
  }
  res.classifiers.classes = classes;
  res.classifiers.weights = gcn_forward(graphs, res.params, cfg.leaky_slope).fused;
  res.classifiers.seen.assign(classes.size(), false);
  for (auto r : targets.rows) res.classifiers.seen[r] = true;
  return res;
}

// Argmax of cosine(classifier row, feature) over `allowed` (in that order;
// ties go to the earlier class). Returns class ids.
inline std::vector<std::string> predict_by_classifiers(const ClassifierMatrix& w, const Mat& features,
                                                       const std::vector<std::string>& allowed) {
  require(!allowed.empty(), "label set is empty");
  require(features.cols() == w.weights.cols(), "feature size does not match classifier size");
  std::vector<std::size_t> rows;
  for (const auto& c : allowed) rows.push_back(w.row(c));
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Vec x = features.row(i).transpose();
    std::size_t best = 0;
    double best_s = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < rows.size(); ++c) {
      const double s = cosine(w.weights.row(rows[c]).transpose(), x);
      if (s > best_s) {
        best_s = s;
        best = c;
      }
    }
    out.push_back(allowed[best]);
  }
  return out;
}

inline TensorArchive classifier_archive(const ClassifierMatrix& c) {
  TensorArchive a;
  a.set_meta("kind", "classifiers");
  a.set_meta("count", std::to_string(c.classes.size()));
  for (std::size_t i = 0; i < c.classes.size(); ++i) a.set_meta("class." + std::to_string(i), c.classes[i]);
  Mat seen(1, static_cast<Eigen::Index>(c.seen.size()));
  for (std::size_t i = 0; i < c.seen.size(); ++i) seen(0, static_cast<Eigen::Index>(i)) = c.seen[i] ? 1 : 0;
  a.put("weights", c.weights);
  a.put("seen", seen);
  return a;
}

inline ClassifierMatrix classifiers_from_archive(const TensorArchive& a) {
  require(a.get_meta("kind") == "classifiers", "archive does not hold classifiers");
  ClassifierMatrix c;
  const auto n = static_cast<std::size_t>(parse_int(a.get_meta("count")));
  for (std::size_t i = 0; i < n; ++i) c.classes.push_back(a.get_meta("class." + std::to_string(i)));
  c.weights = a.get("weights");
  const Mat& seen = a.get("seen");
  require(static_cast<std::size_t>(c.weights.rows()) == n && static_cast<std::size_t>(seen.cols()) == n,
          "classifier archive is inconsistent");
  for (std::size_t i = 0; i < n; ++i) c.seen.push_back(seen(0, static_cast<Eigen::Index>(i)) != 0);
  return c;
}

}  // namespace disento
