#pragma once

// Conditional WGAN-GP feature generator. G maps [z, c] to a feature vector,
// D scores [x, c]; c is the concatenated class embedding. Gradients are
// written out by hand, including the penalty's dependence on D's weights.

#include "disento/archive.hpp"
#include "disento/features.hpp"
#include "disento/metrics.hpp"

namespace disento {

// in -> hidden (leaky) -> out (identity). Flat layout: W1 (hidden x in), b1,
// W2 (out x hidden), b2.
struct Mlp {
  Eigen::Index in = 0, hidden = 0, out = 0;
  Vec flat;

  Mlp() = default;
  Mlp(Eigen::Index i, Eigen::Index h, Eigen::Index o) : in(i), hidden(h), out(o), flat(Vec::Zero(size(i, h, o))) {}

  static Eigen::Index size(Eigen::Index i, Eigen::Index h, Eigen::Index o) { return h * i + h + o * h + o; }

  Eigen::Map<Mat> w1() { return {flat.data(), hidden, in}; }
  Eigen::Map<const Mat> w1() const { return {flat.data(), hidden, in}; }
  Eigen::Map<Vec> b1() { return {flat.data() + hidden * in, hidden}; }
  Eigen::Map<const Vec> b1() const { return {flat.data() + hidden * in, hidden}; }
  Eigen::Map<Mat> w2() { return {flat.data() + hidden * in + hidden, out, hidden}; }
  Eigen::Map<const Mat> w2() const { return {flat.data() + hidden * in + hidden, out, hidden}; }
  Eigen::Map<Vec> b2() { return {flat.data() + hidden * in + hidden + out * hidden, out}; }
  Eigen::Map<const Vec> b2() const { return {flat.data() + hidden * in + hidden + out * hidden, out}; }

  void init(Rng& rng) {
    w1() = normal_mat(rng, hidden, in, std::sqrt(2.0 / static_cast<double>(in + hidden)));
    b1().setZero();
    w2() = normal_mat(rng, out, hidden, std::sqrt(2.0 / static_cast<double>(hidden + out)));
    b2().setZero();
  }
};

struct MlpCache {
  Mat x, a, h, y;
};

inline Mat leaky_mat(const Mat& a, double slope) {
  return a.unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
}
inline Mat leaky_grad(const Mat& a, double slope) {
  return a.unaryExpr([slope](double v) { return v > 0 ? 1.0 : slope; });
}

inline MlpCache mlp_forward(const Mlp& m, Mat x, double slope) {
  require(x.cols() == m.in, "network input has length " + std::to_string(x.cols()) + ", expected " +
                                std::to_string(m.in));
  MlpCache c;
  c.x = std::move(x);
  c.a = (c.x * m.w1().transpose()).rowwise() + m.b1().transpose();
  c.h = leaky_mat(c.a, slope);
  c.y = (c.h * m.w2().transpose()).rowwise() + m.b2().transpose();
  return c;
}

// Accumulates parameter gradients into `grad` (same layout as m.flat) and
// returns d/dx.
inline Mat mlp_backward(const Mlp& m, const MlpCache& c, const Mat& dy, double slope, Mlp& grad) {
  const Mat da = (dy * m.w2()).cwiseProduct(leaky_grad(c.a, slope));
  grad.w2() += dy.transpose() * c.h;
  grad.b2() += dy.colwise().sum().transpose();
  grad.w1() += da.transpose() * c.x;
  grad.b1() += da.colwise().sum().transpose();
  return da * m.w1();
}

inline Mat hcat(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows(), "row count mismatch");
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

struct GanConfig {
  std::size_t noise_dim = 16;
  std::size_t hidden_g = 128;
  std::size_t hidden_d = 128;
  double lambda1 = 0.01;
  double lambda2 = 5.0;
  double beta = 10.0;
  double lr_g = 1e-3;
  double lr_d = 1e-3;
  std::size_t d_steps_per_g_step = 5;
  // One epoch is one generator update preceded by d_steps_per_g_step critic updates.
  std::size_t epochs = 2000;
  std::size_t batch_size = 64;
  std::size_t n_synth_per_class = 300;
  double leaky_slope = 0.2;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  // Softmax head used for L_cls and for the final classifier.
  std::size_t classifier_epochs = 50;
  double classifier_lr = 1e-2;
  std::uint64_t seed = 0;

  void validate() const {
    require(noise_dim > 0 && hidden_g > 0 && hidden_d > 0, "GAN layer sizes must be positive");
    require(d_steps_per_g_step > 0 && batch_size > 0, "GAN step counts must be positive");
    for (double v : {lambda1, lambda2, beta, lr_g, lr_d, classifier_lr})
      require(std::isfinite(v) && v >= 0, "GAN coefficients must be finite and non-negative");
    require(lr_g > 0 && lr_d > 0, "GAN learning rates must be positive");
  }
};

struct Generator {
  Mlp net;
  std::size_t noise_dim = 0, cond_dim = 0;
};
struct Discriminator {
  Mlp net;
  std::size_t feature_dim = 0, cond_dim = 0;
};

inline Generator make_generator(std::size_t noise_dim, std::size_t cond_dim, std::size_t hidden, std::size_t feature_dim) {
  return {Mlp(static_cast<Eigen::Index>(noise_dim + cond_dim), static_cast<Eigen::Index>(hidden),
              static_cast<Eigen::Index>(feature_dim)),
          noise_dim, cond_dim};
}
inline Discriminator make_discriminator(std::size_t feature_dim, std::size_t cond_dim, std::size_t hidden) {
  return {Mlp(static_cast<Eigen::Index>(feature_dim + cond_dim), static_cast<Eigen::Index>(hidden), 1), feature_dim,
          cond_dim};
}

inline Mat generate_batch(const Generator& g, const Mat& z, const Mat& c, double slope = 0.2) {
  require(static_cast<std::size_t>(z.cols()) == g.noise_dim, "noise vector length mismatch");
  require(static_cast<std::size_t>(c.cols()) == g.cond_dim, "class embedding length mismatch");
  return mlp_forward(g.net, hcat(z, c), slope).y;
}

inline Vec generate(const Generator& g, const Vec& z, const Vec& c, double slope = 0.2) {
  return generate_batch(g, z.transpose(), c.transpose(), slope).row(0).transpose();
}

inline Vec discriminate(const Discriminator& d, const Mat& x, const Mat& c, double slope = 0.2) {
  require(static_cast<std::size_t>(x.cols()) == d.feature_dim, "feature length mismatch");
  require(static_cast<std::size_t>(c.cols()) == d.cond_dim, "class embedding length mismatch");
  return mlp_forward(d.net, hcat(x, c), slope).y.col(0);
}

// Mean over rows of (||∂D/∂x||₂ − 1)². With grad set, adds its derivative
// w.r.t. D's weights. The activation slopes are locally constant, so only W1's
// feature columns and w2 receive gradient.
inline double gradient_penalty(const Discriminator& d, const Mat& x, const Mat& c, double slope,
                               Mlp* grad = nullptr) {
  const auto cache = mlp_forward(d.net, hcat(x, c), slope);
  const Eigen::Index f = static_cast<Eigen::Index>(d.feature_dim);
  const Mat s = leaky_grad(cache.a, slope);                          // B x H
  const Mat m = s.array().rowwise() * d.net.w2().row(0).array();     // (w2 ∘ s) per row
  const Mat w1x = d.net.w1().leftCols(f);                            // H x F
  const Mat g = m * w1x;                                             // B x F, rows are ∂D/∂x
  const double b = static_cast<double>(x.rows());
  double pen = 0;
  Mat u(g.rows(), g.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const double n = g.row(i).norm();
    pen += (n - 1) * (n - 1);
    // At n = 0 the norm has no gradient; take the zero subgradient.
    u.row(i) = n > 0 ? Eigen::RowVectorXd(2 * (n - 1) * g.row(i) / n) : Eigen::RowVectorXd::Zero(g.cols());
  }
  pen /= b;
  if (grad) {
    grad->w1().leftCols(f) += m.transpose() * u / b;
    grad->w2().row(0) += (s.cwiseProduct(u * w1x.transpose())).colwise().sum() / b;
  }
  return pen;
}

struct GanBatch {
  Mat real;                          // B x F
  Mat cond;                          // B x d
  std::vector<std::size_t> labels;   // seen-class position per row
  Mat noise;                         // B x noise_dim
  Vec eps;                           // B, interpolation weights in [0,1)
};

// Value of the critic objective E[D(x)] − E[D(x̂)] − β·GP, which the critic
// maximizes. With grad set, writes its gradient w.r.t. D's parameters.
inline double loss_D(const Generator& g, const Discriminator& d, const GanBatch& batch, double beta, double slope,
                     Mlp* grad = nullptr, double* gap = nullptr) {
  const Mat fake = generate_batch(g, batch.noise, batch.cond, slope);
  const Mat interp = (batch.real.array().colwise() * batch.eps.array() +
                      fake.array().colwise() * (1.0 - batch.eps.array())).matrix();
  const auto cr = mlp_forward(d.net, hcat(batch.real, batch.cond), slope);
  const auto cf = mlp_forward(d.net, hcat(fake, batch.cond), slope);
  const double b = static_cast<double>(batch.real.rows());
  const double w = cr.y.mean() - cf.y.mean();
  if (gap) *gap = w;
  Mlp gp_grad;
  if (grad) {
    *grad = Mlp(d.net.in, d.net.hidden, d.net.out);
    gp_grad = *grad;
  }
  const double pen = gradient_penalty(d, interp, batch.cond, slope, grad ? &gp_grad : nullptr);
  if (grad) {
    mlp_backward(d.net, cr, Mat::Constant(cr.y.rows(), 1, 1.0 / b), slope, *grad);
    mlp_backward(d.net, cf, Mat::Constant(cf.y.rows(), 1, -1.0 / b), slope, *grad);
    grad->flat -= beta * gp_grad.flat;
  }
  return w - beta * pen;
}

struct SoftmaxClassifier {
  std::vector<std::string> classes;
  Mat w;  // C x F
  Vec b;  // C

  Mat logits(const Mat& x) const { return (x * w.transpose()).rowwise() + b.transpose(); }

  static Mat softmax_rows(const Mat& z) {
    Mat p = z.colwise() - z.rowwise().maxCoeff();
    p = p.array().exp().matrix();
    return p.array().colwise() / p.rowwise().sum().array();
  }

  std::vector<std::size_t> predict_index(const Mat& x) const {
    const Mat z = logits(x);
    std::vector<std::size_t> out;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      Eigen::Index arg = 0;
      z.row(i).maxCoeff(&arg);
      out.push_back(static_cast<std::size_t>(arg));
    }
    return out;
  }

  std::vector<std::string> predict(const Mat& x) const {
    std::vector<std::string> out;
    for (auto i : predict_index(x)) out.push_back(classes[i]);
    return out;
  }
};

// Multinomial logistic regression by minibatch Adam on cross-entropy.
inline SoftmaxClassifier fit_softmax(const Mat& x, const std::vector<std::size_t>& y, std::vector<std::string> classes,
                                     std::size_t epochs, double lr, std::uint64_t seed, std::size_t batch = 64) {
  require(x.rows() > 0, "classifier training set is empty");
  require(static_cast<std::size_t>(x.rows()) == y.size(), "one label per training row required");
  const auto c = static_cast<Eigen::Index>(classes.size());
  const Eigen::Index f = x.cols();
  SoftmaxClassifier clf{std::move(classes), Mat::Zero(c, f), Vec::Zero(c)};
  Vec params = Vec::Zero(c * f + c);
  Optimizer opt(OptimizerKind::adam, lr);
  Rng rng(derive_seed(seed, "softmax"));
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t e = 0; e < epochs; ++e) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t n = std::min(batch, order.size() - start);
      Mat xb(static_cast<Eigen::Index>(n), f);
      for (std::size_t r = 0; r < n; ++r) xb.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(order[start + r]));
      Mat p = SoftmaxClassifier::softmax_rows(clf.logits(xb));
      for (std::size_t r = 0; r < n; ++r) p(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(y[order[start + r]])) -= 1;
      p /= static_cast<double>(n);
      Vec grad(params.size());
      Eigen::Map<Mat>(grad.data(), c, f) = p.transpose() * xb;
      grad.tail(c) = p.colwise().sum().transpose();
      opt.step(params, grad);
      clf.w = Eigen::Map<const Mat>(params.data(), c, f);
      clf.b = params.tail(c);
    }
  }
  return clf;
}

// Cross-entropy of `clf` on rows of x with labels y; optionally d/dx.
inline double softmax_xent(const SoftmaxClassifier& clf, const Mat& x, const std::vector<std::size_t>& y,
                           Mat* dx = nullptr) {
  Mat p = SoftmaxClassifier::softmax_rows(clf.logits(x));
  const double n = static_cast<double>(x.rows());
  double loss = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto yi = static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]);
    loss -= std::log(std::max(p(i, yi), 1e-300));
    p(i, yi) -= 1;
  }
  if (dx) *dx = p * clf.w / n;
  return loss / n;
}

struct GeneratorObjective {
  const SoftmaxClassifier* classifier = nullptr;  // L_cls head over seen classes
  const Mat* real_means = nullptr;                // seen-class real feature means (C x F)
  double lambda1 = 0, lambda2 = 0;
};

// −E[D(x̂, c)] + λ1·L_cls(x̂) + λ2·Σ_c ||mean(x̂_c) − mean(x_c)||².
inline double loss_G(const Generator& g, const Discriminator& d, const GanBatch& batch, const GeneratorObjective& obj,
                     double slope, Mlp* grad = nullptr) {
  const auto cg = mlp_forward(g.net, hcat(batch.noise, batch.cond), slope);
  const Mat& fake = cg.y;
  const auto cd = mlp_forward(d.net, hcat(fake, batch.cond), slope);
  const double b = static_cast<double>(fake.rows());
  double loss = -cd.y.mean();
  const Eigen::Index f = fake.cols();
  Mat d_fake = Mat::Zero(fake.rows(), f);
  if (grad) {
    Mlp scratch(d.net.in, d.net.hidden, d.net.out);
    d_fake += mlp_backward(d.net, cd, Mat::Constant(fake.rows(), 1, -1.0 / b), slope, scratch).leftCols(f);
  }
  if (obj.lambda1 != 0) {
    require(obj.classifier != nullptr, "L_cls needs a pre-fit seen classifier");
    Mat dx;
    loss += obj.lambda1 * softmax_xent(*obj.classifier, fake, batch.labels, grad ? &dx : nullptr);
    if (grad) d_fake += obj.lambda1 * dx;
  }
  if (obj.lambda2 != 0) {
    require(obj.real_means != nullptr, "L_R needs real class means");
    std::map<std::size_t, std::vector<Eigen::Index>> rows;
    for (Eigen::Index i = 0; i < fake.rows(); ++i) rows[batch.labels[static_cast<std::size_t>(i)]].push_back(i);
    for (const auto& [cls, idx] : rows) {
      require(cls < static_cast<std::size_t>(obj.real_means->rows()), "class without real features");
      Eigen::RowVectorXd m = Eigen::RowVectorXd::Zero(f);
      for (auto i : idx) m += fake.row(i);
      m /= static_cast<double>(idx.size());
      const Eigen::RowVectorXd diff = m - obj.real_means->row(static_cast<Eigen::Index>(cls));
      loss += obj.lambda2 * diff.squaredNorm();
      if (grad)
        for (auto i : idx) d_fake.row(i) += obj.lambda2 * 2.0 * diff / static_cast<double>(idx.size());
    }
  }
  if (grad) {
    *grad = Mlp(g.net.in, g.net.hidden, g.net.out);
    mlp_backward(g.net, cg, d_fake, slope, *grad);
  }
  return loss;
}

// Concatenated embeddings of `classes`, one row each.
inline Mat class_conditions(const ComponentEmbeddingTable& table, const std::vector<std::string>& classes) {
  Mat c(static_cast<Eigen::Index>(classes.size()), table.data.cols());
  for (std::size_t i = 0; i < classes.size(); ++i) c.row(static_cast<Eigen::Index>(i)) = table.data.row(table.concept_index(classes[i]));
  return c;
}

struct GanHistory {
  std::vector<double> loss_d, loss_g, gap;
};

struct GanModel {
  GanConfig config;
  Generator g;
  Discriminator d;
  SoftmaxClassifier seen_classifier;
  std::vector<std::string> seen_classes;
  GanHistory history;
};

inline GanModel train_gan(const ComponentEmbeddingTable& table, const FeatureStore& store,
                          const std::vector<std::string>& seen, const GanConfig& cfg) {
  cfg.validate();
  require(!seen.empty(), "GAN training needs seen classes");
  for (const auto& c : seen)
    if (store.samples(c).empty()) throw ValidationError("seen class '" + c + "' has no real features");
  const auto [x, y] = store.stacked(seen);
  const Mat conds = class_conditions(table, seen);
  const auto fdim = store.feature_dim;
  const auto cdim = static_cast<std::size_t>(table.data.cols());

  GanModel m;
  m.config = cfg;
  m.seen_classes = seen;
  Rng init(derive_seed(cfg.seed, "gan-init"));
  m.g = make_generator(cfg.noise_dim, cdim, cfg.hidden_g, fdim);
  m.d = make_discriminator(fdim, cdim, cfg.hidden_d);
  m.g.net.init(init);
  m.d.net.init(init);
  m.seen_classifier = fit_softmax(x, y, seen, cfg.classifier_epochs, cfg.classifier_lr, derive_seed(cfg.seed, "gan-cls"));
  Mat means(static_cast<Eigen::Index>(seen.size()), static_cast<Eigen::Index>(fdim));
  for (std::size_t c = 0; c < seen.size(); ++c) means.row(static_cast<Eigen::Index>(c)) = store.mean(seen[c]).transpose();
  const GeneratorObjective obj{&m.seen_classifier, &means, cfg.lambda1, cfg.lambda2};

  auto make_opt = [&](double lr) {
    Optimizer o(OptimizerKind::adam, lr);
    o.adam.beta1 = cfg.adam_beta1;
    o.adam.beta2 = cfg.adam_beta2;
    return o;
  };
  Optimizer opt_g = make_opt(cfg.lr_g), opt_d = make_opt(cfg.lr_d);
  Rng rng(derive_seed(cfg.seed, "gan-batches"));
  const auto bsz = static_cast<Eigen::Index>(cfg.batch_size);
  auto draw = [&] {
    GanBatch b{Mat(bsz, x.cols()), Mat(bsz, conds.cols()), {}, normal_mat(rng, bsz, static_cast<Eigen::Index>(cfg.noise_dim), 1.0), Vec(bsz)};
    for (Eigen::Index r = 0; r < bsz; ++r) {
      const auto i = uniform_index(rng, y.size());
      b.real.row(r) = x.row(static_cast<Eigen::Index>(i));
      b.cond.row(r) = conds.row(static_cast<Eigen::Index>(y[i]));
      b.labels.push_back(y[i]);
      b.eps[r] = uniform01(rng);
    }
    return b;
  };
  Mlp grad;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    double ld = 0, gap = 0;
    for (std::size_t s = 0; s < cfg.d_steps_per_g_step; ++s) {
      ld = loss_D(m.g, m.d, draw(), cfg.beta, cfg.leaky_slope, &grad, &gap);
      opt_d.step(m.d.net.flat, -grad.flat);
    }
    const double lg = loss_G(m.g, m.d, draw(), obj, cfg.leaky_slope, &grad);
    opt_g.step(m.g.net.flat, grad.flat);
    if (!std::isfinite(ld) || !std::isfinite(lg) || !m.g.net.flat.allFinite() || !m.d.net.flat.allFinite())
      throw DivergenceError("GAN training diverged at epoch " + std::to_string(e));
    m.history.loss_d.push_back(ld);
    m.history.loss_g.push_back(lg);
    m.history.gap.push_back(gap);
  }
  return m;
}

inline FeatureStore synthesize_dataset(const Generator& g, const std::vector<std::string>& classes,
                                       const ComponentEmbeddingTable& table, std::size_t n_per_class,
                                       std::uint64_t seed, double slope = 0.2) {
  FeatureStore s(static_cast<std::size_t>(g.net.out), FeatureKind::synthetic);
  if (n_per_class == 0) return s;
  Rng rng(derive_seed(seed, "gan-synth"));
  const Mat conds = class_conditions(table, classes);
  const auto n = static_cast<Eigen::Index>(n_per_class);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const Mat z = normal_mat(rng, n, static_cast<Eigen::Index>(g.noise_dim), 1.0);
    const Mat cond = conds.row(static_cast<Eigen::Index>(c)).replicate(n, 1);
    const Mat out = generate_batch(g, z, cond, slope);
    for (Eigen::Index i = 0; i < n; ++i) s.add(classes[c], out.row(i).transpose());
  }
  return s;
}

enum class ZslMode { standard, generalized };

inline ZslMode parse_zsl_mode(std::string_view s) {
  if (s == "standard") return ZslMode::standard;
  if (s == "generalized") return ZslMode::generalized;
  throw ValidationError("unknown ZSL mode '" + std::string(s) + "'");
}

// Softmax over synthetic unseen features (standard) or real seen plus
// synthetic unseen features (generalized), then argmax.
inline std::vector<std::string> predict_imgc(const FeatureStore& synth, const FeatureStore& real_seen,
                                             const std::vector<std::string>& seen,
                                             const std::vector<std::string>& unseen, const Mat& test, ZslMode mode,
                                             const GanConfig& cfg) {
  std::vector<std::string> classes = mode == ZslMode::standard ? unseen : seen;
  if (mode == ZslMode::generalized) classes.insert(classes.end(), unseen.begin(), unseen.end());
  FeatureStore train(synth.feature_dim, FeatureKind::synthetic);
  if (mode == ZslMode::generalized)
    for (const auto& c : seen)
      for (const auto& v : real_seen.samples(c)) train.add(c, v);
  for (const auto& c : unseen)
    if (synth.contains(c))
      for (const auto& v : synth.samples(c)) train.add(c, v);
  if (train.total() == 0) throw ValidationError("classifier training store is empty");
  for (const auto& c : classes) train.add_class(c);
  const auto [x, y] = train.stacked(classes);
  const auto clf = fit_softmax(x, y, classes, cfg.classifier_epochs, cfg.classifier_lr,
                               derive_seed(cfg.seed, mode == ZslMode::standard ? "zsl-standard" : "zsl-generalized"));
  return clf.predict(test);
}

// Mean of n generated features for one class.
inline Vec class_prototype(const Generator& g, const Vec& cond, std::size_t n, Rng& rng, double slope = 0.2) {
  require(n >= 1, "prototype needs at least one sample");
  const auto rows = static_cast<Eigen::Index>(n);
  const Mat out = generate_batch(g, normal_mat(rng, rows, static_cast<Eigen::Index>(g.noise_dim), 1.0),
                                 cond.transpose().replicate(rows, 1), slope);
  return out.colwise().mean().transpose();
}

// Candidate tail scores for (head, unseen relation): cosine between the
// relation's generated prototype and x_t − x_h.
inline std::vector<double> predict_kgc(const Generator& g, const Vec& relation_cond, const EntityEmbeddings& entities,
                                       const std::string& head, const std::vector<std::string>& candidates,
                                       std::size_t n, Rng& rng, double slope = 0.2) {
  require(!candidates.empty(), "candidate set is empty");
  return score_tails(class_prototype(g, relation_cond, n, rng, slope), entities, head, candidates);
}

inline TensorArchive gan_checkpoint(const GanModel& m) {
  TensorArchive a;
  const auto& c = m.config;
  a.set_meta("kind", "gan");
  a.set_meta("noise_dim", std::to_string(c.noise_dim));
  a.set_meta("hidden_g", std::to_string(c.hidden_g));
  a.set_meta("hidden_d", std::to_string(c.hidden_d));
  a.set_meta("lambda1", format_double(c.lambda1));
  a.set_meta("lambda2", format_double(c.lambda2));
  a.set_meta("beta", format_double(c.beta));
  a.set_meta("lr_g", format_double(c.lr_g));
  a.set_meta("lr_d", format_double(c.lr_d));
  a.set_meta("d_steps_per_g_step", std::to_string(c.d_steps_per_g_step));
  a.set_meta("epochs", std::to_string(c.epochs));
  a.set_meta("batch_size", std::to_string(c.batch_size));
  a.set_meta("n_synth_per_class", std::to_string(c.n_synth_per_class));
  a.set_meta("seed", std::to_string(c.seed));
  a.set_meta("feature_dim", std::to_string(m.d.feature_dim));
  a.set_meta("cond_dim", std::to_string(m.g.cond_dim));
  a.put("generator", as_row(m.g.net.flat));
  a.put("discriminator", as_row(m.d.net.flat));
  return a;
}

inline Generator generator_from_checkpoint(const TensorArchive& a) {
  require(a.get_meta("kind") == "gan", "archive does not hold a GAN");
  auto num = [&](const char* k) { return static_cast<std::size_t>(parse_int(a.get_meta(k))); };
  Generator g = make_generator(num("noise_dim"), num("cond_dim"), num("hidden_g"), num("feature_dim"));
  const Vec flat = as_vec(a.get("generator"));
  require(flat.size() == g.net.flat.size(), "generator checkpoint has the wrong size");
  g.net.flat = flat;
  return g;
}

inline Discriminator discriminator_from_checkpoint(const TensorArchive& a) {
  require(a.get_meta("kind") == "gan", "archive does not hold a GAN");
  auto num = [&](const char* k) { return static_cast<std::size_t>(parse_int(a.get_meta(k))); };
  Discriminator d = make_discriminator(num("feature_dim"), num("cond_dim"), num("hidden_d"));
  const Vec flat = as_vec(a.get("discriminator"));
  require(flat.size() == d.net.flat.size(), "discriminator checkpoint has the wrong size");
  d.net.flat = flat;
  return d;
}

}  // namespace disento
