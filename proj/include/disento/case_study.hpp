#pragma once

// Component-space inspection: nearest neighbors, factor purity, and a 2-D
// principal-direction projection per component for external plotting.

#include "disento/encoder.hpp"

namespace disento {

// Rows of `table` restricted to `classes`, component k only (m x dim).
inline Mat component_rows(const ComponentEmbeddingTable& table, const std::vector<std::size_t>& classes,
                          std::size_t k) {
  Mat out(static_cast<Eigen::Index>(classes.size()), static_cast<Eigen::Index>(table.dim));
  for (std::size_t r = 0; r < classes.size(); ++r) out.row(r) = table.component(classes[r], k).transpose();
  return out;
}

// Euclidean nearest neighbors (excluding self) of every row, ascending
// distance, ties by index.
inline std::vector<std::vector<std::size_t>> nearest_neighbors(const Mat& points, std::size_t count) {
  const auto m = static_cast<std::size_t>(points.rows());
  std::vector<std::vector<std::size_t>> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) d.emplace_back((points.row(i) - points.row(j)).squaredNorm(), j);
    std::sort(d.begin(), d.end());
    for (std::size_t n = 0; n < std::min(count, d.size()); ++n) out[i].push_back(d[n].second);
  }
  return out;
}

// Fraction of points whose nearest neighbor carries the same label.
inline double neighbor_purity(const Mat& points, const std::vector<std::size_t>& labels) {
  require(static_cast<std::size_t>(points.rows()) == labels.size() && labels.size() >= 2,
          "purity needs one label per point and at least two points");
  const auto nn = nearest_neighbors(points, 1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += labels[nn[i][0]] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// Expected purity of a uniformly random other point.
inline double chance_purity(const std::vector<std::size_t>& labels) {
  const auto m = labels.size();
  require(m >= 2, "chance purity needs at least two points");
  double acc = 0;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t same = 0;
    for (std::size_t j = 0; j < m; ++j) same += j != i && labels[j] == labels[i];
    acc += static_cast<double>(same) / static_cast<double>(m - 1);
  }
  return acc / static_cast<double>(m);
}

// Projection onto the top-2 principal directions of the centered rows. Each
// direction's sign is fixed so its largest-magnitude entry is positive.
inline Mat pca_2d(const Mat& points) {
  const Eigen::Index m = points.rows(), d = points.cols();
  const Eigen::RowVectorXd mean = points.colwise().mean();
  const Mat centered = points.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / std::max<double>(1.0, static_cast<double>(m - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Mat out = Mat::Zero(m, 2);
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, d); ++c) {
    Vec dir = es.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    dir.cwiseAbs().maxCoeff(&arg);
    if (dir[arg] < 0) dir = -dir;
    out.col(c) = centered * dir;
  }
  return out;
}

struct CaseStudyExport {
  std::string coordinates_csv;  // component,class,x,y,label_<aspect>...
  std::string neighbors_csv;    // component,class,rank,neighbor
};

// `labels[a][r]` is the factor label of classes[r] for aspect a (may be empty).
inline CaseStudyExport export_case_study(const ComponentEmbeddingTable& table, const std::vector<std::size_t>& classes,
                                         const std::vector<std::vector<std::size_t>>& labels,
                                         std::size_t n_neighbors = 2) {
  require(classes.size() >= 3, "case study needs at least three classes");
  for (const auto& l : labels) require(l.size() == classes.size(), "one label per class required");
  CaseStudyExport out;
  std::ostringstream coords, nbrs;
  coords << "component,class,x,y";
  for (std::size_t a = 0; a < labels.size(); ++a) coords << ",label_" << a;
  coords << '\n';
  nbrs << "component,class,rank,neighbor\n";
  for (std::size_t k = 0; k < table.num_components(); ++k) {
    const Mat pts = component_rows(table, classes, k);
    const Mat xy = pca_2d(pts);
    for (std::size_t r = 0; r < classes.size(); ++r) {
      coords << table.aspects[k] << ',' << table.concept_ids[classes[r]] << ',' << format_double(xy(r, 0)) << ','
             << format_double(xy(r, 1));
      for (const auto& l : labels) coords << ',' << l[r];
      coords << '\n';
    }
    const auto nn = nearest_neighbors(pts, n_neighbors);
    for (std::size_t r = 0; r < classes.size(); ++r)
      for (std::size_t n = 0; n < nn[r].size(); ++n)
        nbrs << table.aspects[k] << ',' << table.concept_ids[classes[r]] << ',' << n + 1 << ','
             << table.concept_ids[classes[nn[r][n]]] << '\n';
  }
  out.coordinates_csv = coords.str();
  out.neighbors_csv = nbrs.str();
  return out;
}

struct DisentanglementReport {
  // purity[k][a]: nearest-neighbor purity in component k w.r.t. aspect a labels.
  std::vector<std::vector<double>> purity;
  std::vector<double> chance;
};

inline DisentanglementReport disentanglement_report(const ComponentEmbeddingTable& table,
                                                    const std::vector<std::size_t>& classes,
                                                    const std::vector<std::vector<std::size_t>>& labels) {
  DisentanglementReport r;
  for (const auto& l : labels) r.chance.push_back(chance_purity(l));
  for (std::size_t k = 0; k < table.num_components(); ++k) {
    const Mat pts = component_rows(table, classes, k);
    r.purity.emplace_back();
    for (const auto& l : labels) r.purity.back().push_back(neighbor_purity(pts, l));
  }
  return r;
}

}  // namespace disento
