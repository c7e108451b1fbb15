#pragma once

// Classification and ranking metrics plus their JSON/CSV emitters.

#include <functional>
#include <map>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "disento/common.hpp"

namespace disento {

struct MacroAccuracy {
  double value = 0;
  std::map<std::string, double> per_class;
  std::vector<std::string> warnings;
};

// Mean of per-class accuracy over `classes`; classes with no test samples
// are dropped from the mean and reported in warnings.
inline MacroAccuracy macro_accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& labels,
                                    const std::vector<std::string>& classes) {
  require(predictions.size() == labels.size(), "one prediction per label required");
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // correct, total
  for (const auto& c : classes) counts[c];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = counts.find(labels[i]);
    if (it == counts.end()) throw ValidationError("label '" + labels[i] + "' is not in the evaluated class set");
    it->second.second += 1;
    it->second.first += predictions[i] == labels[i];
  }
  MacroAccuracy out;
  double sum = 0;
  for (const auto& c : classes) {
    const auto [correct, total] = counts[c];
    if (total == 0) {
      out.warnings.push_back("class '" + c + "' has no test samples; excluded from macro accuracy");
      continue;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(total);
    out.per_class[c] = acc;
    sum += acc;
  }
  if (!out.per_class.empty()) out.value = sum / static_cast<double>(out.per_class.size());
  return out;
}

inline double harmonic_mean_H(double acc_s, double acc_u) {
  require(acc_s >= 0 && acc_s <= 1 && acc_u >= 0 && acc_u <= 1, "accuracies must lie in [0,1]");
  if (acc_s + acc_u == 0) return 0;
  return 2 * acc_s * acc_u / (acc_s + acc_u);
}

using RankResult = std::vector<std::size_t>;

struct RankingMetrics {
  double mrr = 0;
  std::map<std::size_t, double> hits;
};

inline RankingMetrics mrr_and_hits(const RankResult& ranks, const std::vector<std::size_t>& ks = {1, 5, 10}) {
  require(!ranks.empty(), "ranking metrics need at least one query");
  RankingMetrics m;
  for (auto k : ks) m.hits[k] = 0;
  for (auto r : ranks) {
    require(r >= 1, "ranks are 1-based");
    m.mrr += 1.0 / static_cast<double>(r);
    for (auto k : ks) m.hits[k] += r <= k;
  }
  const auto n = static_cast<double>(ranks.size());
  m.mrr /= n;
  for (auto& [k, h] : m.hits) h /= n;
  return m;
}

// Candidate positions by descending score; equal scores keep ascending position.
inline std::vector<std::size_t> rank_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  return order;
}

// 1-based rank of `truth` among `scores`. Positions in `filtered` (other
// known true answers) are skipped when filtered ranking is requested.
inline std::size_t rank_of(const std::vector<double>& scores, std::size_t truth,
                           const std::vector<std::size_t>& filtered = {}) {
  require(truth < scores.size(), "ground truth is not among the candidates");
  for (double s : scores)
    if (std::isnan(s)) throw DivergenceError("candidate score is NaN");
  std::unordered_set<std::size_t> skip(filtered.begin(), filtered.end());
  std::size_t rank = 1;
  for (auto idx : rank_order(scores)) {
    if (idx == truth) return rank;
    if (!skip.count(idx)) ++rank;
  }
  return rank;
}

// Scores each candidate independently and counts those that beat the ground
// truth (higher score, or equal score at a smaller candidate position).
inline std::size_t brute_force_rank_oracle(const std::function<double(std::size_t)>& score,
                                           const std::vector<std::size_t>& candidates, std::size_t truth) {
  auto it = std::find(candidates.begin(), candidates.end(), truth);
  if (it == candidates.end()) throw ValidationError("ground truth is not among the candidates");
  const auto pos = static_cast<std::size_t>(it - candidates.begin());
  const double st = score(truth);
  std::size_t better = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = score(candidates[i]);
    better += s > st || (s == st && i < pos);
  }
  return better + 1;
}

// One metrics row keyed by (dataset, variant, learner, seed).
struct MetricsRecord {
  std::string dataset, variant, learner;
  std::uint64_t seed = 0;
  std::map<std::string, double> values;
};

inline nlohmann::ordered_json to_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["dataset"] = r.dataset;
  j["variant"] = r.variant;
  j["learner"] = r.learner;
  j["seed"] = r.seed;
  auto& v = j["metrics"] = nlohmann::ordered_json::object();
  for (const auto& [k, x] : r.values) v[k] = x;
  return j;
}

inline std::string metrics_json(const std::vector<MetricsRecord>& rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) arr.push_back(to_json(r));
  return arr.dump(2) + "\n";
}

inline std::vector<MetricsRecord> parse_metrics_json(const std::string& text) {
  std::vector<MetricsRecord> out;
  for (const auto& j : nlohmann::json::parse(text)) {
    MetricsRecord r{j.at("dataset"), j.at("variant"), j.at("learner"), j.at("seed"), {}};
    for (const auto& [k, v] : j.at("metrics").items()) r.values[k] = v.get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

// Columns are the union of metric names across rows; missing cells stay empty.
inline std::string metrics_csv(const std::vector<MetricsRecord>& rows) {
  std::set<std::string> names;
  for (const auto& r : rows)
    for (const auto& [k, v] : r.values) names.insert(k);
  std::ostringstream out;
  out << "dataset,variant,learner,seed";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& r : rows) {
    out << r.dataset << ',' << r.variant << ',' << r.learner << ',' << r.seed;
    for (const auto& n : names) {
      out << ',';
      if (auto it = r.values.find(n); it != r.values.end()) out << format_double(it->second);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace disento
