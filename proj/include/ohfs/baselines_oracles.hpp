#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ohfs/error.hpp"
#include "ohfs/harmonic_solver.hpp"
#include "ohfs/metric_kernel.hpp"
#include "ohfs/online_learner.hpp"

namespace ohfs {

/// Nearest-neighbor vote on labeled examples: argmax_c sum_{i: y_i = c, w_it >= eps} w_it.
/// Abstains when every class sum is 0; ties go to the lowest class id.
template <Dissimilarity D>
Prediction nn_classify(const FeatureVector& x, std::span<const LabeledExample> labeled, const D& metric,
                       const KernelParams& params) {
  std::map<int, double> votes;
  for (const auto& ex : labeled) {
    const double w = edge_weight(metric(ex.features, x), params);
    if (w > 0.0) votes[ex.label] += w;
  }
  std::optional<int> best;
  double best_sum = 0.0;
  double total = 0.0;
  for (const auto& [label, sum] : votes) {
    total += sum;
    if (sum > best_sum) {
      best = label;
      best_sum = sum;
    }
  }
  return {best, best ? best_sum / total : 0.0};
}

/// Regularized harmonic solution on the complete graph of every example seen so far
/// (multiplicity 1 everywhere). Rows of the result follow `unlabeled`.
template <Dissimilarity D>
HarmonicSolution full_graph_solve(std::span<const FeatureVector> unlabeled,
                                  std::span<const LabeledExample> labeled, const D& metric,
                                  const KernelParams& params, double gamma,
                                  std::size_t max_examples = 5000,
                                  UnanchoredPolicy policy = UnanchoredPolicy::error) {
  if (unlabeled.size() + labeled.size() > max_examples) {
    throw ValidationError("full-graph oracle limited to " + std::to_string(max_examples) + " examples");
  }
  const std::vector<std::uint64_t> ones(unlabeled.size(), 1);
  const auto graph = build_graph(labeled, unlabeled, std::span<const std::uint64_t>(ones), metric, params);
  std::vector<int> ids;
  for (const auto& ex : labeled) ids.push_back(ex.label);
  return solve(graph, LabelMatrix(ids), gamma, policy);
}

struct WalkEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo absorbing random walk on V W V. From unlabeled i the walk stops at the
/// sink (value 0) with probability gamma v_i / (d_i + gamma v_i), otherwise moves to j
/// with probability w^_ij / (d_i + gamma v_i); it stops with y_j on reaching labeled j.
/// `label_values` is aligned with graph.labeled.
inline WalkEstimate mc_walk_estimate(const QuantizedGraph& graph, std::span<const double> label_values,
                                     double gamma, Index start, std::uint64_t n_walks, std::uint64_t seed,
                                     std::uint64_t max_steps = 1'000'000) {
  graph.validate();
  if (n_walks == 0) throw ValidationError("need at least one walk");
  if (label_values.size() != graph.labeled.size()) {
    throw ValidationError("one label value per labeled vertex required");
  }
  if (!(gamma >= 0.0)) throw ValidationError("gamma_g must be >= 0");
  const Index n = graph.size();
  if (start < 0 || start >= n) throw ValidationError("start vertex out of range");

  std::vector<double> value(static_cast<std::size_t>(n), 0.0);
  std::vector<char> absorbing(static_cast<std::size_t>(n), 0);
  for (std::size_t b = 0; b < graph.labeled.size(); ++b) {
    absorbing[static_cast<std::size_t>(graph.labeled[b])] = 1;
    value[static_cast<std::size_t>(graph.labeled[b])] = label_values[b];
  }
  if (absorbing[static_cast<std::size_t>(start)]) {
    return {value[static_cast<std::size_t>(start)], 0.0};
  }

  // Per vertex: cumulative move probabilities over all vertices, then the sink.
  const Eigen::MatrixXd w_hat = graph.weighted();
  Eigen::MatrixXd cumulative(n, n);
  for (Index i = 0; i < n; ++i) {
    const double sink = gamma * graph.multiplicity(i);
    const double total = w_hat.row(i).sum() + sink;
    double acc = 0.0;
    Index last_edge = -1;
    for (Index j = 0; j < n; ++j) {
      acc += total > 0.0 ? w_hat(i, j) / total : 0.0;
      cumulative(i, j) = acc;
      if (w_hat(i, j) > 0.0) last_edge = j;
    }
    if (absorbing[static_cast<std::size_t>(i)]) continue;
    if (total == 0.0) {
      throw NumericalError("vertex " + std::to_string(i) + " has no edges and no sink");
    }
    // Without a sink the walk must move; pin the tail so rounding cannot leak mass.
    if (sink == 0.0) cumulative.row(i).tail(n - last_edge).setConstant(1.0);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::uint64_t walk = 0; walk < n_walks; ++walk) {
    Index at = start;
    double outcome = 0.0;
    for (std::uint64_t steps = 0;; ++steps) {
      if (steps >= max_steps) {
        throw NumericalError("random walk from vertex " + std::to_string(start) + " exceeded " +
                             std::to_string(max_steps) + " steps without absorption");
      }
      const double u = unit(rng);
      const auto row = cumulative.row(at);
      if (u >= row(n - 1)) break;  // sink, or a vertex with no edges and no sink
      Index next = 0;
      while (next < n - 1 && u >= row(next)) ++next;
      at = next;
      if (absorbing[static_cast<std::size_t>(at)]) {
        outcome = value[static_cast<std::size_t>(at)];
        break;
      }
    }
    sum += outcome;
    sum_sq += outcome * outcome;
  }
  const double mean = sum / static_cast<double>(n_walks);
  const double var = n_walks > 1 ? std::max(0.0, (sum_sq - sum * mean) / static_cast<double>(n_walks - 1)) : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(n_walks))};
}

/// Streaming squared-error decomposition into harmonic-solution, online-learning and
/// quantization terms, each scaled by 9 / (2n).
struct RegretReport {
  double term_hfs = 0.0;
  double term_online = 0.0;
  double term_quant = 0.0;
  double total_lhs = 0.0;

  // Per example: scores from the final full graph, the prefix full graph and the
  // online learner, plus the true label.
  std::vector<double> final_scores;
  std::vector<double> prefix_scores;
  std::vector<double> online_scores;
  std::vector<int> truth;

  // Running value of each term after t examples (1-based).
  std::vector<double> trajectory_hfs;
  std::vector<double> trajectory_online;
  std::vector<double> trajectory_quant;
  std::vector<double> trajectory_lhs;

  double bound() const { return term_hfs + term_online + term_quant; }
  bool inequality_holds() const { return total_lhs <= bound(); }
};

struct RegretExample {
  FeatureVector features;
  int label = 1;           // ground truth in {-1, +1}
  bool supervised = false;  // label revealed to the learner
};

namespace detail {

inline double binary_column(const HarmonicSolution& sol, Index row) {
  for (std::size_t c = 0; c < sol.classes.size(); ++c) {
    if (sol.classes[c] == 1) return sol.scores(row, static_cast<Index>(c));
  }
  for (std::size_t c = 0; c < sol.classes.size(); ++c) {
    if (sol.classes[c] == -1) return -sol.scores(row, static_cast<Index>(c));
  }
  return 0.0;
}

}  // namespace detail

/// Runs the online learner over a {-1, +1} labeled stream and measures each error term.
/// Supervised examples are pinned to their label in all three solutions. The "final"
/// solution is the full graph over the whole stream.
inline RegretReport regret_decompose(std::span<const RegretExample> stream, const LearnerConfig& config,
                                     std::size_t max_examples = 2000) {
  if (stream.size() > max_examples) {
    throw ValidationError("regret oracle limited to " + std::to_string(max_examples) + " examples");
  }
  for (std::size_t t = 0; t < stream.size(); ++t) {
    if (stream[t].label != 1 && stream[t].label != -1) {
      throw ValidationError("example " + std::to_string(t) + " needs a ground-truth label in {-1, +1}");
    }
  }

  const std::size_t n = stream.size();
  RegretReport report;
  report.final_scores.assign(n, 0.0);
  report.prefix_scores.assign(n, 0.0);
  report.online_scores.assign(n, 0.0);
  report.truth.resize(n);

  OnlineLearner learner(config);
  std::vector<LabeledExample> labeled;
  std::vector<FeatureVector> unlabeled;
  std::vector<std::size_t> unlabeled_index;  // stream position of each unlabeled example

  for (std::size_t t = 0; t < n; ++t) {
    const auto& ex = stream[t];
    report.truth[t] = ex.label;
    if (ex.supervised) {
      learner.add_labeled(ex.features, ex.label);
      labeled.push_back({ex.features, ex.label});
      report.final_scores[t] = report.prefix_scores[t] = report.online_scores[t] = ex.label;
      continue;
    }
    report.online_scores[t] = learner.step(ex.features).binary_score();
    unlabeled.push_back(ex.features);
    unlabeled_index.push_back(t);
    if (!labeled.empty()) {
      const auto prefix = full_graph_solve(std::span<const FeatureVector>(unlabeled),
                                           std::span<const LabeledExample>(labeled), config.metric,
                                           config.kernel, config.gamma, max_examples, UnanchoredPolicy::zero);
      report.prefix_scores[t] = detail::binary_column(prefix, static_cast<Index>(unlabeled.size() - 1));
    }
  }
  if (!labeled.empty() && !unlabeled.empty()) {
    const auto final_sol = full_graph_solve(std::span<const FeatureVector>(unlabeled),
                                            std::span<const LabeledExample>(labeled), config.metric,
                                            config.kernel, config.gamma, max_examples, UnanchoredPolicy::zero);
    for (std::size_t k = 0; k < unlabeled.size(); ++k) {
      report.final_scores[unlabeled_index[k]] = detail::binary_column(final_sol, static_cast<Index>(k));
    }
  }

  double hfs = 0.0, online = 0.0, quant = 0.0, lhs = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double y = report.truth[t];
    hfs += std::pow(report.final_scores[t] - y, 2);
    online += std::pow(report.prefix_scores[t] - report.final_scores[t], 2);
    quant += std::pow(report.online_scores[t] - report.prefix_scores[t], 2);
    lhs += std::pow(report.online_scores[t] - y, 2);
    const double count = static_cast<double>(t + 1);
    report.trajectory_hfs.push_back(4.5 * hfs / count);
    report.trajectory_online.push_back(4.5 * online / count);
    report.trajectory_quant.push_back(4.5 * quant / count);
    report.trajectory_lhs.push_back(lhs / count);
  }
  if (n > 0) {
    report.term_hfs = report.trajectory_hfs.back();
    report.term_online = report.trajectory_online.back();
    report.term_quant = report.trajectory_quant.back();
    report.total_lhs = report.trajectory_lhs.back();
  }
  return report;
}

}  // namespace ohfs
