#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "ohfs/error.hpp"
#include "ohfs/metric_kernel.hpp"
#include "ohfs/quantizer.hpp"

namespace ohfs {

using Index = Eigen::Index;

/// |score| below this counts as exactly zero when deciding to abstain.
inline constexpr double kAbstainTolerance = 1e-12;

struct LabeledExample {
  FeatureVector features;
  int label = 0;
};

/// Similarity graph over labeled and representative vertices.
///
/// `weights` is the sparsified kernel matrix W (symmetric, zero diagonal) and
/// `multiplicity` the diagonal of V. The solve works on V W V.
struct QuantizedGraph {
  Eigen::MatrixXd weights;
  Eigen::VectorXd multiplicity;
  std::vector<Index> labeled;
  std::vector<Index> unlabeled;

  Index size() const { return weights.rows(); }

  Eigen::MatrixXd weighted() const {
    return multiplicity.asDiagonal() * weights * multiplicity.asDiagonal();
  }

  void validate() const {
    const Index n = weights.rows();
    if (weights.cols() != n || multiplicity.size() != n) {
      throw ValidationError("graph matrices disagree on vertex count");
    }
    if (static_cast<Index>(labeled.size() + unlabeled.size()) != n) {
      throw ValidationError("labeled and unlabeled sets must partition the vertices");
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (auto set : {&labeled, &unlabeled}) {
      for (Index v : *set) {
        if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)]) {
          throw ValidationError("labeled and unlabeled sets must partition the vertices");
        }
        seen[static_cast<std::size_t>(v)] = 1;
      }
    }
    if ((multiplicity.array() < 1.0).any()) throw ValidationError("multiplicities must be >= 1");
  }
};

/// One-vs-all targets: row i, column c is +1 when labeled vertex i has class c, else -1.
class LabelMatrix {
 public:
  LabelMatrix() = default;

  explicit LabelMatrix(std::span<const int> labels) {
    classes_.assign(labels.begin(), labels.end());
    std::sort(classes_.begin(), classes_.end());
    classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
    values_ = Eigen::MatrixXd::Constant(static_cast<Index>(labels.size()),
                                        static_cast<Index>(classes_.size()), -1.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      values_(static_cast<Index>(i), column_of(labels[i]).value()) = 1.0;
    }
  }

  const Eigen::MatrixXd& values() const { return values_; }
  const std::vector<int>& classes() const { return classes_; }
  Index rows() const { return values_.rows(); }
  Index num_classes() const { return static_cast<Index>(classes_.size()); }

  std::optional<Index> column_of(int label) const {
    auto it = std::lower_bound(classes_.begin(), classes_.end(), label);
    if (it == classes_.end() || *it != label) return std::nullopt;
    return static_cast<Index>(it - classes_.begin());
  }

 private:
  Eigen::MatrixXd values_;
  std::vector<int> classes_;
};

struct HarmonicSolution {
  Eigen::MatrixXd scores;     // one row per unlabeled vertex, one column per class
  std::vector<Index> vertices;  // graph vertex of each row
  std::vector<int> classes;

  std::optional<Index> row_of(Index vertex) const {
    auto it = std::find(vertices.begin(), vertices.end(), vertex);
    if (it == vertices.end()) return std::nullopt;
    return static_cast<Index>(it - vertices.begin());
  }
};

struct Prediction {
  std::optional<int> label;  // nullopt = abstain
  double confidence = 0.0;

  bool abstained() const { return !label.has_value(); }
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Binary rule: sign of the score, confidence |score|, abstain at (numerical) zero.
inline Prediction classify_binary(double score, int negative = -1, int positive = 1) {
  if (!(std::abs(score) >= kAbstainTolerance)) return {std::nullopt, 0.0};
  return {score > 0.0 ? positive : negative, std::min(1.0, std::abs(score))};
}

/// Multi-class rule: argmax over one-vs-all scores; abstain when no score is positive.
inline Prediction classify_scores(const Eigen::Ref<const Eigen::RowVectorXd>& scores,
                                  std::span<const int> classes) {
  if (scores.size() == 0) return {std::nullopt, 0.0};
  Index best = 0;
  for (Index c = 1; c < scores.size(); ++c) {
    if (scores(c) > scores(best)) best = c;
  }
  const double top = scores(best);
  if (top <= 0.0 || scores.cwiseAbs().maxCoeff() < kAbstainTolerance) return {std::nullopt, 0.0};
  return {classes[static_cast<std::size_t>(best)], std::min(1.0, top)};
}

/// Prediction for one solution row. Two classes use the sign of the higher class's
/// column (its targets are the usual {-1, +1}); otherwise argmax.
inline Prediction classify(const HarmonicSolution& sol, Index row) {
  if (row < 0 || row >= sol.scores.rows()) throw ValidationError("row out of range");
  if (sol.classes.size() == 2) {
    return classify_binary(sol.scores(row, 1), sol.classes[0], sol.classes[1]);
  }
  return classify_scores(sol.scores.row(row), sol.classes);
}

/// Builds W over labeled vertices (first, multiplicity 1) followed by the unlabeled
/// vertices with the given multiplicities.
template <Dissimilarity D>
QuantizedGraph build_graph(std::span<const LabeledExample> labeled,
                           std::span<const FeatureVector> unlabeled,
                           std::span<const std::uint64_t> multiplicities, const D& metric,
                           const KernelParams& params) {
  if (labeled.empty()) throw ValidationError("graph needs at least one labeled vertex");
  if (multiplicities.size() != unlabeled.size()) {
    throw ValidationError("one multiplicity per unlabeled vertex required");
  }
  const auto nl = static_cast<Index>(labeled.size());
  const Index n = nl + static_cast<Index>(unlabeled.size());
  auto vertex = [&](Index i) -> const FeatureVector& {
    return i < nl ? labeled[static_cast<std::size_t>(i)].features
                  : unlabeled[static_cast<std::size_t>(i - nl)];
  };

  QuantizedGraph g;
  g.weights = Eigen::MatrixXd::Zero(n, n);
  g.multiplicity = Eigen::VectorXd::Ones(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double w = edge_weight(metric(vertex(i), vertex(j)), params);
      g.weights(i, j) = w;
      g.weights(j, i) = w;
    }
  }
  for (std::size_t k = 0; k < multiplicities.size(); ++k) {
    g.multiplicity(nl + static_cast<Index>(k)) = static_cast<double>(multiplicities[k]);
  }
  g.labeled.resize(static_cast<std::size_t>(nl));
  std::iota(g.labeled.begin(), g.labeled.end(), Index{0});
  g.unlabeled.resize(unlabeled.size());
  std::iota(g.unlabeled.begin(), g.unlabeled.end(), nl);
  return g;
}

template <Dissimilarity D>
QuantizedGraph build_graph(const RepresentativeSet& centers, std::span<const LabeledExample> labeled,
                           const D& metric, const KernelParams& params) {
  return build_graph(labeled, std::span<const FeatureVector>(centers.centers),
                     std::span<const std::uint64_t>(centers.multiplicities), metric, params);
}

/// What to do with unlabeled components that have no edge to any labeled vertex.
enum class UnanchoredPolicy {
  error,  // singular when gamma = 0; solved to exactly 0 when gamma > 0
  zero,   // always exactly 0
};

namespace detail {

// Connected components of the unlabeled vertices under positive weights.
inline std::vector<std::size_t> unlabeled_components(const Eigen::MatrixXd& weights,
                                                     std::span<const Index> unlabeled,
                                                     std::size_t& count) {
  const std::size_t m = unlabeled.size();
  std::vector<std::size_t> comp(m, static_cast<std::size_t>(-1));
  count = 0;
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < m; ++s) {
    if (comp[s] != static_cast<std::size_t>(-1)) continue;
    comp[s] = count;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t a = stack.back();
      stack.pop_back();
      for (std::size_t b = 0; b < m; ++b) {
        if (comp[b] == static_cast<std::size_t>(-1) && weights(unlabeled[a], unlabeled[b]) > 0.0) {
          comp[b] = count;
          stack.push_back(b);
        }
      }
    }
    ++count;
  }
  return comp;
}

}  // namespace detail

/// Regularized harmonic solution on the multiplicity-weighted graph:
///
///   (L^_uu + gamma V_uu) l_u = W^_ul l_l,   W^ = V W V,
///
/// one right-hand side per class column. Components without a path to a labeled vertex
/// carry no label information and are assigned exactly 0.
inline HarmonicSolution solve(const QuantizedGraph& graph, const LabelMatrix& labels, double gamma,
                              UnanchoredPolicy policy = UnanchoredPolicy::error) {
  graph.validate();
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma_g must be >= 0");
  if (labels.rows() != static_cast<Index>(graph.labeled.size())) {
    throw ValidationError("label matrix rows must match labeled vertices");
  }
  if (graph.labeled.empty()) throw ValidationError("graph has no labeled vertex");

  const auto& v = graph.multiplicity;
  const std::span<const Index> u(graph.unlabeled);
  const std::span<const Index> l(graph.labeled);
  const Index nu = static_cast<Index>(u.size());
  const Index k = labels.num_classes();

  HarmonicSolution sol;
  sol.vertices.assign(u.begin(), u.end());
  sol.classes = labels.classes();
  sol.scores = Eigen::MatrixXd::Zero(nu, k);
  if (nu == 0) return sol;

  auto w_hat = [&](Index i, Index j) { return v(i) * graph.weights(i, j) * v(j); };

  std::size_t ncomp = 0;
  const auto comp = detail::unlabeled_components(graph.weights, u, ncomp);
  std::vector<char> anchored(ncomp, 0);
  for (Index a = 0; a < nu; ++a) {
    for (Index b : l) {
      if (graph.weights(u[a], b) > 0.0) {
        anchored[comp[static_cast<std::size_t>(a)]] = 1;
        break;
      }
    }
  }
  if (gamma == 0.0 && policy == UnanchoredPolicy::error) {
    for (std::size_t c = 0; c < ncomp; ++c) {
      if (anchored[c]) continue;
      std::string members;
      for (Index a = 0; a < nu; ++a) {
        if (comp[static_cast<std::size_t>(a)] != c) continue;
        if (!members.empty()) members += ", ";
        members += std::to_string(u[a]);
      }
      throw SingularSystemError("gamma_g = 0 and unlabeled component {" + members +
                                "} has no path to a labeled vertex");
    }
  }

  std::vector<Index> active;
  for (Index a = 0; a < nu; ++a) {
    if (anchored[comp[static_cast<std::size_t>(a)]]) active.push_back(a);
  }
  const auto m = static_cast<Index>(active.size());
  if (m == 0) return sol;

  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, k);
  const Index n = graph.size();
  for (Index r = 0; r < m; ++r) {
    const Index i = u[active[r]];
    double degree = 0.0;
    for (Index j = 0; j < n; ++j) degree += w_hat(i, j);
    system(r, r) = degree + gamma * v(i);
    for (Index c = 0; c < m; ++c) {
      if (c != r) system(r, c) = -w_hat(i, u[active[c]]);
    }
    for (std::size_t b = 0; b < l.size(); ++b) {
      const double w = w_hat(i, l[b]);
      if (w != 0.0) rhs.row(r) += w * labels.values().row(static_cast<Index>(b));
    }
  }

  Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("regularized Laplacian is not positive definite (" + std::to_string(m) +
                         " active vertices)");
  }
  const Eigen::MatrixXd x = llt.solve(rhs);
  if (!x.allFinite()) throw NumericalError("harmonic solve produced non-finite scores");
  for (Index r = 0; r < m; ++r) sol.scores.row(active[r]) = x.row(r);
  return sol;
}

/// Solves the same problem on the graph where every vertex i is replaced by v_i
/// identical copies (each copy keeps i's edges, multiplicity 1), and returns the
/// largest deviation from the compact solution over all unlabeled vertices.
inline double expand_equivalence_check(const QuantizedGraph& graph, const LabelMatrix& labels,
                                       double gamma, Index max_expanded = 4096) {
  graph.validate();
  Index total = 0;
  for (Index i = 0; i < graph.size(); ++i) {
    const double vi = graph.multiplicity(i);
    if (vi != std::floor(vi)) throw ValidationError("multiplicities must be integers to expand");
    total += static_cast<Index>(vi);
  }
  if (total > max_expanded) {
    throw ValidationError("expanded graph would have " + std::to_string(total) +
                          " vertices (cap " + std::to_string(max_expanded) + ")");
  }

  // owner[k] = original vertex of expanded copy k
  std::vector<Index> owner;
  owner.reserve(static_cast<std::size_t>(total));
  for (Index i = 0; i < graph.size(); ++i) {
    for (Index c = 0; c < static_cast<Index>(graph.multiplicity(i)); ++c) owner.push_back(i);
  }

  std::vector<char> is_labeled(static_cast<std::size_t>(graph.size()), 0);
  std::vector<Index> label_row(static_cast<std::size_t>(graph.size()), -1);
  for (std::size_t b = 0; b < graph.labeled.size(); ++b) {
    is_labeled[static_cast<std::size_t>(graph.labeled[b])] = 1;
    label_row[static_cast<std::size_t>(graph.labeled[b])] = static_cast<Index>(b);
  }

  QuantizedGraph expanded;
  expanded.weights = Eigen::MatrixXd::Zero(total, total);
  expanded.multiplicity = Eigen::VectorXd::Ones(total);
  std::vector<Index> labeled_owner;
  for (Index a = 0; a < total; ++a) {
    for (Index b = 0; b < total; ++b) {
      if (owner[a] != owner[b]) expanded.weights(a, b) = graph.weights(owner[a], owner[b]);
    }
    if (is_labeled[static_cast<std::size_t>(owner[a])]) {
      expanded.labeled.push_back(a);
      labeled_owner.push_back(owner[a]);
    } else {
      expanded.unlabeled.push_back(a);
    }
  }

  // Every class keeps at least one labeled copy, so the class columns line up.
  std::vector<int> ids;
  for (Index owner_vertex : labeled_owner) {
    Index col = 0;
    labels.values().row(label_row[static_cast<std::size_t>(owner_vertex)]).maxCoeff(&col);
    ids.push_back(labels.classes()[static_cast<std::size_t>(col)]);
  }
  const LabelMatrix expanded_labels(ids);

  const auto compact = solve(graph, labels, gamma);
  const auto full = solve(expanded, expanded_labels, gamma);

  double worst = 0.0;
  for (std::size_t r = 0; r < full.vertices.size(); ++r) {
    const Index original = owner[static_cast<std::size_t>(full.vertices[r])];
    const auto row = compact.row_of(original);
    worst = std::max(worst, (full.scores.row(static_cast<Index>(r)) - compact.scores.row(*row))
                                .cwiseAbs()
                                .maxCoeff());
  }
  return worst;
}

}  // namespace ohfs
