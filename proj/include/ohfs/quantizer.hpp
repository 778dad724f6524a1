#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "ohfs/error.hpp"
#include "ohfs/metric_kernel.hpp"

namespace ohfs {

template <class D>
concept Dissimilarity = std::regular_invocable<const D&, const FeatureVector&, const FeatureVector&> &&
    std::convertible_to<std::invoke_result_t<const D&, const FeatureVector&, const FeatureVector&>, double>;

/// Representative unlabeled vertices kept by the doubling algorithm.
///
/// Centers are original data points (never averages). Between repartitions every
/// pair of centers is at least `radius` apart; a point within `radius` of some center
/// is absorbed into it by bumping that center's multiplicity.
struct RepresentativeSet {
  std::vector<FeatureVector> centers;
  std::vector<std::uint64_t> multiplicities;
  double radius = 0.0;
  std::size_t budget = 1;

  RepresentativeSet() = default;
  explicit RepresentativeSet(std::size_t max_vertices) : budget(max_vertices) {
    if (max_vertices == 0) throw ValidationError("vertex budget n_g must be positive");
  }

  std::size_t size() const { return centers.size(); }
  bool empty() const { return centers.empty(); }

  std::uint64_t total_multiplicity() const {
    std::uint64_t total = 0;
    for (auto m : multiplicities) total += m;
    return total;
  }

  friend bool operator==(const RepresentativeSet& a, const RepresentativeSet& b) {
    if (a.budget != b.budget || a.radius != b.radius || a.multiplicities != b.multiplicities ||
        a.centers.size() != b.centers.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.centers.size(); ++i) {
      if (a.centers[i].size() != b.centers[i].size() || a.centers[i] != b.centers[i]) return false;
    }
    return true;
  }
};

struct AssignmentOutcome {
  enum class Kind { merged, created, repartitioned_then_assigned };

  Kind kind = Kind::merged;
  std::size_t index = 0;  // center holding the new point, valid in the post-state
  // Only meaningful for repartitioned_then_assigned: whether the point opened a new center.
  bool appended = false;
  // Old center index -> surviving center index, composed over all repartitions of this
  // step. Empty when no repartition happened.
  std::vector<std::size_t> remap;
};

namespace detail {

// A zero distance always merges so that R = 0 still collapses exact duplicates.
inline bool within_radius(double distance, double radius) {
  return distance < radius || distance == 0.0;
}

// Nearest center strictly within `radius`, ties to the lowest index.
template <Dissimilarity D>
std::optional<std::size_t> nearest_within(std::span<const FeatureVector> centers,
                                          const FeatureVector& x, double radius, const D& metric) {
  std::optional<std::size_t> best;
  double best_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double d = metric(centers[i], x);
    if (within_radius(d, radius) && d < best_distance) {
      best = i;
      best_distance = d;
    }
  }
  return best;
}

}  // namespace detail

struct RepartitionResult {
  RepresentativeSet state;
  std::vector<std::size_t> remap;  // old index -> new index
};

/// Doubles R and greedily re-merges centers in insertion order: each center either
/// joins the nearest earlier survivor within the new R or survives itself.
///
/// When R is still 0 the first doubling starts from the smallest pairwise center
/// distance, so at least one pair always merges.
template <Dissimilarity D>
RepartitionResult repartition(const RepresentativeSet& state, const D& metric) {
  RepartitionResult out;
  out.state.budget = state.budget;
  out.state.radius = state.radius;

  const std::size_t n = state.size();
  if (out.state.radius == 0.0 && n >= 2) {
    double smallest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        smallest = std::min(smallest, static_cast<double>(metric(state.centers[i], state.centers[j])));
      }
    }
    out.state.radius = smallest;
  }
  out.state.radius *= 2.0;

  out.remap.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto target = detail::nearest_within(std::span<const FeatureVector>(out.state.centers),
                                               state.centers[i], out.state.radius, metric);
    if (target) {
      out.state.multiplicities[*target] += state.multiplicities[i];
      out.remap[i] = *target;
    } else {
      out.remap[i] = out.state.centers.size();
      out.state.centers.push_back(state.centers[i]);
      out.state.multiplicities.push_back(state.multiplicities[i]);
    }
  }
  return out;
}

/// Absorbs one unlabeled example. If the set is over budget (n_g + 1 centers) it is
/// first repartitioned, doubling R until at least one merge brings it back to n_g.
template <Dissimilarity D>
AssignmentOutcome observe(RepresentativeSet& state, const FeatureVector& x, const D& metric) {
  require_finite(x);
  if (!state.empty()) require_same_dimension(state.centers.front(), x);

  AssignmentOutcome outcome;
  bool repartitioned = false;
  while (state.size() >= state.budget + 1) {
    auto result = repartition(state, metric);
    if (!repartitioned) {
      outcome.remap = std::move(result.remap);
    } else {
      for (auto& idx : outcome.remap) idx = result.remap[idx];
    }
    state = std::move(result.state);
    repartitioned = true;
  }

  const auto target = detail::nearest_within(std::span<const FeatureVector>(state.centers), x,
                                             state.radius, metric);
  if (target) {
    ++state.multiplicities[*target];
    outcome.index = *target;
    outcome.appended = false;
  } else {
    outcome.index = state.size();
    outcome.appended = true;
    state.centers.push_back(x);
    state.multiplicities.push_back(1);
  }
  if (repartitioned) {
    outcome.kind = AssignmentOutcome::Kind::repartitioned_then_assigned;
  } else {
    outcome.kind = outcome.appended ? AssignmentOutcome::Kind::created : AssignmentOutcome::Kind::merged;
  }
  return outcome;
}

struct AbsorbedPoint {
  FeatureVector point;
  std::size_t center = 0;
};

/// Largest distance from any absorbed point to its current representative. The
/// doubling algorithm keeps this below 2R for a true metric.
template <Dissimilarity D>
double coverage_audit(std::span<const AbsorbedPoint> history, const RepresentativeSet& state,
                      const D& metric) {
  double worst = 0.0;
  for (const auto& entry : history) {
    if (entry.center >= state.size()) {
      throw ValidationError("history references center " + std::to_string(entry.center) +
                            " but only " + std::to_string(state.size()) + " exist");
    }
    worst = std::max(worst, static_cast<double>(metric(entry.point, state.centers[entry.center])));
  }
  return worst;
}

/// Keeps an audit history in sync with an observe() outcome.
inline void track_assignment(std::vector<AbsorbedPoint>& history, const FeatureVector& x,
                             const AssignmentOutcome& outcome) {
  if (!outcome.remap.empty()) {
    for (auto& entry : history) entry.center = outcome.remap[entry.center];
  }
  history.push_back({x, outcome.index});
}

}  // namespace ohfs
