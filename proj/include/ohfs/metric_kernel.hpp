#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "ohfs/error.hpp"

namespace ohfs {

using FeatureVector = Eigen::VectorXd;

inline void require_finite(const FeatureVector& x, const char* what = "feature vector") {
  if (!x.allFinite()) {
    throw ValidationError(std::string(what) + " contains non-finite entries");
  }
}

inline void require_same_dimension(const FeatureVector& x, const FeatureVector& y) {
  if (x.size() != y.size()) {
    throw ValidationError("dimension mismatch: " + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()));
  }
}

// Per-position weights of the weighted L2 norm.
class CenterWeights {
 public:
  explicit CenterWeights(Eigen::VectorXd weights) : weights_(std::move(weights)) {
    if (weights_.size() == 0) throw ValidationError("center weights must be non-empty");
    if (!weights_.allFinite() || (weights_.array() < 0.0).any()) {
      throw ValidationError("center weights must be finite and non-negative");
    }
    if (!(weights_.array() > 0.0).any()) {
      throw ValidationError("at least one center weight must be positive");
    }
  }

  static CenterWeights uniform(Eigen::Index d) {
    return CenterWeights(Eigen::VectorXd::Ones(d));
  }

  /// Gaussian falloff exp(-r^2 / (2 rho^2)) over a side x side image stored row-major,
  /// where r is the pixel's distance from the image center divided by side / 2.
  static CenterWeights radial(Eigen::Index side, double rho = 0.5) {
    if (side <= 0) throw ValidationError("image side must be positive");
    if (!(rho > 0.0)) throw ValidationError("radial falloff rho must be positive");
    Eigen::VectorXd w(side * side);
    const double half = static_cast<double>(side) / 2.0;
    for (Eigen::Index row = 0; row < side; ++row) {
      for (Eigen::Index col = 0; col < side; ++col) {
        const double dy = (static_cast<double>(row) + 0.5 - half) / half;
        const double dx = (static_cast<double>(col) + 0.5 - half) / half;
        w(row * side + col) = std::exp(-(dx * dx + dy * dy) / (2.0 * rho * rho));
      }
    }
    return CenterWeights(std::move(w));
  }

  /// Radial weights for a flattened square image of d pixels.
  static CenterWeights radial_for_dimension(Eigen::Index d, double rho = 0.5) {
    const auto side = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(d))));
    if (side * side != d) {
      throw ValidationError("radial weights need a square image; d = " + std::to_string(d));
    }
    return radial(side, rho);
  }

  const Eigen::VectorXd& values() const { return weights_; }
  Eigen::Index size() const { return weights_.size(); }

  friend bool operator==(const CenterWeights& a, const CenterWeights& b) {
    return a.weights_.size() == b.weights_.size() && a.weights_ == b.weights_;
  }

 private:
  Eigen::VectorXd weights_;
};

class KernelParams {
 public:
  KernelParams(double sigma, double epsilon) : sigma_(sigma), epsilon_(epsilon) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be positive");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ValidationError("epsilon must lie in [0, 1)");
  }

  double sigma() const { return sigma_; }
  double epsilon() const { return epsilon_; }

  /// Largest distance whose similarity survives sparsification.
  double neighborhood_radius() const {
    if (epsilon_ == 0.0) return std::numeric_limits<double>::infinity();
    return sigma_ * std::sqrt(-2.0 * std::log(epsilon_));
  }

  friend bool operator==(const KernelParams&, const KernelParams&) = default;

 private:
  double sigma_;
  double epsilon_;
};

inline double weighted_l2(const FeatureVector& x, const FeatureVector& y, const CenterWeights& psi) {
  require_same_dimension(x, y);
  if (psi.size() != x.size()) {
    throw ValidationError("center weights have dimension " + std::to_string(psi.size()) +
                          ", vectors have " + std::to_string(x.size()));
  }
  return std::sqrt((psi.values().array() * (x - y).array().square()).sum());
}

struct FaceDistance {
  double value = 0.0;
  // Set when a zero-mean input excluded the mean-ratio branch.
  bool ratio_skipped = false;
};

/// Weighted distance corrected for additive and multiplicative light: the minimum of
/// the raw difference, the mean-subtracted difference, and the mean-normalized ratio.
/// Not a metric (the triangle inequality can fail across branches), but symmetric,
/// non-negative and zero on identical inputs.
inline FaceDistance face_distance(const FeatureVector& x, const FeatureVector& y,
                                  const CenterWeights& psi) {
  require_same_dimension(x, y);
  if (psi.size() != x.size()) {
    throw ValidationError("center weights have dimension " + std::to_string(psi.size()) +
                          ", vectors have " + std::to_string(x.size()));
  }
  const auto& w = psi.values().array();
  const double mx = x.mean();
  const double my = y.mean();

  const Eigen::ArrayXd diff = (x - y).array();
  double best = (w * diff.square()).sum();
  best = std::min(best, (w * (diff - (mx - my)).square()).sum());

  FaceDistance out;
  if (mx != 0.0 && my != 0.0) {
    best = std::min(best, (w * (x.array() / mx - y.array() / my).square()).sum());
  } else {
    out.ratio_skipped = true;
  }
  out.value = std::sqrt(best);
  return out;
}

inline double similarity(double distance, const KernelParams& params) {
  const double s = params.sigma();
  return std::exp(-(distance * distance) / (2.0 * s * s));
}

// Strict inequality: a weight exactly at epsilon is kept.
inline double sparsify(double w, double epsilon) { return w < epsilon ? 0.0 : w; }

inline double edge_weight(double distance, const KernelParams& params) {
  return sparsify(similarity(distance, params), params.epsilon());
}

enum class MetricKind : std::uint32_t { euclidean = 0, weighted_l2 = 1, face = 2 };

inline const char* to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::euclidean: return "euclidean";
    case MetricKind::weighted_l2: return "weighted";
    case MetricKind::face: return "face";
  }
  return "unknown";
}

inline MetricKind metric_kind_from_string(const std::string& name) {
  if (name == "euclidean") return MetricKind::euclidean;
  if (name == "weighted") return MetricKind::weighted_l2;
  if (name == "face") return MetricKind::face;
  throw ValidationError("unknown metric '" + name + "'");
}

/// Dissimilarity used to build the graph. Symmetric, non-negative, d(x, x) = 0.
class Metric {
 public:
  static Metric euclidean() { return Metric(MetricKind::euclidean, std::nullopt); }
  static Metric weighted(CenterWeights psi) { return Metric(MetricKind::weighted_l2, std::move(psi)); }
  static Metric face(CenterWeights psi) { return Metric(MetricKind::face, std::move(psi)); }

  double operator()(const FeatureVector& x, const FeatureVector& y) const {
    switch (kind_) {
      case MetricKind::euclidean:
        require_same_dimension(x, y);
        return (x - y).norm();
      case MetricKind::weighted_l2:
        return weighted_l2(x, y, *psi_);
      case MetricKind::face:
        return face_distance(x, y, *psi_).value;
    }
    throw ValidationError("unknown metric kind");
  }

  MetricKind kind() const { return kind_; }
  const std::optional<CenterWeights>& weights() const { return psi_; }

  /// Dimension the metric is bound to, or nullopt for euclidean.
  std::optional<Eigen::Index> dimension() const {
    if (psi_) return psi_->size();
    return std::nullopt;
  }

  friend bool operator==(const Metric& a, const Metric& b) {
    return a.kind_ == b.kind_ && a.psi_ == b.psi_;
  }

 private:
  Metric(MetricKind kind, std::optional<CenterWeights> psi) : kind_(kind), psi_(std::move(psi)) {}

  MetricKind kind_;
  std::optional<CenterWeights> psi_;
};

}  // namespace ohfs
