#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ohfs/detail/binary_io.hpp"
#include "ohfs/error.hpp"
#include "ohfs/harmonic_solver.hpp"
#include "ohfs/metric_kernel.hpp"
#include "ohfs/quantizer.hpp"

namespace ohfs {

struct LearnerConfig {
  Eigen::Index dimension = 0;
  Metric metric = Metric::euclidean();
  KernelParams kernel{0.025, 1e-8};
  double gamma = 1e-7;
  std::size_t budget = 500;

  /// gamma_g = 10 * epsilon.
  static double default_gamma(const KernelParams& kernel) { return 10.0 * kernel.epsilon(); }

  static LearnerConfig make(Eigen::Index dimension, Metric metric, KernelParams kernel,
                            std::size_t budget, std::optional<double> gamma = std::nullopt) {
    LearnerConfig c{dimension, std::move(metric), kernel, gamma.value_or(default_gamma(kernel)), budget};
    c.validate();
    return c;
  }

  void validate() const {
    if (dimension <= 0) throw ValidationError("dimension must be positive");
    if (budget == 0) throw ValidationError("vertex budget n_g must be positive");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma_g must be >= 0");
    if (auto d = metric.dimension(); d && *d != dimension) {
      throw ValidationError("metric weights have dimension " + std::to_string(*d) +
                            ", learner expects " + std::to_string(dimension));
    }
  }

  friend bool operator==(const LearnerConfig&, const LearnerConfig&) = default;
};

struct PredictionRecord {
  std::uint64_t step = 0;
  Prediction prediction;
  bool outlier = false;
  Eigen::RowVectorXd scores;  // per class, aligned with `classes`
  std::vector<int> classes;
  std::chrono::nanoseconds solve_time{0};
  std::size_t graph_size = 0;  // vertices in the solved graph, including x_t

  /// Scalar score for a {-1, +1} problem: the +1 column, or minus the -1 column when
  /// only -1 has been labeled so far. 0 with no labels.
  double binary_score() const {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (classes[c] == 1) return scores(static_cast<Eigen::Index>(c));
    }
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (classes[c] == -1) return -scores(static_cast<Eigen::Index>(c));
    }
    return 0.0;
  }
};

/// Online quantized harmonic function solution.
///
/// Each step scores x_t as a temporary vertex of the graph over labeled examples and
/// current representatives, predicts from its score, and only then commits x_t to the
/// quantizer. Examples that solve to 0 (no path to a label) are abstained on and
/// never committed.
class OnlineLearner {
 public:
  static constexpr std::uint32_t kSnapshotVersion = 1;

  explicit OnlineLearner(LearnerConfig config)
      : config_(std::move(config)), quantizer_(config_.budget) {
    config_.validate();
  }

  PredictionRecord step(const FeatureVector& x) {
    check_input(x);
    PredictionRecord record;
    record.step = ++t_;

    if (labeled_.empty()) {
      // No boundary: every score is 0, which makes x_t an outlier.
      record.prediction = {std::nullopt, 0.0};
      record.outlier = true;
      record.graph_size = quantizer_.size() + 1;
      return record;
    }

    const auto start = std::chrono::steady_clock::now();
    std::vector<FeatureVector> unlabeled = quantizer_.centers;
    std::vector<std::uint64_t> mult = quantizer_.multiplicities;
    unlabeled.push_back(x);
    mult.push_back(1);
    const QuantizedGraph graph = build_graph(std::span<const LabeledExample>(labeled_),
                                             std::span<const FeatureVector>(unlabeled),
                                             std::span<const std::uint64_t>(mult), config_.metric,
                                             config_.kernel);
    const auto xi = static_cast<Eigen::Index>(graph.size() - 1);
    const bool isolated = (graph.weights.row(xi).array() == 0.0).all();

    std::vector<int> ids;
    ids.reserve(labeled_.size());
    for (const auto& ex : labeled_) ids.push_back(ex.label);
    const LabelMatrix labels(ids);
    const HarmonicSolution sol = solve(graph, labels, config_.gamma, UnanchoredPolicy::zero);
    record.solve_time = std::chrono::steady_clock::now() - start;

    const auto row = *sol.row_of(xi);
    record.scores = sol.scores.row(row);
    record.classes = sol.classes;
    record.graph_size = static_cast<std::size_t>(graph.size());
    record.outlier = isolated || record.scores.cwiseAbs().maxCoeff() < kAbstainTolerance;
    if (record.outlier) {
      record.prediction = {std::nullopt, 0.0};
      return record;
    }
    record.prediction = classify(sol, row);
    observe(quantizer_, x, config_.metric);
    return record;
  }

  /// Labeled examples are stored exactly and never quantized.
  void add_labeled(const FeatureVector& x, int label) {
    check_input(x);
    labeled_.push_back({x, label});
  }

  const LearnerConfig& config() const { return config_; }
  const RepresentativeSet& quantizer() const { return quantizer_; }
  const std::vector<LabeledExample>& labeled() const { return labeled_; }
  std::uint64_t steps() const { return t_; }

  std::vector<int> classes() const {
    std::vector<int> ids;
    for (const auto& ex : labeled_) ids.push_back(ex.label);
    return LabelMatrix(ids).classes();
  }

  /// Versioned little-endian binary image: "OHFS", u32 version, then dimension,
  /// parameters, labeled store, centers, multiplicities, R and t. Sequences are
  /// prefixed by their u64 length.
  std::vector<std::uint8_t> snapshot() const {
    detail::ByteWriter w;
    static constexpr std::uint8_t magic[] = {'O', 'H', 'F', 'S'};
    w.bytes(magic);
    w.u32(kSnapshotVersion);
    const auto d = static_cast<std::uint64_t>(config_.dimension);
    w.u64(d);

    w.u32(static_cast<std::uint32_t>(config_.metric.kind()));
    if (const auto& psi = config_.metric.weights()) {
      w.u64(static_cast<std::uint64_t>(psi->size()));
      for (Eigen::Index i = 0; i < psi->size(); ++i) w.f64(psi->values()(i));
    } else {
      w.u64(0);
    }
    w.f64(config_.kernel.sigma());
    w.f64(config_.kernel.epsilon());
    w.f64(config_.gamma);
    w.u64(config_.budget);

    w.u64(labeled_.size());
    for (const auto& ex : labeled_) {
      w.i32(ex.label);
      for (Eigen::Index i = 0; i < ex.features.size(); ++i) w.f64(ex.features(i));
    }
    w.u64(quantizer_.size());
    for (const auto& c : quantizer_.centers) {
      for (Eigen::Index i = 0; i < c.size(); ++i) w.f64(c(i));
    }
    w.u64(quantizer_.multiplicities.size());
    for (auto m : quantizer_.multiplicities) w.u64(m);
    w.f64(quantizer_.radius);
    w.u64(t_);
    return w.take();
  }

  static OnlineLearner restore(std::span<const std::uint8_t> payload) {
    detail::ByteReader r(payload);
    const auto magic = r.bytes(4);
    if (magic[0] != 'O' || magic[1] != 'H' || magic[2] != 'F' || magic[3] != 'S') {
      throw CorruptPayloadError("bad snapshot magic");
    }
    if (const auto version = r.u32(); version != kSnapshotVersion) {
      throw VersionMismatchError("snapshot version " + std::to_string(version) + ", expected " +
                                 std::to_string(kSnapshotVersion));
    }
    const std::uint64_t d = r.u64();
    if (d == 0 || d > r.remaining()) throw CorruptPayloadError("implausible dimension");
    const auto dim = static_cast<Eigen::Index>(d);

    auto read_vector = [&](Eigen::Index n) {
      FeatureVector v(n);
      for (Eigen::Index i = 0; i < n; ++i) v(i) = r.f64();
      return v;
    };

    const auto kind_raw = r.u32();
    if (kind_raw > static_cast<std::uint32_t>(MetricKind::face)) {
      throw CorruptPayloadError("unknown metric kind " + std::to_string(kind_raw));
    }
    const auto kind = static_cast<MetricKind>(kind_raw);
    const auto psi_len = static_cast<Eigen::Index>(r.length(8));
    std::optional<Metric> metric;
    try {
      if (kind == MetricKind::euclidean) {
        if (psi_len != 0) throw CorruptPayloadError("euclidean metric carries weights");
        metric = Metric::euclidean();
      } else {
        CenterWeights psi(read_vector(psi_len));
        metric = kind == MetricKind::face ? Metric::face(std::move(psi)) : Metric::weighted(std::move(psi));
      }
      const double sigma = r.f64();
      const double epsilon = r.f64();
      const double gamma = r.f64();
      const auto budget = static_cast<std::size_t>(r.u64());
      LearnerConfig config{dim, *metric, KernelParams(sigma, epsilon), gamma, budget};
      OnlineLearner learner(std::move(config));

      const std::uint64_t nl = r.length(4 + 8 * d);
      for (std::uint64_t k = 0; k < nl; ++k) {
        const int label = r.i32();
        learner.labeled_.push_back({read_vector(dim), label});
      }
      const std::uint64_t nc = r.length(8 * d);
      for (std::uint64_t k = 0; k < nc; ++k) learner.quantizer_.centers.push_back(read_vector(dim));
      const std::uint64_t nm = r.length(8);
      if (nm != nc) throw CorruptPayloadError("multiplicity count does not match centers");
      for (std::uint64_t k = 0; k < nm; ++k) {
        const auto m = r.u64();
        if (m == 0) throw CorruptPayloadError("zero multiplicity");
        learner.quantizer_.multiplicities.push_back(m);
      }
      learner.quantizer_.radius = r.f64();
      if (!(learner.quantizer_.radius >= 0.0)) throw CorruptPayloadError("negative radius");
      learner.t_ = r.u64();
      if (!r.done()) throw CorruptPayloadError("trailing bytes after snapshot");
      return learner;
    } catch (const CorruptPayloadError&) {
      throw;
    } catch (const ValidationError& e) {
      throw CorruptPayloadError(std::string("invalid snapshot contents: ") + e.what());
    }
  }

 private:
  void check_input(const FeatureVector& x) const {
    if (x.size() != config_.dimension) {
      throw ValidationError("expected dimension " + std::to_string(config_.dimension) + ", got " +
                            std::to_string(x.size()));
    }
    require_finite(x);
  }

  LearnerConfig config_;
  RepresentativeSet quantizer_;
  std::vector<LabeledExample> labeled_;
  std::uint64_t t_ = 0;
};

}  // namespace ohfs
