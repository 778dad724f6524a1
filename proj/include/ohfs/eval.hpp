#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ohfs/baselines_oracles.hpp"
#include "ohfs/error.hpp"
#include "ohfs/harmonic_solver.hpp"
#include "ohfs/online_learner.hpp"

namespace ohfs {

struct StreamRecord {
  std::uint64_t frame_id = 0;
  FeatureVector features;
  std::optional<int> true_label;
  bool supervised = false;  // label revealed to the learner

  friend bool operator==(const StreamRecord& a, const StreamRecord& b) {
    return a.frame_id == b.frame_id && a.true_label == b.true_label && a.supervised == b.supervised &&
           a.features.size() == b.features.size() && a.features == b.features;
  }
};

struct Stream {
  Eigen::Index dimension = 0;
  int num_classes = 0;
  std::vector<StreamRecord> records;
};

// ---------------------------------------------------------------------------
// Text format
//
//   #ohfs-stream v1 d=<d> k=<K>
//   frame_id,label_or_?,supervised_flag,feat_1,...,feat_d
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
  field = trim(field);
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ValidationError("line " + std::to_string(line) + ": bad " + what + " '" + std::string(field) + "'");
  }
  return value;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline Stream read_stream(std::istream& in) {
  Stream stream;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = detail::trim(line);
    if (text.empty()) continue;
    if (!have_header) {
      std::istringstream hs{std::string(text)};
      std::string tag, version, dpart, kpart;
      hs >> tag >> version >> dpart >> kpart;
      if (tag != "#ohfs-stream" || version != "v1" || dpart.rfind("d=", 0) != 0 || kpart.rfind("k=", 0) != 0) {
        throw ValidationError("line " + std::to_string(line_no) + ": expected header '#ohfs-stream v1 d=<d> k=<K>'");
      }
      stream.dimension = detail::parse_number<Eigen::Index>(std::string_view(dpart).substr(2), line_no, "dimension");
      stream.num_classes = detail::parse_number<int>(std::string_view(kpart).substr(2), line_no, "class count");
      if (stream.dimension <= 0) throw ValidationError("line " + std::to_string(line_no) + ": d must be positive");
      if (stream.num_classes < 0) throw ValidationError("line " + std::to_string(line_no) + ": k must be >= 0");
      have_header = true;
      continue;
    }
    if (text.front() == '#') continue;

    std::vector<std::string_view> fields;
    std::size_t begin = 0;
    while (true) {
      const auto comma = text.find(',', begin);
      fields.push_back(text.substr(begin, comma == std::string_view::npos ? std::string_view::npos : comma - begin));
      if (comma == std::string_view::npos) break;
      begin = comma + 1;
    }
    const auto expected = static_cast<std::size_t>(stream.dimension) + 3;
    if (fields.size() != expected) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(stream.dimension) + " features, got " +
                            std::to_string(fields.size() < 3 ? 0 : fields.size() - 3));
    }
    StreamRecord rec;
    rec.frame_id = detail::parse_number<std::uint64_t>(fields[0], line_no, "frame id");
    if (detail::trim(fields[1]) != "?") {
      rec.true_label = detail::parse_number<int>(fields[1], line_no, "label");
    }
    const auto flag = detail::trim(fields[2]);
    if (flag != "0" && flag != "1") {
      throw ValidationError("line " + std::to_string(line_no) + ": supervised flag must be 0 or 1");
    }
    rec.supervised = flag == "1";
    if (rec.supervised && !rec.true_label) {
      throw ValidationError("line " + std::to_string(line_no) + ": supervised record needs a label");
    }
    rec.features.resize(stream.dimension);
    for (Eigen::Index k = 0; k < stream.dimension; ++k) {
      const double v = detail::parse_number<double>(fields[static_cast<std::size_t>(k) + 3], line_no, "feature");
      if (!std::isfinite(v)) throw ValidationError("line " + std::to_string(line_no) + ": non-finite feature");
      rec.features(k) = v;
    }
    stream.records.push_back(std::move(rec));
  }
  return stream;
}

inline Stream load_stream(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open stream file '" + path + "'");
  return read_stream(in);
}

inline void write_stream(std::ostream& out, const Stream& stream) {
  out << "#ohfs-stream v1 d=" << stream.dimension << " k=" << stream.num_classes << '\n';
  for (const auto& rec : stream.records) {
    if (rec.features.size() != stream.dimension) throw ValidationError("record dimension differs from header");
    out << rec.frame_id << ',';
    if (rec.true_label) out << *rec.true_label; else out << '?';
    out << ',' << (rec.supervised ? '1' : '0');
    for (Eigen::Index k = 0; k < rec.features.size(); ++k) out << ',' << detail::format_double(rec.features(k));
    out << '\n';
  }
}

inline void save_stream(const std::string& path, const Stream& stream) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write stream file '" + path + "'");
  write_stream(out, stream);
}

// ---------------------------------------------------------------------------
// Synthetic drifting streams
// ---------------------------------------------------------------------------

enum class DriftKind { rotate, shift, relocate };

inline DriftKind drift_kind_from_string(const std::string& name) {
  if (name == "rotate") return DriftKind::rotate;
  if (name == "shift") return DriftKind::shift;
  if (name == "relocate") return DriftKind::relocate;
  throw ValidationError("unknown drift kind '" + name + "'");
}

inline const char* to_string(DriftKind kind) {
  switch (kind) {
    case DriftKind::rotate: return "rotate";
    case DriftKind::shift: return "shift";
    case DriftKind::relocate: return "relocate";
  }
  return "unknown";
}

struct DriftSpec {
  std::size_t n = 400;  // unlabeled records, outliers included
  int classes = 2;
  Eigen::Index dimension = 8;
  DriftKind drift = DriftKind::relocate;
  int segments = 2;
  double noise = 0.05;         // per-coordinate standard deviation around the class mean
  double separation = 1.0;     // norm of each class mean at the start
  double displacement = 0.15;  // per segment; radians for rotate
  double outlier_fraction = 0.0;
  double outlier_radius = 5.0;  // outliers are placed at this norm, random direction
  int labeled_per_class = 4;
  bool binary_labels = false;  // classes {-1, +1} instead of {0, 1, ...}; needs classes == 2
  std::uint64_t seed = 1;

  void validate() const {
    if (classes < 1) throw ValidationError("need at least one class");
    if (binary_labels && classes != 2) throw ValidationError("binary labels need exactly two classes");
    if (dimension < 2) throw ValidationError("dimension must be >= 2");
    if (segments < 1) throw ValidationError("need at least one segment");
    if (!(noise >= 0.0) || !(separation >= 0.0) || !(outlier_radius >= 0.0)) {
      throw ValidationError("noise, separation and outlier radius must be >= 0");
    }
    if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) {
      throw ValidationError("outlier fraction must lie in [0, 1]");
    }
    if (labeled_per_class < 0) throw ValidationError("labeled_per_class must be >= 0");
  }
};

struct DriftStream {
  Stream stream;
  // Segment of each record; seed records belong to segment 0.
  std::vector<int> segment;
  // Class means at the start of each segment, [segment][class].
  std::vector<std::vector<FeatureVector>> segment_means;

  std::vector<StreamRecord> labeled() const {
    std::vector<StreamRecord> out;
    for (const auto& r : stream.records) if (r.supervised) out.push_back(r);
    return out;
  }
};

namespace detail {

inline FeatureVector random_unit(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  FeatureVector v(d);
  do {
    for (Eigen::Index k = 0; k < d; ++k) v(k) = normal(rng);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

}  // namespace detail

/// Clusters that drift over `segments` equal slices of the stream:
///   relocate - means jump by `displacement` at each segment boundary,
///   shift    - means move linearly, `displacement` per segment,
///   rotate   - means rotate in the first two coordinates, `displacement` radians per segment.
/// The first `labeled_per_class` records of each class are supervised and drawn at the
/// starting means. Outliers have no label.
inline DriftStream generate_drift_stream(const DriftSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick_class(0, spec.classes - 1);
  const Eigen::Index d = spec.dimension;

  std::vector<FeatureVector> base(static_cast<std::size_t>(spec.classes));
  std::vector<FeatureVector> direction(static_cast<std::size_t>(spec.classes));
  for (int c = 0; c < spec.classes; ++c) {
    base[static_cast<std::size_t>(c)] = spec.separation * detail::random_unit(d, rng);
    direction[static_cast<std::size_t>(c)] = detail::random_unit(d, rng);
  }
  auto class_id = [&](int c) { return spec.binary_labels ? (c == 0 ? -1 : 1) : c; };

  // progress in [0, segments): segment index plus fraction through it
  auto mean_at = [&](int c, double progress) -> FeatureVector {
    const auto& m0 = base[static_cast<std::size_t>(c)];
    switch (spec.drift) {
      case DriftKind::relocate:
        return m0 + std::floor(progress) * spec.displacement * direction[static_cast<std::size_t>(c)];
      case DriftKind::shift:
        return m0 + progress * spec.displacement * direction[static_cast<std::size_t>(c)];
      case DriftKind::rotate: {
        const double angle = progress * spec.displacement;
        FeatureVector m = m0;
        m(0) = std::cos(angle) * m0(0) - std::sin(angle) * m0(1);
        m(1) = std::sin(angle) * m0(0) + std::cos(angle) * m0(1);
        return m;
      }
    }
    return m0;
  };
  auto sample_at = [&](int c, double progress) {
    FeatureVector x = mean_at(c, progress);
    for (Eigen::Index k = 0; k < d; ++k) x(k) += spec.noise * normal(rng);
    return x;
  };

  DriftStream out;
  out.stream.dimension = d;
  out.stream.num_classes = spec.classes;
  for (int s = 0; s < spec.segments; ++s) {
    std::vector<FeatureVector> means;
    for (int c = 0; c < spec.classes; ++c) means.push_back(mean_at(c, s));
    out.segment_means.push_back(std::move(means));
  }

  std::uint64_t frame = 0;
  for (int c = 0; c < spec.classes; ++c) {
    for (int k = 0; k < spec.labeled_per_class; ++k) {
      out.stream.records.push_back({frame++, sample_at(c, 0.0), class_id(c), true});
      out.segment.push_back(0);
    }
  }
  for (std::size_t t = 0; t < spec.n; ++t) {
    const double progress = static_cast<double>(t) * spec.segments / static_cast<double>(spec.n);
    StreamRecord rec;
    rec.frame_id = frame++;
    if (unit(rng) < spec.outlier_fraction) {
      rec.features = spec.outlier_radius * detail::random_unit(d, rng);
    } else {
      const int c = pick_class(rng);
      rec.features = sample_at(c, progress);
      rec.true_label = class_id(c);
    }
    out.stream.records.push_back(std::move(rec));
    out.segment.push_back(static_cast<int>(std::floor(progress)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-frame evaluation
// ---------------------------------------------------------------------------

struct LatencyStats {
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  double frames_per_second = 0.0;
  std::size_t samples = 0;
};

inline LatencyStats latency_stats(std::vector<double> millis) {
  LatencyStats s;
  s.samples = millis.size();
  if (millis.empty()) return s;
  double total = 0.0;
  for (double m : millis) total += m;
  s.mean_ms = total / static_cast<double>(millis.size());
  std::sort(millis.begin(), millis.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(millis.size())));
  s.p95_ms = millis[std::max<std::size_t>(rank, 1) - 1];
  s.frames_per_second = s.mean_ms > 0.0 ? 1000.0 / s.mean_ms : 0.0;
  return s;
}

struct EvalReport {
  double precision = 1.0;
  double recall = 0.0;
  double f1 = 0.0;
  double abstention_rate = 0.0;
  std::size_t frames = 0;
  std::size_t predicted_frames = 0;
  std::size_t correct_frames = 0;
  std::size_t truth_frames = 0;
  LatencyStats latency;
  std::optional<std::string> axis;
  std::optional<double> axis_value;
};

/// Frame-level precision and recall over unsupervised records.
///
/// A frame is predicted when at least one record in it has a non-abstaining
/// prediction. A predicted frame is correct when all of its predictions agree and each
/// predicting record's true label equals that prediction. Precision is correct /
/// predicted (1 when nothing is predicted); recall is correct / frames with a true label.
inline EvalReport evaluate(std::span<const StreamRecord> stream, std::span<const Prediction> predictions) {
  if (stream.size() != predictions.size()) {
    throw ValidationError("predictions (" + std::to_string(predictions.size()) + ") misaligned with stream (" +
                          std::to_string(stream.size()) + ")");
  }
  struct Frame {
    std::set<int> predicted;
    bool any_prediction = false;
    bool mismatch = false;
    bool has_truth = false;
  };
  std::map<std::uint64_t, Frame> frames;
  std::size_t scored = 0, abstained = 0;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto& rec = stream[i];
    if (rec.supervised) continue;
    auto& f = frames[rec.frame_id];
    ++scored;
    if (rec.true_label) f.has_truth = true;
    const auto& p = predictions[i];
    if (p.abstained()) {
      ++abstained;
      continue;
    }
    f.any_prediction = true;
    f.predicted.insert(*p.label);
    if (rec.true_label != p.label) f.mismatch = true;
  }

  EvalReport r;
  r.frames = frames.size();
  for (const auto& [id, f] : frames) {
    if (f.has_truth) ++r.truth_frames;
    if (!f.any_prediction) continue;
    ++r.predicted_frames;
    if (f.predicted.size() == 1 && !f.mismatch) ++r.correct_frames;
  }
  r.precision = r.predicted_frames == 0 ? 1.0
                                        : static_cast<double>(r.correct_frames) / static_cast<double>(r.predicted_frames);
  r.recall = r.truth_frames == 0 ? 0.0
                                 : static_cast<double>(r.correct_frames) / static_cast<double>(r.truth_frames);
  r.f1 = (r.precision + r.recall) > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.abstention_rate = scored == 0 ? 0.0 : static_cast<double>(abstained) / static_cast<double>(scored);
  return r;
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

struct RunResult {
  std::vector<Prediction> predictions;     // aligned with the stream; supervised rows abstain
  std::vector<PredictionRecord> records;   // one per unsupervised record
  std::vector<double> step_millis;         // wall clock around step()
};

/// Feeds a stream through the online learner: supervised records become labels,
/// everything else is predicted.
inline RunResult run_online(std::span<const StreamRecord> stream, const LearnerConfig& config) {
  OnlineLearner learner(config);
  RunResult out;
  out.predictions.reserve(stream.size());
  for (const auto& rec : stream) {
    if (rec.supervised) {
      learner.add_labeled(rec.features, *rec.true_label);
      out.predictions.push_back({std::nullopt, 0.0});
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    auto record = learner.step(rec.features);
    const auto stop = std::chrono::steady_clock::now();
    out.step_millis.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    out.predictions.push_back(record.prediction);
    out.records.push_back(std::move(record));
  }
  return out;
}

/// Nearest-neighbor baseline trained only on the supervised records seen so far.
inline std::vector<Prediction> run_nn_baseline(std::span<const StreamRecord> stream, const Metric& metric,
                                               const KernelParams& params) {
  std::vector<LabeledExample> labeled;
  std::vector<Prediction> out;
  out.reserve(stream.size());
  for (const auto& rec : stream) {
    if (rec.supervised) {
      labeled.push_back({rec.features, *rec.true_label});
      out.push_back({std::nullopt, 0.0});
      continue;
    }
    out.push_back(nn_classify(rec.features, std::span<const LabeledExample>(labeled), metric, params));
  }
  return out;
}

enum class SweepAxis { epsilon, n_g };

inline SweepAxis sweep_axis_from_string(const std::string& name) {
  if (name == "epsilon") return SweepAxis::epsilon;
  if (name == "n_g") return SweepAxis::n_g;
  throw ValidationError("unknown sweep axis '" + name + "'");
}

/// One independent learner per value. On the epsilon axis gamma_g follows 10 * epsilon
/// unless `gamma_override` is set.
inline std::vector<EvalReport> sweep(SweepAxis axis, std::span<const double> values,
                                     std::span<const StreamRecord> stream, const LearnerConfig& base,
                                     std::optional<double> gamma_override = std::nullopt) {
  if (values.empty()) throw ValidationError("sweep needs at least one value");
  std::vector<EvalReport> reports;
  for (double value : values) {
    LearnerConfig config = base;
    if (axis == SweepAxis::epsilon) {
      config.kernel = KernelParams(base.kernel.sigma(), value);
      config.gamma = gamma_override.value_or(LearnerConfig::default_gamma(config.kernel));
    } else {
      if (!(value >= 1.0) || value != std::floor(value)) throw ValidationError("n_g values must be positive integers");
      config.budget = static_cast<std::size_t>(value);
      if (gamma_override) config.gamma = *gamma_override;
    }
    config.validate();
    const auto run = run_online(stream, config);
    auto report = evaluate(stream, run.predictions);
    report.latency = latency_stats(run.step_millis);
    report.axis = axis == SweepAxis::epsilon ? "epsilon" : "n_g";
    report.axis_value = value;
    reports.push_back(std::move(report));
  }
  return reports;
}

}  // namespace ohfs
