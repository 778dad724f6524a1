// ohfs: command-line front end for the online quantized harmonic learner.
//
//   ohfs generate --drift relocate --seed 3 --out stream.txt
//   ohfs run --stream stream.txt --epsilon 1e-4 --predictions pred.csv
//   ohfs sweep --stream stream.txt --axis epsilon --values 1e-2,1e-4,1e-8 --csv curve.csv
//   ohfs regret --stream binary.txt --budget 16 --csv trajectory.csv
//   ohfs oracle-check
//
// Reports go to stdout as JSON. Exit codes: 0 ok, 1 oracle check failed, 2 invalid
// input, 3 numerical failure.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ohfs/baselines_oracles.hpp"
#include "ohfs/eval.hpp"
#include "ohfs/online_learner.hpp"

using namespace ohfs;
using nlohmann::json;

namespace {

struct LearnerOptions {
  std::string metric = "euclidean";
  std::string weights = "radial";
  double sigma = 0.025;
  double epsilon = 1e-8;
  std::optional<double> gamma;
  std::size_t budget = 500;

  void attach(CLI::App* app) {
    app->add_option("--metric", metric, "euclidean, weighted or face")->capture_default_str();
    app->add_option("--weights", weights, "pixel weights for weighted/face metrics: radial or uniform")
        ->capture_default_str();
    app->add_option("--sigma", sigma, "kernel bandwidth")->capture_default_str();
    app->add_option("--epsilon", epsilon, "edge sparsification threshold")->capture_default_str();
    app->add_option("--gamma", gamma, "regularizer (default 10 * epsilon)");
    app->add_option("--budget,--n-g", budget, "maximum number of representatives")->capture_default_str();
  }

  LearnerConfig config(Eigen::Index dimension) const {
    const auto kind = metric_kind_from_string(metric);
    Metric m = Metric::euclidean();
    if (kind != MetricKind::euclidean) {
      CenterWeights psi = weights == "uniform"  ? CenterWeights::uniform(dimension)
                          : weights == "radial" ? CenterWeights::radial_for_dimension(dimension)
                                                : throw ValidationError("unknown weights '" + weights + "'");
      m = kind == MetricKind::face ? Metric::face(std::move(psi)) : Metric::weighted(std::move(psi));
    }
    return LearnerConfig::make(dimension, std::move(m), KernelParams(sigma, epsilon), budget, gamma);
  }
};

json to_json(const LearnerConfig& c) {
  return {{"dimension", c.dimension}, {"metric", to_string(c.metric.kind())},  {"sigma", c.kernel.sigma()},
          {"epsilon", c.kernel.epsilon()}, {"gamma", c.gamma}, {"budget", c.budget}};
}

json to_json(const EvalReport& r) {
  json j{{"precision", r.precision},
         {"recall", r.recall},
         {"f1", r.f1},
         {"abstention_rate", r.abstention_rate},
         {"frames", r.frames},
         {"predicted_frames", r.predicted_frames},
         {"correct_frames", r.correct_frames},
         {"truth_frames", r.truth_frames},
         {"latency",
          {{"mean_ms", r.latency.mean_ms},
           {"p95_ms", r.latency.p95_ms},
           {"frames_per_second", r.latency.frames_per_second},
           {"samples", r.latency.samples}}}};
  if (r.axis) j["axis"] = *r.axis;
  if (r.axis_value) j["value"] = *r.axis_value;
  return j;
}

json to_json(const RegretReport& r) {
  return {{"term_hfs", r.term_hfs},   {"term_online", r.term_online},
          {"term_quant", r.term_quant}, {"total_lhs", r.total_lhs},
          {"bound", r.bound()},         {"inequality_holds", r.inequality_holds()}};
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out.precision(17);
  return out;
}

void emit(const json& report, const std::string& path) {
  if (path.empty()) {
    std::cout << report.dump(2) << "\n";
  } else {
    open_out(path) << report.dump(2) << "\n";
  }
}

std::string prediction_field(const Prediction& p) { return p.label ? std::to_string(*p.label) : "?"; }

// ---------------------------------------------------------------------------

struct RunCommand {
  std::string stream_path, predictions_path, report_path, state_in, state_out;
  bool baseline = false;
  LearnerOptions learner;

  void attach(CLI::App& root) {
    auto* app = root.add_subcommand("run", "run the online learner over a stream");
    app->add_option("--stream", stream_path, "input stream file")->required();
    app->add_option("--predictions", predictions_path, "per-record predictions CSV");
    app->add_option("--report", report_path, "JSON report path (default stdout)");
    app->add_option("--state-in", state_in, "resume from a saved learner state");
    app->add_option("--state-out", state_out, "save the learner state after the run");
    app->add_flag("--baseline", baseline, "also report the nearest-neighbor baseline");
    learner.attach(app);
    app->callback([this] { execute(); });
  }

  void execute() const {
    const auto stream = load_stream(stream_path);
    auto learner_state = [&] {
      if (state_in.empty()) return OnlineLearner(learner.config(stream.dimension));
      std::ifstream in(state_in, std::ios::binary);
      if (!in) throw ValidationError("cannot open " + state_in);
      const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      auto restored = OnlineLearner::restore(bytes);
      if (restored.config().dimension != stream.dimension) {
        throw ValidationError("saved state has dimension " + std::to_string(restored.config().dimension) +
                              ", stream has " + std::to_string(stream.dimension));
      }
      return restored;
    };
    OnlineLearner model = learner_state();

    std::vector<Prediction> predictions;
    std::vector<double> millis;
    std::optional<std::ofstream> csv;
    if (!predictions_path.empty()) {
      csv = open_out(predictions_path);
      *csv << "frame_id,prediction,confidence,outlier,graph_size,latency_ms\n";
    }
    for (const auto& rec : stream.records) {
      if (rec.supervised) {
        model.add_labeled(rec.features, *rec.true_label);
        predictions.push_back({std::nullopt, 0.0});
        continue;
      }
      const auto start = std::chrono::steady_clock::now();
      const auto out = model.step(rec.features);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      millis.push_back(ms);
      predictions.push_back(out.prediction);
      if (csv) {
        *csv << rec.frame_id << ',' << prediction_field(out.prediction) << ',' << out.prediction.confidence << ','
             << (out.outlier ? 1 : 0) << ',' << out.graph_size << ',' << ms << '\n';
      }
    }
    auto report = evaluate(stream.records, predictions);
    report.latency = latency_stats(millis);

    json j{{"config", to_json(model.config())},
           {"report", to_json(report)},
           {"representatives", model.quantizer().size()},
           {"radius", model.quantizer().radius}};
    if (baseline) {
      j["baseline"] = to_json(evaluate(stream.records, run_nn_baseline(stream.records, model.config().metric,
                                                                         model.config().kernel)));
    }
    if (!state_out.empty()) {
      const auto bytes = model.snapshot();
      std::ofstream out(state_out, std::ios::binary);
      if (!out) throw ValidationError("cannot write " + state_out);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    emit(j, report_path);
  }
};

struct SweepCommand {
  std::string stream_path, axis = "epsilon", csv_path, report_path;
  std::vector<double> values;
  LearnerOptions learner;

  void attach(CLI::App& root) {
    auto* app = root.add_subcommand("sweep", "independent runs across epsilon or n_g");
    app->add_option("--stream", stream_path, "input stream file")->required();
    app->add_option("--axis", axis, "epsilon or n_g")->capture_default_str();
    app->add_option("--values", values, "comma-separated values")->required()->delimiter(',');
    app->add_option("--csv", csv_path, "curve data CSV");
    app->add_option("--report", report_path, "JSON report path (default stdout)");
    learner.attach(app);
    app->callback([this] { execute(); });
  }

  void execute() const {
    const auto stream = load_stream(stream_path);
    const auto sweep_axis = sweep_axis_from_string(axis);
    const auto base = learner.config(stream.dimension);
    const auto reports = sweep(sweep_axis, values, stream.records, base, learner.gamma);
    json points = json::array();
    for (const auto& r : reports) points.push_back(to_json(r));
    if (!csv_path.empty()) {
      auto csv = open_out(csv_path);
      csv << axis << ",precision,recall,f1,abstention_rate,mean_ms,p95_ms\n";
      for (const auto& r : reports) {
        csv << *r.axis_value << ',' << r.precision << ',' << r.recall << ',' << r.f1 << ',' << r.abstention_rate
            << ',' << r.latency.mean_ms << ',' << r.latency.p95_ms << '\n';
      }
    }
    emit({{"axis", axis}, {"config", to_json(base)}, {"points", points}}, report_path);
  }
};

struct GenerateCommand {
  DriftSpec spec;
  std::string drift = "relocate", out_path;

  void attach(CLI::App& root) {
    auto* app = root.add_subcommand("generate", "write a synthetic drifting stream");
    app->add_option("--drift", drift, "rotate, shift or relocate")->capture_default_str();
    app->add_option("--seed", spec.seed)->capture_default_str();
    app->add_option("--n", spec.n, "unlabeled records")->capture_default_str();
    app->add_option("--classes", spec.classes)->capture_default_str();
    app->add_option("--dimension", spec.dimension)->capture_default_str();
    app->add_option("--segments", spec.segments)->capture_default_str();
    app->add_option("--noise", spec.noise)->capture_default_str();
    app->add_option("--separation", spec.separation)->capture_default_str();
    app->add_option("--displacement", spec.displacement)->capture_default_str();
    app->add_option("--outliers", spec.outlier_fraction, "fraction of injected outliers")->capture_default_str();
    app->add_option("--outlier-radius", spec.outlier_radius)->capture_default_str();
    app->add_option("--labeled-per-class", spec.labeled_per_class)->capture_default_str();
    app->add_flag("--binary", spec.binary_labels, "use labels -1/+1 (two classes)");
    app->add_option("--out", out_path, "output file (default stdout)");
    app->callback([this] { execute(); });
  }

  void execute() {
    spec.drift = drift_kind_from_string(drift);
    const auto generated = generate_drift_stream(spec);
    if (out_path.empty()) {
      write_stream(std::cout, generated.stream);
    } else {
      save_stream(out_path, generated.stream);
    }
  }
};

struct RegretCommand {
  std::string stream_path, csv_path, report_path;
  std::size_t max_examples = 2000;
  LearnerOptions learner;

  void attach(CLI::App& root) {
    auto* app = root.add_subcommand("regret", "decompose the squared error of a -1/+1 stream");
    app->add_option("--stream", stream_path, "input stream; every record needs a -1/+1 label")->required();
    app->add_option("--csv", csv_path, "per-step trajectory CSV");
    app->add_option("--report", report_path, "JSON report path (default stdout)");
    app->add_option("--max-examples", max_examples, "oracle size cap")->capture_default_str();
    learner.budget = 16;
    learner.sigma = 0.3;
    learner.epsilon = 1e-4;
    learner.attach(app);
    app->callback([this] { execute(); });
  }

  void execute() const {
    const auto stream = load_stream(stream_path);
    std::vector<RegretExample> examples;
    for (const auto& rec : stream.records) {
      if (!rec.true_label) {
        throw ValidationError("frame " + std::to_string(rec.frame_id) + " has no ground-truth label");
      }
      examples.push_back({rec.features, *rec.true_label, rec.supervised});
    }
    const auto config = learner.config(stream.dimension);
    const auto report = regret_decompose(examples, config, max_examples);
    if (!csv_path.empty()) {
      // The last column is a t^-1/2 reference curve that meets the final bound at t = n.
      auto csv = open_out(csv_path);
      csv << "t,hfs,online,quant,lhs,reference\n";
      const double scale = report.bound() * std::sqrt(static_cast<double>(report.trajectory_lhs.size()));
      for (std::size_t t = 0; t < report.trajectory_lhs.size(); ++t) {
        csv << t + 1 << ',' << report.trajectory_hfs[t] << ',' << report.trajectory_online[t] << ','
            << report.trajectory_quant[t] << ',' << report.trajectory_lhs[t] << ','
            << scale / std::sqrt(static_cast<double>(t + 1)) << '\n';
      }
    }
    emit({{"config", to_json(config)}, {"examples", examples.size()}, {"regret", to_json(report)}}, report_path);
  }
};

struct OracleCommand {
  int graphs = 200;
  std::uint64_t walks = 100'000;
  int walk_graphs = 20;
  std::uint64_t seed = 1;
  std::uint64_t max_steps = 1'000'000;
  bool failed = false;

  void attach(CLI::App& root) {
    auto* app = root.add_subcommand("oracle-check", "compact-vs-expanded and random-walk cross-checks");
    app->add_option("--graphs", graphs, "random graphs for the compact/expanded check")->capture_default_str();
    app->add_option("--walk-graphs", walk_graphs, "random graphs for the Monte-Carlo check")->capture_default_str();
    app->add_option("--walks", walks, "walks per estimate")->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--max-steps", max_steps, "abort a walk after this many moves")->capture_default_str();
    app->callback([this] { execute(); });
  }

  static QuantizedGraph random_graph(std::mt19937_64& rng, Index n, Index n_labeled) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> mult(1, 5);
    QuantizedGraph g;
    g.weights = Eigen::MatrixXd::Zero(n, n);
    g.multiplicity = Eigen::VectorXd::Ones(n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        if (u(rng) < 0.4) g.weights(i, j) = g.weights(j, i) = 0.05 + 0.95 * u(rng);
      }
      if (i < n_labeled) {
        g.labeled.push_back(i);
      } else {
        g.unlabeled.push_back(i);
        g.multiplicity(i) = mult(rng);
        // keep every unlabeled vertex reachable from a label
        if (g.weights(i, i - 1) == 0.0) g.weights(i, i - 1) = g.weights(i - 1, i) = 0.2 + 0.8 * u(rng);
      }
    }
    return g;
  }

  void execute() {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> size(3, 12);
    const double gammas[] = {0.0, 0.1, 1.0};
    double worst = 0.0;
    for (int trial = 0; trial < graphs; ++trial) {
      const auto g = random_graph(rng, size(rng), 2);
      worst = std::max(worst, expand_equivalence_check(g, LabelMatrix(std::vector<int>{1, -1}), gammas[trial % 3]));
    }
    int within = 0;
    double worst_z = 0.0;
    for (int trial = 0; trial < walk_graphs; ++trial) {
      const auto g = random_graph(rng, size(rng), 2);
      const double gamma = 0.5;
      const auto sol = solve(g, LabelMatrix(std::vector<int>{1, -1}), gamma);
      const std::vector<double> y{1.0, -1.0};
      const auto est = mc_walk_estimate(g, y, gamma, g.unlabeled.front(), walks, seed + static_cast<std::uint64_t>(trial),
                                      max_steps);
      const double z = std::abs(est.estimate - sol.scores(0, 1)) / std::max(est.std_error, 1e-300);
      worst_z = std::max(worst_z, z);
      if (z <= 4.0) ++within;
    }
    const bool exact_ok = worst <= 1e-10;
    const bool walk_ok = walk_graphs == 0 || within >= 0.95 * walk_graphs;
    failed = !(exact_ok && walk_ok);
    emit({{"compact_vs_expanded", {{"graphs", graphs}, {"max_error", worst}, {"pass", exact_ok}}},
          {"monte_carlo",
           {{"graphs", walk_graphs}, {"walks", walks}, {"within_4_stderr", within}, {"worst_z", worst_z},
            {"pass", walk_ok}}},
          {"pass", !failed}},
         "");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online quantized harmonic function learner"};
  app.require_subcommand(1);
  RunCommand run;
  SweepCommand sweep_cmd;
  GenerateCommand generate;
  RegretCommand regret;
  OracleCommand oracle;
  run.attach(app);
  sweep_cmd.attach(app);
  generate.attach(app);
  regret.attach(app);
  oracle.attach(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return oracle.failed ? 1 : 0;
}
