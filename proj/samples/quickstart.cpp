// Two labeled points, a stream of unlabeled ones, and a save/restore in the middle.

#include <cstdio>
#include <random>

#include "ohfs/online_learner.hpp"

int main() {
  using namespace ohfs;

  auto config = LearnerConfig::make(2, Metric::euclidean(), KernelParams(0.15, 1e-6), 50);
  OnlineLearner learner(config);

  FeatureVector a(2), b(2);
  a << 0.0, 0.0;
  b << 1.0, 1.0;
  learner.add_labeled(a, -1);
  learner.add_labeled(b, +1);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::bernoulli_distribution coin(0.5);

  int correct = 0, abstained = 0;
  for (int t = 0; t < 200; ++t) {
    const int truth = coin(rng) ? 1 : -1;
    FeatureVector x(2);
    x << (truth > 0 ? 1.0 : 0.0) + noise(rng), (truth > 0 ? 1.0 : 0.0) + noise(rng);
    if (t % 25 == 0) x << 8.0, -8.0;  // far from everything

    const auto rec = learner.step(x);
    if (rec.prediction.abstained()) {
      ++abstained;
    } else if (*rec.prediction.label == truth) {
      ++correct;
    }
  }
  std::printf("correct %d, abstained %d, representatives %zu, radius %.4f\n", correct, abstained,
              learner.quantizer().size(), learner.quantizer().radius);

  // The snapshot carries the whole state; a restored learner continues identically.
  const auto bytes = learner.snapshot();
  OnlineLearner copy = OnlineLearner::restore(bytes);
  FeatureVector probe(2);
  probe << 0.9, 1.05;
  const auto p1 = learner.step(probe);
  const auto p2 = copy.step(probe);
  std::printf("snapshot %zu bytes; probe -> %d (%.3f) and %d (%.3f) after restore\n", bytes.size(),
              *p1.prediction.label, p1.prediction.confidence, *p2.prediction.label, p2.prediction.confidence);
  return 0;
}
