#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ohfs/quantizer.hpp"
#include "test_support.hpp"

using namespace ohfs;

namespace {

FeatureVector point(double x) {
  FeatureVector v(1);
  v(0) = x;
  return v;
}

const Metric kEuclid = Metric::euclidean();

RepresentativeSet line_state(std::initializer_list<double> xs, double radius, std::size_t budget = 10) {
  RepresentativeSet s(budget);
  for (double x : xs) {
    s.centers.push_back(point(x));
    s.multiplicities.push_back(1);
  }
  s.radius = radius;
  return s;
}

// Brute-force post-conditions of a repartition.
void check_repartition(const RepresentativeSet& before, const RepartitionResult& after) {
  const auto& s = after.state;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      EXPECT_GE(kEuclid(s.centers[i], s.centers[j]), s.radius);
    }
  }
  std::vector<std::uint64_t> mass(s.size(), 0);
  ASSERT_EQ(after.remap.size(), before.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto target = after.remap[i];
    ASSERT_LT(target, s.size());
    const double d = kEuclid(before.centers[i], s.centers[target]);
    EXPECT_TRUE(d < s.radius || d == 0.0);
    mass[target] += before.multiplicities[i];
  }
  EXPECT_EQ(mass, s.multiplicities);
}

}  // namespace

TEST(Observe, DuplicateIsAbsorbed) {
  auto s = line_state({0.0}, 1.0);
  const auto out = observe(s, point(0.0), kEuclid);
  EXPECT_EQ(out.kind, AssignmentOutcome::Kind::merged);
  EXPECT_EQ(out.index, 0u);
  EXPECT_EQ(s.multiplicities, (std::vector<std::uint64_t>{2}));
}

TEST(Observe, BoundaryDistanceCreatesCenter) {
  auto s = line_state({0.0}, 1.0);
  const auto out = observe(s, point(1.0), kEuclid);
  EXPECT_EQ(out.kind, AssignmentOutcome::Kind::created);
  EXPECT_EQ(out.index, 1u);
  EXPECT_EQ(s.size(), 2u);
}

TEST(Observe, NearestCenterWinsTiesToLowestIndex) {
  auto s = line_state({0.0, 3.0, 1.0}, 2.5);
  EXPECT_EQ(observe(s, point(0.9), kEuclid).index, 2u);
  auto t = line_state({0.0, 2.0}, 2.5);
  EXPECT_EQ(observe(t, point(1.0), kEuclid).index, 0u);
}

TEST(Observe, RejectsBadInput) {
  auto s = line_state({0.0}, 1.0);
  FeatureVector two(2);
  two << 1.0, 2.0;
  EXPECT_THROW(observe(s, two, kEuclid), ValidationError);
  EXPECT_THROW(observe(s, point(std::nan("")), kEuclid), ValidationError);
  EXPECT_THROW(RepresentativeSet(0), ValidationError);
}

// Hand-run of the doubling at n_g = 4 on the points 0..5: the sixth point finds five
// centers, R starts from the smallest gap (1) and doubles to 2, the greedy pass keeps
// {0, 2, 4} with masses (2, 2, 1) and then 5 merges into 4.
TEST(Observe, DoublingOnALine) {
  RepresentativeSet s(4);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(observe(s, point(i), kEuclid).kind, AssignmentOutcome::Kind::created);
  }
  EXPECT_EQ(s.radius, 0.0);
  const auto out = observe(s, point(5), kEuclid);
  EXPECT_EQ(out.kind, AssignmentOutcome::Kind::repartitioned_then_assigned);
  EXPECT_FALSE(out.appended);
  EXPECT_EQ(out.index, 2u);
  EXPECT_EQ(out.remap, (std::vector<std::size_t>{0, 0, 1, 1, 2}));
  EXPECT_EQ(s.radius, 2.0);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.centers[0](0), 0.0);
  EXPECT_EQ(s.centers[1](0), 2.0);
  EXPECT_EQ(s.centers[2](0), 4.0);
  EXPECT_EQ(s.multiplicities, (std::vector<std::uint64_t>{2, 2, 2}));
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) EXPECT_GE(kEuclid(s.centers[i], s.centers[j]), s.radius);
  }
}

TEST(Repartition, GreedyOnFourPoints) {
  const auto before = line_state({0, 1, 2, 3}, 1.0);
  const auto after = repartition(before, kEuclid);
  EXPECT_EQ(after.state.radius, 2.0);
  ASSERT_EQ(after.state.size(), 2u);
  EXPECT_EQ(after.state.centers[0](0), 0.0);
  EXPECT_EQ(after.state.centers[1](0), 2.0);
  EXPECT_EQ(after.state.multiplicities, (std::vector<std::uint64_t>{2, 2}));
  check_repartition(before, after);
}

TEST(Repartition, SingleCenterOnlyDoublesRadius) {
  const auto before = line_state({3.0}, 1.5);
  const auto after = repartition(before, kEuclid);
  EXPECT_EQ(after.state.radius, 3.0);
  EXPECT_EQ(after.state.centers, before.centers);
  EXPECT_EQ(after.state.multiplicities, before.multiplicities);
}

TEST(Repartition, IdenticalCentersCollapse) {
  auto before = line_state({1.0, 1.0, 1.0}, 0.5);
  before.multiplicities = {2, 3, 4};
  const auto after = repartition(before, kEuclid);
  ASSERT_EQ(after.state.size(), 1u);
  EXPECT_EQ(after.state.multiplicities[0], 9u);
}

TEST(Repartition, BruteForcePostConditions) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(2, 30);
  std::uniform_int_distribution<int> mult(1, 6);
  std::uniform_real_distribution<double> radius(0.05, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    RepresentativeSet s(64);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      s.centers.push_back(test::random_vector(rng, 3));
      s.multiplicities.push_back(static_cast<std::uint64_t>(mult(rng)));
    }
    s.radius = radius(rng);
    check_repartition(s, repartition(s, kEuclid));
  }
}

TEST(CoverageAudit, EmptyHistory) {
  RepresentativeSet s(4);
  EXPECT_EQ(coverage_audit(std::span<const AbsorbedPoint>(), s, kEuclid), 0.0);
}

TEST(CoverageAudit, BeforeAnyRepartitionWithinR) {
  RepresentativeSet s(1000);
  std::vector<AbsorbedPoint> history;
  std::mt19937_64 rng(3);
  s.radius = 0.4;  // fixed radius, budget never reached
  for (int i = 0; i < 300; ++i) {
    const auto x = test::random_vector(rng, 2);
    track_assignment(history, x, observe(s, x, kEuclid));
  }
  const double audit = coverage_audit(std::span<const AbsorbedPoint>(history), s, kEuclid);
  EXPECT_LT(audit, s.radius);
}

class QuantizerStream : public ::testing::TestWithParam<std::size_t> {};

TEST_P(QuantizerStream, InvariantsHoldAfterEveryStep) {
  const std::size_t budget = GetParam();
  std::mt19937_64 rng(100 + budget);
  RepresentativeSet s(budget);
  std::vector<AbsorbedPoint> history;
  double last_radius = 0.0;
  bool repartitioned = false;
  for (int t = 1; t <= 1000; ++t) {
    const auto x = test::random_vector(rng, 3);
    const auto out = observe(s, x, kEuclid);
    track_assignment(history, x, out);
    repartitioned |= !out.remap.empty();

    ASSERT_EQ(s.total_multiplicity(), static_cast<std::uint64_t>(t));
    ASSERT_LE(s.size(), budget + 1);
    ASSERT_GE(s.radius, last_radius);
    last_radius = s.radius;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        ASSERT_GE(kEuclid(s.centers[i], s.centers[j]), s.radius);
      }
    }
    ASSERT_LE(coverage_audit(std::span<const AbsorbedPoint>(history), s, kEuclid), 2.0 * s.radius + 1e-12);
  }
  EXPECT_TRUE(repartitioned);
}

INSTANTIATE_TEST_SUITE_P(Budgets, QuantizerStream, ::testing::Values(4u, 8u));

TEST(Observe, Deterministic) {
  auto run = [] {
    std::mt19937_64 rng(42);
    RepresentativeSet s(6);
    for (int t = 0; t < 400; ++t) observe(s, test::random_vector(rng, 2), kEuclid);
    return s;
  };
  EXPECT_EQ(run(), run());
}
