#include <sstream>

#include <gtest/gtest.h>

#include "lanescope/ingest.hpp"
#include "lanescope/synth.hpp"

namespace lanescope {
namespace {

TEST(GenScenario, ConstantVelocity) {
  ScenarioSpec spec;
  spec.duration_frames = 10;
  spec.vehicles = {{1, 2, 0.0, 30.0, {}, {}}};
  auto t = gen_scenario(spec, 0)[0];
  ASSERT_EQ(t.size(), 10u);
  for (std::size_t f = 0; f < t.size(); ++f) {
    EXPECT_DOUBLE_EQ(t[f].x, 6.0 * static_cast<double>(f));
    EXPECT_EQ(t[f].vx, 30.0);  // conserved exactly
    EXPECT_EQ(t[f].vy, 0.0);
    EXPECT_EQ(t[f].y, 6.0);
  }
}

TEST(GenScenario, EulerIntegration) {
  ScenarioSpec spec;
  spec.duration_frames = 4;
  spec.vehicles = {{1, 1, 0.0, 20.0, {{0, 1.0}, {2, -2.0}}, {}}};
  auto t = gen_scenario(spec, 0)[0];
  // v: 20, 20.2, 20.4, 20.0 ; x: 0, 4, 8.04, 12.12
  EXPECT_DOUBLE_EQ(t[1].vx, 20.2);
  EXPECT_DOUBLE_EQ(t[3].vx, 20.0);
  EXPECT_DOUBLE_EQ(t[3].x, 12.12);
  EXPECT_EQ(t[2].ax, -2.0);
}

TEST(GenScenario, CosineLaneChange) {
  ScenarioSpec spec;
  spec.duration_frames = 30;
  spec.vehicles = {{1, 1, 0.0, 30.0, {}, LaneChangeCommand{5, 20, +1}}};
  auto t = gen_scenario(spec, 0)[0];
  EXPECT_EQ(t.front().y, 2.0);
  EXPECT_EQ(t.back().y - t.front().y, 4.0);
  EXPECT_EQ(t[25].y, 6.0);
  EXPECT_EQ(t.front().lane_id, 1);
  EXPECT_EQ(t.back().lane_id, 2);
  // lateral speed peaks at the middle of the command
  std::size_t argmax = 0;
  for (std::size_t f = 0; f < t.size(); ++f)
    if (t[f].vy > t[argmax].vy) argmax = f;
  EXPECT_EQ(argmax, 15u);
  EXPECT_NEAR(t[15].vy, 4.0 * M_PI / (2.0 * 4.0), 1e-12);
  EXPECT_NEAR(t[15].ay, 0.0, 1e-12);
  EXPECT_EQ(count_lane_changes(t), 1u);
}

TEST(GenScenario, DeterministicPerSeed) {
  auto spec = random_lane_change_spec(42, 100, 0);
  spec.noise_std = 0.1;
  auto a = gen_scenario(spec, 9), b = gen_scenario(spec, 9), c = gen_scenario(spec, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(GenScenario, SpecErrors) {
  ScenarioSpec spec;
  spec.vehicles = {{1, 2, 0.0, 30.0, {}, {}}, {2, 2, 3.0, 30.0, {}, {}}};
  EXPECT_THROW(gen_scenario(spec, 0), SpecError);
  spec.vehicles = {{1, 3, 0.0, 30.0, {}, LaneChangeCommand{0, 10, +1}}};
  EXPECT_THROW(gen_scenario(spec, 0), SpecError);
  spec.vehicles = {{1, 4, 0.0, 30.0, {}, {}}};
  EXPECT_THROW(gen_scenario(spec, 0), SpecError);
  spec.vehicles = {};
  spec.lane_count = 4;
  EXPECT_THROW(gen_scenario(spec, 0), SpecError);
}

TEST(GenScenario, CsvRoundTripThroughIngest) {
  auto spec = random_lane_change_spec(3, 10, 0);
  auto tracks = gen_scenario(spec, 3);
  std::stringstream csv;
  write_tracks_csv(csv, tracks);
  auto parsed = normalize(parse_tracks(csv));
  ASSERT_EQ(parsed.size(), tracks.size());
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    ASSERT_EQ(parsed[i].size(), tracks[i].size());
    for (std::size_t f = 0; f < tracks[i].size(); ++f) EXPECT_EQ(parsed[i][f], tracks[i][f]);
  }
}

TEST(GenScenario, RandomSpecHasSingleEgoLaneChange) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto spec = random_lane_change_spec(seed, 1, 0);
    EXPECT_NO_THROW(spec.validate());
    auto tracks = gen_scenario(spec, seed);
    EXPECT_EQ(count_lane_changes(tracks[0]), 1u);
    EXPECT_GE(tracks.size(), 3u);
  }
}

HmmSpec identity_spec(int k, std::int64_t length, double self_prob, std::uint64_t seed) {
  HmmSpec spec;
  spec.num_states = k;
  spec.length = length;
  spec.self_prob = self_prob;
  spec.seed = seed;
  spec.covariances.assign(static_cast<std::size_t>(k), Eigen::MatrixXd::Identity(12, 12));
  return spec;
}

Eigen::MatrixXd empirical_transitions(const std::vector<int>& z, int k) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k, k);
  for (std::size_t t = 1; t < z.size(); ++t) c(z[t - 1], z[t]) += 1.0;
  for (int i = 0; i < k; ++i) c.row(i) /= c.row(i).sum();
  return c;
}

TEST(GenHmm, SingleStateIsConstant) {
  auto s = gen_hmm_sequence(identity_spec(1, 500, 0.5, 1));
  for (int z : s.labels) EXPECT_EQ(z, s.labels.front());
  EXPECT_EQ(s.features.rows(), 500);
  EXPECT_EQ(s.features.cols(), 12);
}

TEST(GenHmm, SelfTransitionFraction) {
  auto s = gen_hmm_sequence(identity_spec(3, 10000, 0.95, 2));
  std::size_t same = 0;
  for (std::size_t t = 1; t < s.labels.size(); ++t) same += s.labels[t] == s.labels[t - 1];
  EXPECT_NEAR(static_cast<double>(same) / 9999.0, 0.95, 0.01);
}

TEST(GenHmm, EmpiricalTransitionsConverge) {
  auto spec = identity_spec(3, 100000, 0.9, 4);
  auto s = gen_hmm_sequence(spec);
  Eigen::MatrixXd diff = empirical_transitions(s.labels, 3) - spec.transition_matrix();
  EXPECT_LT(diff.cwiseAbs().maxCoeff(), 0.01);
}

TEST(GenHmm, EmissionCovarianceMatchesSpec) {
  auto spec = identity_spec(2, 40000, 0.95, 5);
  spec.covariances = separated_covariances(2, 12, 8);
  auto s = gen_hmm_sequence(spec);
  for (int k = 0; k < 2; ++k) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(12, 12);
    double n = 0;
    for (Eigen::Index t = 0; t < s.features.rows(); ++t)
      if (s.labels[static_cast<std::size_t>(t)] == k) {
        acc += s.features.row(t).transpose() * s.features.row(t);
        n += 1;
      }
    acc /= n;
    const auto& truth = spec.covariances[static_cast<std::size_t>(k)];
    EXPECT_LT((acc - truth).norm() / truth.norm(), 0.05);
  }
}

TEST(GenHmm, Deterministic) {
  auto a = gen_hmm_sequence(identity_spec(3, 300, 0.9, 77));
  auto b = gen_hmm_sequence(identity_spec(3, 300, 0.9, 77));
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_TRUE((a.features.array() == b.features.array()).all());
}

TEST(GenHmm, RejectsInvalidSpec) {
  auto spec = identity_spec(2, 10, 1.0, 0);
  EXPECT_THROW(gen_hmm_sequence(spec), InvalidArgument);
  spec = identity_spec(2, 10, 0.9, 0);
  spec.covariances[1](0, 0) = -1;
  EXPECT_THROW(gen_hmm_sequence(spec), InvalidArgument);
}

}  // namespace
}  // namespace lanescope
