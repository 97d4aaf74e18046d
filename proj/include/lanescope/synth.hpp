#pragma once

// Seeded generators: scripted highway lane-change traffic and ground-truth
// zero-mean Gaussian HMM feature sequences.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lanescope/core.hpp"
#include "lanescope/errors.hpp"
#include "lanescope/random.hpp"

namespace lanescope {

struct AccelSegment {
  std::int64_t start_frame = 0;  // relative to the scenario start
  double ax = 0.0;               // m/s^2, held until the next segment
};

struct LaneChangeCommand {
  std::int64_t start_frame = 0;
  std::int64_t duration_frames = 20;
  int direction = +1;  // +1 towards higher lane ids (+y), -1 towards lower
};

struct VehicleScript {
  std::int64_t vehicle_id = 0;
  int lane = 1;
  double x = 0.0;
  double vx = 30.0;
  std::vector<AccelSegment> accelerations;
  std::optional<LaneChangeCommand> lane_change;
};

struct ScenarioSpec {
  int lane_count = 3;
  double lane_width = 4.0;
  std::vector<VehicleScript> vehicles;
  std::int64_t duration_frames = 100;
  double rate_hz = 5.0;
  std::int64_t frame_offset = 0;
  double min_gap = 5.0;     // same-lane initial spacing below this is an overlap
  double noise_std = 0.0;   // optional Gaussian noise on recorded positions (m)

  double lane_center(int lane) const { return (lane - 0.5) * lane_width; }

  int lane_of(double y) const {
    int lane = static_cast<int>(std::floor(y / lane_width)) + 1;
    return std::clamp(lane, 1, lane_count);
  }

  void validate() const {
    if (lane_count < 2 || lane_count > 3) throw SpecError("lane_count must be 2 or 3");
    if (!(lane_width > 0) || duration_frames <= 0 || !(rate_hz > 0) || !(min_gap >= 0) || !(noise_std >= 0))
      throw SpecError("lane width, duration and rate must be positive");
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      const auto& v = vehicles[i];
      if (v.lane < 1 || v.lane > lane_count)
        throw SpecError("vehicle " + std::to_string(v.vehicle_id) + " starts outside the road");
      if (v.lane_change) {
        const auto& lc = *v.lane_change;
        int target = v.lane + (lc.direction > 0 ? 1 : -1);
        if (lc.direction == 0 || target < 1 || target > lane_count)
          throw SpecError("vehicle " + std::to_string(v.vehicle_id) + " changes lane off the road");
        if (lc.duration_frames <= 0 || lc.start_frame < 0)
          throw SpecError("lane-change command needs a positive duration");
      }
      for (std::size_t j = i + 1; j < vehicles.size(); ++j) {
        const auto& w = vehicles[j];
        if (v.vehicle_id == w.vehicle_id) throw SpecError("duplicate vehicle id " + std::to_string(v.vehicle_id));
        if (v.lane == w.lane && std::abs(v.x - w.x) < min_gap)
          throw SpecError("vehicles " + std::to_string(v.vehicle_id) + " and " + std::to_string(w.vehicle_id) +
                          " overlap in lane " + std::to_string(v.lane));
      }
    }
  }
};

// Explicit Euler for the longitudinal motion; lateral motion follows a cosine
// ramp of one lane width across the commanded duration.
inline std::vector<Trajectory> gen_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const double dt = 1.0 / spec.rate_hz;
  std::vector<Trajectory> out;
  out.reserve(spec.vehicles.size());
  for (const auto& v : spec.vehicles) {
    Trajectory t;
    t.reserve(static_cast<std::size_t>(spec.duration_frames));
    double x = v.x, vx = v.vx;
    const double y0 = spec.lane_center(v.lane);
    for (std::int64_t f = 0; f < spec.duration_frames; ++f) {
      double ax = 0.0;
      for (const auto& seg : v.accelerations)
        if (seg.start_frame <= f) ax = seg.ax;

      double y = y0, vy = 0.0, ay = 0.0;
      if (v.lane_change) {
        const auto& lc = *v.lane_change;
        const double width = spec.lane_width * (lc.direction > 0 ? 1.0 : -1.0);
        const double duration = static_cast<double>(lc.duration_frames) * dt;
        const double s = std::clamp(static_cast<double>(f - lc.start_frame) / static_cast<double>(lc.duration_frames),
                                    0.0, 1.0);
        y = y0 + width * 0.5 * (1.0 - std::cos(std::numbers::pi * s));
        if (f >= lc.start_frame && f <= lc.start_frame + lc.duration_frames) {
          vy = width * std::numbers::pi / (2.0 * duration) * std::sin(std::numbers::pi * s);
          ay = width * std::numbers::pi * std::numbers::pi / (2.0 * duration * duration) * std::cos(std::numbers::pi * s);
        }
      }

      VehicleState s;
      s.vehicle_id = v.vehicle_id;
      s.frame = spec.frame_offset + f;
      s.x = x;
      s.y = y;
      s.vx = vx;
      s.vy = vy;
      s.ax = ax;
      s.ay = ay;
      s.lane_id = spec.lane_of(y);
      if (spec.noise_std > 0.0) {
        s.x += spec.noise_std * standard_normal(rng);
        s.y += spec.noise_std * standard_normal(rng);
      }
      t.push_back(s);

      x += vx * dt;
      vx += ax * dt;
    }
    out.push_back(std::move(t));
  }
  return out;
}

struct RandomScenarioOptions {
  int lane_count = 3;
  double rate_hz = 25.0;
  std::int64_t duration_frames = 250;  // 10 s at 25 Hz
  int min_neighbors = 2;
  int max_neighbors = 7;
  double lane_change_seconds = 4.0;
};

// A random single-ego lane-change scenario. The ego is vehicle `id_base` and
// drives in the middle of the ROI; neighbours occupy all lanes with scripted
// piecewise-constant accelerations.
inline ScenarioSpec random_lane_change_spec(std::uint64_t seed, std::int64_t id_base, std::int64_t frame_offset,
                                            const RandomScenarioOptions& opt = {}) {
  Rng rng(seed);
  ScenarioSpec spec;
  spec.lane_count = opt.lane_count;
  spec.rate_hz = opt.rate_hz;
  spec.duration_frames = opt.duration_frames;
  spec.frame_offset = frame_offset;

  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  VehicleScript ego;
  ego.vehicle_id = id_base;
  ego.lane = uniform_int(1, opt.lane_count);
  ego.x = 0.0;
  ego.vx = uniform(rng, 25.0, 32.0);
  const int direction = ego.lane == 1 ? +1 : (ego.lane == opt.lane_count ? -1 : (bernoulli(0.5, rng) ? 1 : -1));
  LaneChangeCommand lc;
  lc.direction = direction;
  lc.duration_frames = static_cast<std::int64_t>(std::llround(opt.lane_change_seconds * opt.rate_hz));
  const std::int64_t slack = std::max<std::int64_t>(1, opt.duration_frames - lc.duration_frames);
  lc.start_frame = static_cast<std::int64_t>(uniform(rng, 0.3, 0.5) * static_cast<double>(slack));
  ego.lane_change = lc;
  ego.accelerations = {{0, uniform(rng, -0.5, 0.5)}, {lc.start_frame, uniform(rng, -1.0, 1.5)},
                       {lc.start_frame + lc.duration_frames, uniform(rng, -0.5, 0.5)}};
  spec.vehicles.push_back(ego);

  // Paths are simulated up front so that no two vehicles sharing a lane ever
  // come closer than kMinSeparation (there is no car-following model).
  constexpr double kMinSeparation = 10.0;
  auto path_of = [&](const VehicleScript& script) {
    ScenarioSpec one = spec;
    one.vehicles = {script};
    return gen_scenario(one, 0).front();
  };
  auto conflicts = [&](const Trajectory& a, const Trajectory& b) {
    for (std::size_t f = 0; f < a.size(); ++f)
      if (std::abs(a[f].y - b[f].y) < 0.75 * spec.lane_width && std::abs(a[f].x - b[f].x) < kMinSeparation)
        return true;
    return false;
  };
  std::vector<Trajectory> paths{path_of(ego)};

  const int n = uniform_int(opt.min_neighbors, opt.max_neighbors);
  std::int64_t next_id = id_base + 1;
  for (int attempt = 0; static_cast<int>(spec.vehicles.size()) < n + 1 && attempt < 200; ++attempt) {
    VehicleScript v;
    v.vehicle_id = next_id;
    v.lane = uniform_int(1, opt.lane_count);
    v.x = uniform(rng, -45.0, 45.0);
    v.vx = ego.vx + uniform(rng, -5.0, 5.0);
    const auto third = opt.duration_frames / 3;
    v.accelerations = {{0, uniform(rng, -1.5, 1.5)}, {third, uniform(rng, -1.5, 1.5)},
                       {2 * third, uniform(rng, -1.5, 1.5)}};
    auto path = path_of(v);
    bool clash = false;
    for (const auto& other : paths) clash = clash || conflicts(path, other);
    if (clash) continue;
    spec.vehicles.push_back(v);
    paths.push_back(std::move(path));
    ++next_id;
  }
  return spec;
}

// Writes trajectories in the highD column layout. With highd_axes the lateral
// axis is flipped so that ingest's normalisation restores the original frame.
inline void write_tracks_csv(std::ostream& os, const std::vector<Trajectory>& trajectories, bool highd_axes = true) {
  const double s = highd_axes ? -1.0 : 1.0;
  os << "frame,id,x,y,xVelocity,yVelocity,xAcceleration,yAcceleration,laneId\n";
  os << std::setprecision(17);
  for (const auto& t : trajectories)
    for (const auto& v : t)
      os << v.frame << ',' << v.vehicle_id << ',' << v.x << ',' << s * v.y << ',' << v.vx << ',' << s * v.vy << ','
         << v.ax << ',' << s * v.ay << ',' << v.lane_id << '\n';
}

struct HmmSpec {
  int num_states = 3;
  std::int64_t length = 1000;
  double self_prob = 0.95;
  std::vector<Eigen::MatrixXd> covariances;  // one per state, D x D
  std::uint64_t seed = 0;

  void validate() const {
    if (num_states < 1) throw InvalidArgument("HmmSpec needs at least one state");
    if (length < 1) throw InvalidArgument("HmmSpec length must be positive");
    if (!(self_prob > 0.0 && self_prob < 1.0)) throw InvalidArgument("self_prob must lie in (0, 1)");
    if (static_cast<int>(covariances.size()) != num_states)
      throw InvalidArgument("HmmSpec needs one covariance per state");
    for (const auto& c : covariances) {
      if (c.rows() != c.cols() || c.rows() != covariances.front().rows())
        throw InvalidArgument("covariances must be square with a common dimension");
      if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw InvalidArgument("covariance not symmetric");
      if (Eigen::LLT<Eigen::MatrixXd>(c).info() != Eigen::Success)
        throw InvalidArgument("covariance not positive definite");
    }
  }

  Eigen::MatrixXd transition_matrix() const {
    Eigen::MatrixXd p(num_states, num_states);
    if (num_states == 1) {
      p(0, 0) = 1.0;
      return p;
    }
    p.setConstant((1.0 - self_prob) / (num_states - 1));
    p.diagonal().setConstant(self_prob);
    return p;
  }
};

struct HmmSample {
  FeatureSequence features;  // T x D
  std::vector<int> labels;   // 0-based state ids
};

inline HmmSample gen_hmm_sequence(const HmmSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto dim = spec.covariances.front().rows();
  std::vector<Eigen::MatrixXd> factors;
  for (const auto& c : spec.covariances) factors.push_back(Eigen::LLT<Eigen::MatrixXd>(c).matrixL());

  HmmSample out;
  out.features.resize(spec.length, dim);
  out.labels.resize(static_cast<std::size_t>(spec.length));
  std::uniform_int_distribution<int> any_state(0, spec.num_states - 1);
  std::uniform_int_distribution<int> other_state(0, std::max(0, spec.num_states - 2));
  int z = any_state(rng);
  Eigen::VectorXd eps(dim);
  for (std::int64_t t = 0; t < spec.length; ++t) {
    if (t > 0 && spec.num_states > 1 && !bernoulli(spec.self_prob, rng)) {
      int j = other_state(rng);
      z = j >= z ? j + 1 : j;
    }
    out.labels[static_cast<std::size_t>(t)] = z;
    for (Eigen::Index d = 0; d < dim; ++d) eps[d] = standard_normal(rng);
    out.features.row(t) = (factors[static_cast<std::size_t>(z)] * eps).transpose();
  }
  return out;
}

// Covariances that differ in scale and orientation: per state a random
// rotation with log-uniform eigenvalues, scaled geometrically across states.
inline std::vector<Eigen::MatrixXd> separated_covariances(int num_states, int dim, std::uint64_t seed,
                                                          double scale_ratio = 3.0) {
  Rng rng(seed);
  std::vector<Eigen::MatrixXd> out;
  for (int k = 0; k < num_states; ++k) {
    Eigen::MatrixXd g(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) g(i, j) = standard_normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::VectorXd eig(dim);
    for (int i = 0; i < dim; ++i) eig[i] = std::exp(uniform(rng, std::log(0.25), std::log(4.0)));
    const double scale = std::pow(scale_ratio, k - 0.5 * (num_states - 1));
    Eigen::MatrixXd c = scale * q * eig.asDiagonal() * q.transpose();
    out.push_back(0.5 * (c + c.transpose()));
  }
  return out;
}

}  // namespace lanescope
