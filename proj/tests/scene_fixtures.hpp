#pragma once

#include <random>
#include <vector>

#include "lanescope/core.hpp"

namespace lanescope::testing {

// Random highway scene: neighbours on three lanes around the ego, at least
// `min_gap` metres apart longitudinally within a lane.
inline Scene random_scene(std::mt19937_64& rng, int num_neighbors, double min_gap = 6.0) {
  std::uniform_real_distribution<double> ux(-40.0, 40.0), jitter(-0.5, 0.5), dv(-6.0, 6.0), acc(-2.5, 2.5);
  std::uniform_int_distribution<int> lane(-1, 1);
  VehicleState ego;
  ego.vehicle_id = 0;
  ego.vx = 30.0;
  ego.lane_id = 2;
  std::vector<VehicleState> neighbors;
  int id = 1;
  while (static_cast<int>(neighbors.size()) < num_neighbors) {
    VehicleState n;
    n.vehicle_id = id++;
    int l = lane(rng);
    n.lane_id = 2 + l;
    n.x = ux(rng);
    n.y = std::clamp(4.0 * l + jitter(rng), -6.0, 6.0);
    bool clash = l == 0 && std::abs(n.x) < min_gap;
    for (const auto& m : neighbors)
      if (m.lane_id == n.lane_id && std::abs(m.x - n.x) < min_gap) clash = true;
    if (clash) continue;
    n.vx = ego.vx + dv(rng);
    n.vy = 0.3 * dv(rng) / 6.0;
    n.ax = acc(rng);
    n.ay = 0.3 * acc(rng);
    neighbors.push_back(n);
  }
  return Scene(ego, neighbors, RoiConfig{});
}

}  // namespace lanescope::testing
