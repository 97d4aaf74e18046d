#pragma once

// Lane-change sequences: synthetic recordings, ego selection and per-frame
// field computation shared by the CLI stages and the tests.

#include <cstdint>
#include <vector>

#include "lanescope/core.hpp"
#include "lanescope/field.hpp"
#include "lanescope/ingest.hpp"
#include "lanescope/parallel.hpp"
#include "lanescope/synth.hpp"

namespace lanescope {

struct SynthConfig {
  int scenarios = 40;
  std::uint64_t seed = 0;
  std::int64_t gap_frames = 50;  // idle source frames between scenarios
  RandomScenarioOptions options;

  void validate() const {
    if (scenarios < 1) throw ConfigError("synth.scenarios must be positive");
    if (gap_frames < 0) throw ConfigError("synth.gap_frames must be nonnegative");
    if (options.lane_count < 2 || options.lane_count > 3) throw ConfigError("synth.lane_count must be 2 or 3");
    if (!(options.rate_hz > 0) || options.duration_frames < 1) throw ConfigError("synth rate and duration must be positive");
    if (options.min_neighbors < 0 || options.max_neighbors < options.min_neighbors)
      throw ConfigError("synth neighbour range is empty");
    if (!(options.lane_change_seconds > 0)) throw ConfigError("synth.lane_change_seconds must be positive");
  }
};

// Back-to-back random lane-change scenarios in one recording. Scenario i uses
// vehicle ids from 1000 * (i + 1) and its own frame window, so scenarios never
// share a frame.
inline std::vector<Trajectory> synth_recording(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<Trajectory> out;
  const std::int64_t stride = cfg.options.duration_frames + cfg.gap_frames;
  for (int i = 0; i < cfg.scenarios; ++i) {
    const std::uint64_t seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    auto spec = random_lane_change_spec(seed, 1000LL * (i + 1), i * stride, cfg.options);
    for (auto& t : gen_scenario(spec, seed)) out.push_back(std::move(t));
  }
  return out;
}

struct LaneChangeSequence {
  std::int64_t ego_id = 0;
  std::vector<Scene> scenes;  // one per ego frame
  RegionLabels regions;
};

// Every trajectory with exactly one lane change becomes an ego sequence.
// Input trajectories must already be normalised and at the working rate.
inline std::vector<LaneChangeSequence> lane_change_sequences(const std::vector<Trajectory>& trajectories,
                                                             const RoiConfig& roi, int rate_hz = 5,
                                                             double buffer_s = 2.0) {
  roi.validate();
  FrameIndex index(trajectories);
  std::vector<LaneChangeSequence> out;
  for (const auto& t : trajectories) {
    if (t.size() < 2 || count_lane_changes(t) != 1) continue;
    LaneChangeSequence seq;
    seq.ego_id = t.front().vehicle_id;
    seq.scenes = extract_scenes(t, index, roi);
    seq.regions = delineate_regions(t, buffer_s, rate_hz);
    out.push_back(std::move(seq));
  }
  return out;
}

// AS-GVF of every scene, computed in parallel; order follows the input.
inline std::vector<FieldTensor> compute_fields(const std::vector<Scene>& scenes, const RoiConfig& roi,
                                               const FieldParams& params, std::size_t workers = worker_count()) {
  std::vector<FieldTensor> out(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) { out[i] = as_gvf(scenes[i], roi, params); }, workers);
  return out;
}

}  // namespace lanescope
