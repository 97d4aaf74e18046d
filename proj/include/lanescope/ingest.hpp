#pragma once

// Trajectory ingestion: highD-style CSV parsing, heading normalisation,
// frame-rate reduction, per-frame scene assembly and lane-change regions.

#include <algorithm>
#include <cctype>
#include <limits>
#include <optional>
#include <cmath>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lanescope/core.hpp"
#include "lanescope/errors.hpp"

namespace lanescope {

struct ColumnMap {
  std::string frame = "frame";
  std::string id = "id";
  std::string x = "x";
  std::string y = "y";
  std::string x_velocity = "xVelocity";
  std::string y_velocity = "yVelocity";
  std::string x_acceleration = "xAcceleration";
  std::string y_acceleration = "yAcceleration";
  std::string lane_id = "laneId";
  int source_rate_hz = 25;
  int target_rate_hz = 5;

  std::vector<std::string> names() const {
    return {frame, id, x, y, x_velocity, y_velocity, x_acceleration, y_acceleration, lane_id};
  }

  void validate() const {
    auto n = names();
    std::set<std::string> unique(n.begin(), n.end());
    if (unique.size() != n.size() || unique.count(""))
      throw InvalidArgument("column names must be distinct and non-empty");
    if (source_rate_hz <= 0 || target_rate_hz <= 0)
      throw RateMismatch("frame rates must be positive");
    if (source_rate_hz % target_rate_hz != 0)
      throw RateMismatch("source rate " + std::to_string(source_rate_hz) +
                         " Hz is not a multiple of target rate " + std::to_string(target_rate_hz) + " Hz");
  }

  int stride() const {
    if (source_rate_hz <= 0 || target_rate_hz <= 0 || source_rate_hz % target_rate_hz != 0)
      throw RateMismatch("source rate " + std::to_string(source_rate_hz) +
                         " Hz is not a multiple of target rate " + std::to_string(target_rate_hz) + " Hz");
    return source_rate_hz / target_rate_hz;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline double parse_double(const std::string& cell, std::size_t row, const std::string& column) {
  std::string t = trim(cell);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size() || !std::isfinite(v))
    throw ParseError("row " + std::to_string(row) + ", column '" + column + "': cannot parse '" + cell + "'");
  return v;
}

inline std::int64_t parse_int(const std::string& cell, std::size_t row, const std::string& column) {
  double v = parse_double(cell, row, column);
  if (v != std::floor(v))
    throw ParseError("row " + std::to_string(row) + ", column '" + column + "': expected an integer, got '" +
                     cell + "'");
  return static_cast<std::int64_t>(v);
}

}  // namespace detail

// One trajectory per vehicle id (ascending id), each sorted by frame.
inline std::vector<Trajectory> parse_tracks(std::istream& in, const ColumnMap& map = {}) {
  map.validate();
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) throw EmptyInput("CSV has no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM

  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw MissingColumn(name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_frame = column_of(map.frame), c_id = column_of(map.id), c_x = column_of(map.x),
                    c_y = column_of(map.y), c_vx = column_of(map.x_velocity), c_vy = column_of(map.y_velocity),
                    c_ax = column_of(map.x_acceleration), c_ay = column_of(map.y_acceleration),
                    c_lane = column_of(map.lane_id);

  std::map<std::int64_t, std::map<std::int64_t, VehicleState>> by_id;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    auto cell = [&](std::size_t c) -> const std::string& {
      if (c >= cells.size())
        throw ParseError("row " + std::to_string(row) + ", column '" + header[c] + "': missing cell");
      return cells[c];
    };
    VehicleState s;
    s.frame = detail::parse_int(cell(c_frame), row, map.frame);
    s.vehicle_id = detail::parse_int(cell(c_id), row, map.id);
    s.x = detail::parse_double(cell(c_x), row, map.x);
    s.y = detail::parse_double(cell(c_y), row, map.y);
    s.vx = detail::parse_double(cell(c_vx), row, map.x_velocity);
    s.vy = detail::parse_double(cell(c_vy), row, map.y_velocity);
    s.ax = detail::parse_double(cell(c_ax), row, map.x_acceleration);
    s.ay = detail::parse_double(cell(c_ay), row, map.y_acceleration);
    s.lane_id = static_cast<int>(detail::parse_int(cell(c_lane), row, map.lane_id));
    if (s.frame < 0) throw ParseError("row " + std::to_string(row) + ", column '" + map.frame + "': negative frame");
    if (s.lane_id < 1) throw ParseError("row " + std::to_string(row) + ", column '" + map.lane_id + "': lane id < 1");
    if (!by_id[s.vehicle_id].emplace(s.frame, s).second)
      throw ParseError("row " + std::to_string(row) + ", column '" + map.frame + "': duplicate (id " +
                       std::to_string(s.vehicle_id) + ", frame " + std::to_string(s.frame) + ")");
  }
  if (by_id.empty()) throw EmptyInput("CSV has no data rows");

  std::vector<Trajectory> out;
  out.reserve(by_id.size());
  for (auto& [id, frames] : by_id) {
    Trajectory t;
    t.reserve(frames.size());
    for (auto& [f, s] : frames) t.push_back(s);
    out.push_back(std::move(t));
  }
  return out;
}

inline double mean_vx(const Trajectory& t) {
  double sum = 0.0;
  for (const auto& s : t) sum += s.vx;
  return t.empty() ? 0.0 : sum / static_cast<double>(t.size());
}

// Flips the lateral axis, then rotates every left-heading trajectory by 180
// degrees about the origin. Afterwards every trajectory heads towards +x.
inline std::vector<Trajectory> normalize(std::vector<Trajectory> trajectories) {
  for (auto& t : trajectories) {
    for (auto& s : t) {
      s.y = -s.y;
      s.vy = -s.vy;
      s.ay = -s.ay;
    }
    double m = mean_vx(t);
    if (m == 0.0 || !std::isfinite(m))
      throw AmbiguousHeading("vehicle " + (t.empty() ? std::string("?") : std::to_string(t.front().vehicle_id)) +
                             " has zero mean longitudinal velocity");
    if (m < 0.0) {
      for (auto& s : t) {
        s.x = -s.x;
        s.y = -s.y;
        s.vx = -s.vx;
        s.vy = -s.vy;
        s.ax = -s.ax;
        s.ay = -s.ay;
      }
    }
  }
  return trajectories;
}

// Keeps frames f with (f - origin) divisible by the stride and renumbers them
// as (f - origin) / stride. With the default origin (the trajectory's first
// frame) this is "every k-th frame from the start"; passing a recording-wide
// origin keeps co-present vehicles aligned.
inline Trajectory downsample(const Trajectory& trajectory, const ColumnMap& map,
                             std::optional<std::int64_t> origin = std::nullopt) {
  const int k = map.stride();
  if (trajectory.empty()) return {};
  const std::int64_t o = origin.value_or(trajectory.front().frame);
  Trajectory out;
  for (const auto& s : trajectory) {
    std::int64_t rel = s.frame - o;
    if (rel < 0 || rel % k != 0) continue;
    VehicleState d = s;
    d.frame = rel / k;
    out.push_back(d);
  }
  return out;
}

// Downsamples a whole recording against its earliest frame.
inline std::vector<Trajectory> downsample_all(const std::vector<Trajectory>& trajectories, const ColumnMap& map) {
  std::int64_t origin = std::numeric_limits<std::int64_t>::max();
  for (const auto& t : trajectories)
    if (!t.empty()) origin = std::min(origin, t.front().frame);
  std::vector<Trajectory> out;
  out.reserve(trajectories.size());
  for (const auto& t : trajectories) out.push_back(downsample(t, map, origin));
  return out;
}

// Frame-indexed view over a recording.
class FrameIndex {
 public:
  explicit FrameIndex(const std::vector<Trajectory>& trajectories) {
    for (const auto& t : trajectories)
      for (const auto& s : t) by_frame_[s.frame].push_back(&s);
  }

  const std::vector<const VehicleState*>& at(std::int64_t frame) const {
    static const std::vector<const VehicleState*> empty;
    auto it = by_frame_.find(frame);
    return it == by_frame_.end() ? empty : it->second;
  }

 private:
  std::unordered_map<std::int64_t, std::vector<const VehicleState*>> by_frame_;
};

inline std::vector<Scene> extract_scenes(const Trajectory& ego, const FrameIndex& index, const RoiConfig& roi) {
  std::vector<Scene> scenes;
  scenes.reserve(ego.size());
  for (const auto& e : ego) {
    std::vector<VehicleState> neighbors;
    for (const VehicleState* other : index.at(e.frame)) {
      if (other->vehicle_id == e.vehicle_id) continue;
      auto rel = relative_state(e, *other);
      if (in_roi(rel.dx, rel.dy, roi)) neighbors.push_back(*other);
    }
    std::sort(neighbors.begin(), neighbors.end(),
              [](const VehicleState& a, const VehicleState& b) { return a.vehicle_id < b.vehicle_id; });
    scenes.emplace_back(e, std::move(neighbors), roi);
  }
  return scenes;
}

inline std::vector<Scene> extract_scenes(const Trajectory& ego, const std::vector<Trajectory>& all,
                                         const RoiConfig& roi) {
  return extract_scenes(ego, FrameIndex(all), roi);
}

enum class Region { Pre, LaneChange, Post };

inline const char* to_string(Region r) {
  switch (r) {
    case Region::Pre: return "PRE";
    case Region::LaneChange: return "LANE_CHANGE";
    case Region::Post: return "POST";
  }
  return "?";
}

inline Region region_from_string(const std::string& s) {
  if (s == "PRE") return Region::Pre;
  if (s == "LANE_CHANGE") return Region::LaneChange;
  if (s == "POST") return Region::Post;
  throw InvalidArgument("unknown region '" + s + "'");
}

struct RegionLabels {
  std::vector<Region> tags;  // one per ego state
  std::int64_t crossing_frame = 0;
};

inline std::size_t count_lane_changes(const Trajectory& ego) {
  std::size_t changes = 0;
  for (std::size_t i = 1; i < ego.size(); ++i)
    if (ego[i].lane_id != ego[i - 1].lane_id) ++changes;
  return changes;
}

// Lane-change region = frames within +-buffer_s of the first frame carrying
// the new lane id, clipped to the trajectory.
inline RegionLabels delineate_regions(const Trajectory& ego, double buffer_s = 2.0, int rate_hz = 5) {
  if (!(buffer_s > 0.0)) throw InvalidArgument("buffer_s must be positive");
  if (rate_hz <= 0) throw InvalidArgument("rate_hz must be positive");
  std::size_t changes = count_lane_changes(ego);
  if (changes == 0) throw NoLaneChange("ego lane id never changes");
  if (changes > 1)
    throw MultipleLaneChanges("ego lane id changes " + std::to_string(changes) + " times; split the trajectory first");

  std::size_t cross = 1;
  while (ego[cross].lane_id == ego[cross - 1].lane_id) ++cross;
  RegionLabels out;
  out.crossing_frame = ego[cross].frame;
  const auto half = static_cast<std::int64_t>(std::llround(buffer_s * rate_hz));
  out.tags.reserve(ego.size());
  for (const auto& s : ego) {
    if (s.frame < out.crossing_frame - half)
      out.tags.push_back(Region::Pre);
    else if (s.frame > out.crossing_frame + half)
      out.tags.push_back(Region::Post);
    else
      out.tags.push_back(Region::LaneChange);
  }
  return out;
}

}  // namespace lanescope
