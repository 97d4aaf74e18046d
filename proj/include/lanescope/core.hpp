#pragma once

// Domain records shared by every stage: vehicle kinematics, per-frame scenes,
// the ego-centred region of interest and the velocity-field tensor.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lanescope/errors.hpp"

namespace lanescope {

struct VehicleState {
  std::int64_t vehicle_id = 0;
  std::int64_t frame = 0;
  double x = 0.0, y = 0.0;    // m
  double vx = 0.0, vy = 0.0;  // m/s
  double ax = 0.0, ay = 0.0;  // m/s^2
  int lane_id = 1;

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(vx) &&
           std::isfinite(vy) && std::isfinite(ax) && std::isfinite(ay);
  }

  bool valid() const { return finite() && frame >= 0 && lane_id >= 1; }

  bool operator==(const VehicleState&) const = default;
};

using Trajectory = std::vector<VehicleState>;

struct Point2 {
  double x = 0.0, y = 0.0;
  bool operator==(const Point2&) const = default;
};

struct RelativeState {
  double dx = 0.0, dy = 0.0, dvx = 0.0, dvy = 0.0;
  bool operator==(const RelativeState&) const = default;
};

// Other minus ego, per component.
inline RelativeState relative_state(const VehicleState& ego, const VehicleState& other) {
  return {other.x - ego.x, other.y - ego.y, other.vx - ego.vx, other.vy - ego.vy};
}

struct RoiConfig {
  double d_front = 40.0;
  double d_behind = 40.0;
  double d_side = 6.0;
  double dx = 5.0;  // longitudinal grid step
  double dy = 1.0;  // lateral grid step

  // Number of longitudinal grid points (columns).
  std::size_t nx() const { return static_cast<std::size_t>(std::llround((d_front + d_behind) / dx)) + 1; }
  // Number of lateral grid points (rows).
  std::size_t ny() const { return static_cast<std::size_t>(std::llround(2.0 * d_side / dy)) + 1; }

  double grid_x(std::size_t col) const { return -d_behind + static_cast<double>(col) * dx; }
  double grid_y(std::size_t row) const { return -d_side + static_cast<double>(row) * dy; }

  std::size_t ego_col() const { return static_cast<std::size_t>(std::llround(d_behind / dx)); }
  std::size_t ego_row() const { return static_cast<std::size_t>(std::llround(d_side / dy)); }

  void validate() const {
    if (!(d_front > 0 && d_behind > 0 && d_side > 0 && dx > 0 && dy > 0))
      throw InvalidArgument("RoiConfig distances and steps must be positive");
    auto divisible = [](double span, double step) {
      double q = span / step;
      return std::abs(q - std::round(q)) < 1e-9;
    };
    if (!divisible(d_front + d_behind, dx) || !divisible(d_behind, dx))
      throw InvalidArgument("RoiConfig longitudinal extent must be a multiple of dx");
    if (!divisible(2.0 * d_side, dy) || !divisible(d_side, dy))
      throw InvalidArgument("RoiConfig lateral extent must be a multiple of dy");
  }
};

// Rectangle membership, boundary inclusive.
inline bool in_roi(double dx, double dy, const RoiConfig& roi) {
  return dx >= -roi.d_behind && dx <= roi.d_front && std::abs(dy) <= roi.d_side;
}

struct Scene {
  VehicleState ego;
  std::vector<VehicleState> neighbors;
  std::int64_t frame = 0;

  Scene() = default;

  // Checks the ROI, distinct-id and ego-exclusion invariants.
  Scene(VehicleState ego_state, std::vector<VehicleState> neighbor_states, const RoiConfig& roi)
      : ego(ego_state), neighbors(std::move(neighbor_states)), frame(ego_state.frame) {
    if (!ego.valid()) throw InvalidArgument("scene ego state is not valid");
    std::set<std::int64_t> ids;
    for (const auto& n : neighbors) {
      if (!n.valid()) throw InvalidArgument("scene neighbor state is not valid");
      if (n.vehicle_id == ego.vehicle_id)
        throw InvalidArgument("ego appears in its own neighbor list");
      if (!ids.insert(n.vehicle_id).second)
        throw InvalidArgument("duplicate neighbor id " + std::to_string(n.vehicle_id));
      auto rel = relative_state(ego, n);
      if (!in_roi(rel.dx, rel.dy, roi))
        throw InvalidArgument("neighbor " + std::to_string(n.vehicle_id) + " lies outside the ROI");
    }
  }
};

// Grid of estimated relative velocities. Storage is channel-major planes of
// row-major (lateral row, longitudinal column) values.
class FieldTensor {
 public:
  static constexpr std::size_t kChannels = 2;
  static constexpr std::size_t kDefaultRows = 13;
  static constexpr std::size_t kDefaultCols = 17;
  static constexpr std::size_t kDefaultSize = kDefaultRows * kDefaultCols * kChannels;

  FieldTensor() : FieldTensor(kDefaultRows, kDefaultCols) {}
  FieldTensor(std::size_t rows, std::size_t cols, std::int64_t frame = 0)
      : rows_(rows), cols_(cols), frame_(frame), values_(rows * cols * kChannels, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  std::int64_t frame() const { return frame_; }
  void set_frame(std::int64_t f) { frame_ = f; }

  double& at(std::size_t row, std::size_t col, std::size_t channel) {
    return values_[index(row, col, channel)];
  }
  double at(std::size_t row, std::size_t col, std::size_t channel) const {
    return values_[index(row, col, channel)];
  }

  std::size_t index(std::size_t row, std::size_t col, std::size_t channel) const {
    return (channel * rows_ + row) * cols_ + col;
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool has_default_shape() const { return rows_ == kDefaultRows && cols_ == kDefaultCols; }

  bool operator==(const FieldTensor&) const = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::int64_t frame_;
  std::vector<double> values_;
};

inline constexpr std::size_t kEgoFeatureDim = 4;
inline constexpr std::size_t kLatentDim = 8;
inline constexpr std::size_t kFeatureDim = kEgoFeatureDim + kLatentDim;

// [vx, vy, ax, ay, h_1 .. h_8]
using FeatureVector = Eigen::Matrix<double, kFeatureDim, 1>;

// One feature vector per row (T x D).
using FeatureSequence = Eigen::MatrixXd;

struct FieldParams {
  double amplitude = 1.0;
  double sigma_x = 15.0;  // m
  double sigma_y = 1.5;   // m
  double lambda_x = 0.6;
  double lambda_y = 0.9;
  double xi_x = 2.0;
  double xi_y = 2.0;
  double jitter = 1e-8;
  bool include_ego_anchor = true;

  void validate() const {
    if (!(amplitude > 0 && sigma_x > 0 && sigma_y > 0 && xi_x > 0 && xi_y > 0 && jitter >= 0))
      throw InvalidArgument("FieldParams require A, sigma, xi > 0 and jitter >= 0");
  }
};

}  // namespace lanescope
