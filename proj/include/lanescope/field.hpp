#pragma once

// Gaussian-process velocity fields. Each velocity channel is an independent
// noise-free GP regression over neighbour positions relative to the ego; the
// acceleration-sensitive variant skews the test/train cross-covariance by a
// product of logistic factors of each neighbour's acceleration.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lanescope/core.hpp"
#include "lanescope/errors.hpp"

namespace lanescope {

inline double se_kernel(const Point2& a, const Point2& b, const FieldParams& params) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return params.amplitude *
         std::exp(-dx * dx / (2.0 * params.sigma_x * params.sigma_x) - dy * dy / (2.0 * params.sigma_y * params.sigma_y));
}

// Logistic skew of training vehicle j's influence at test point i. Equals
// (xi_x / 2) * (xi_y / 2) when the acceleration is zero.
inline double skew_factor(const Point2& test, const Point2& train, const Point2& accel, const FieldParams& params) {
  const double ux = params.lambda_x * accel.x * (test.x - train.x);
  const double uy = params.lambda_y * accel.y * (test.y - train.y);
  return params.xi_x / (1.0 + std::exp(-ux)) * (params.xi_y / (1.0 + std::exp(-uy)));
}

enum class Channel { X = 0, Y = 1 };

struct GramSystem {
  std::vector<Point2> points;         // relative to the ego
  std::vector<Point2> accelerations;  // per training point; zero for the ego anchor
  Eigen::MatrixXd gram;
  Eigen::LLT<Eigen::MatrixXd> factor;
  Eigen::VectorXd targets_x;
  Eigen::VectorXd targets_y;
  Eigen::VectorXd weights_x;  // K^{-1} targets_x
  Eigen::VectorXd weights_y;

  std::size_t size() const { return points.size(); }

  const Eigen::VectorXd& targets(Channel c) const { return c == Channel::X ? targets_x : targets_y; }
  const Eigen::VectorXd& weights(Channel c) const { return c == Channel::X ? weights_x : weights_y; }
};

inline Eigen::MatrixXd kernel_matrix(std::span<const Point2> rows, std::span<const Point2> cols,
                                     const FieldParams& params) {
  Eigen::MatrixXd k(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = se_kernel(rows[i], cols[j], params);
  return k;
}

// Factorises a training set given explicitly.
inline GramSystem build_gram(std::vector<Point2> points, std::vector<Point2> accelerations,
                             Eigen::VectorXd targets_x, Eigen::VectorXd targets_y, const FieldParams& params) {
  params.validate();
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n == 0) throw SingularGram("empty training set: no neighbours and no ego anchor");
  if (accelerations.size() != points.size() || targets_x.size() != n || targets_y.size() != n)
    throw InvalidArgument("training points, accelerations and targets differ in length");
  if (!targets_x.allFinite() || !targets_y.allFinite()) throw InvalidArgument("non-finite training targets");

  GramSystem sys;
  sys.points = std::move(points);
  sys.accelerations = std::move(accelerations);
  sys.targets_x = std::move(targets_x);
  sys.targets_y = std::move(targets_y);
  sys.gram = kernel_matrix(sys.points, sys.points, params);
  sys.gram.diagonal().array() += params.jitter * params.amplitude;
  sys.factor.compute(sys.gram);
  if (sys.factor.info() != Eigen::Success)
    throw SingularGram("Gram matrix is not positive definite (coincident training points?)");

  // Coincident points are only consistent if they carry identical targets.
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto& a = sys.points[static_cast<std::size_t>(i)];
      const auto& b = sys.points[static_cast<std::size_t>(j)];
      if (std::abs(a.x - b.x) < 1e-9 && std::abs(a.y - b.y) < 1e-9 &&
          (sys.targets_x[i] != sys.targets_x[j] || sys.targets_y[i] != sys.targets_y[j]))
        throw SingularGram("coincident training points carry conflicting targets");
    }

  sys.weights_x = sys.factor.solve(sys.targets_x);
  sys.weights_y = sys.factor.solve(sys.targets_y);
  return sys;
}

// Training set from a scene: neighbour positions and relative velocities,
// plus the ego anchor (0, 0) -> (0, 0) when enabled.
inline GramSystem build_gram(const Scene& scene, const FieldParams& params) {
  const std::size_t n = scene.neighbors.size() + (params.include_ego_anchor ? 1 : 0);
  std::vector<Point2> points, accel;
  points.reserve(n);
  accel.reserve(n);
  Eigen::VectorXd tx(static_cast<Eigen::Index>(n)), ty(static_cast<Eigen::Index>(n));
  Eigen::Index i = 0;
  for (const auto& other : scene.neighbors) {
    auto rel = relative_state(scene.ego, other);
    points.push_back({rel.dx, rel.dy});
    accel.push_back({other.ax, other.ay});
    tx[i] = rel.dvx;
    ty[i] = rel.dvy;
    ++i;
  }
  if (params.include_ego_anchor) {
    points.push_back({0.0, 0.0});
    accel.push_back({0.0, 0.0});
    tx[i] = 0.0;
    ty[i] = 0.0;
  }
  return build_gram(std::move(points), std::move(accel), std::move(tx), std::move(ty), params);
}

inline Eigen::VectorXd gp_posterior_mean(const GramSystem& sys, std::span<const Point2> test_points, Channel channel,
                                         const FieldParams& params) {
  Eigen::MatrixXd cross = kernel_matrix(test_points, sys.points, params);
  return cross * sys.weights(channel);
}

// K(p*, p*) - K(p*, p) K(p, p)^{-1} K(p, p*)
inline Eigen::MatrixXd gp_posterior_cov(const GramSystem& sys, std::span<const Point2> test_points,
                                        const FieldParams& params) {
  Eigen::MatrixXd prior = kernel_matrix(test_points, test_points, params);
  Eigen::MatrixXd cross_t = kernel_matrix(sys.points, test_points, params);  // N x M
  Eigen::MatrixXd v = sys.factor.matrixL().solve(cross_t);
  Eigen::MatrixXd cov = prior - v.transpose() * v;
  return 0.5 * (cov + cov.transpose());
}

// Test locations in row-major (lateral row, longitudinal column) order.
inline std::vector<Point2> grid_points(const RoiConfig& roi) {
  std::vector<Point2> pts;
  pts.reserve(roi.nx() * roi.ny());
  for (std::size_t r = 0; r < roi.ny(); ++r)
    for (std::size_t c = 0; c < roi.nx(); ++c) pts.push_back({roi.grid_x(c), roi.grid_y(r)});
  return pts;
}

// Cross-covariance K(p*, p), optionally skewed elementwise by K'.
inline Eigen::MatrixXd field_cross_covariance(const GramSystem& sys, std::span<const Point2> test_points,
                                              const FieldParams& params, bool skewed) {
  Eigen::MatrixXd cross = kernel_matrix(test_points, sys.points, params);
  if (skewed)
    for (std::size_t i = 0; i < test_points.size(); ++i)
      for (std::size_t j = 0; j < sys.points.size(); ++j)
        cross(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *=
            skew_factor(test_points[i], sys.points[j], sys.accelerations[j], params);
  return cross;
}

namespace detail {

inline FieldTensor velocity_field(const Scene& scene, const RoiConfig& roi, const FieldParams& params, bool skewed) {
  roi.validate();
  GramSystem sys = build_gram(scene, params);
  auto pts = grid_points(roi);
  Eigen::MatrixXd cross = field_cross_covariance(sys, pts, params, skewed);
  Eigen::VectorXd mx = cross * sys.weights_x;
  Eigen::VectorXd my = cross * sys.weights_y;
  FieldTensor out(roi.ny(), roi.nx(), scene.frame);
  for (std::size_t r = 0; r < roi.ny(); ++r)
    for (std::size_t c = 0; c < roi.nx(); ++c) {
      const auto k = static_cast<Eigen::Index>(r * roi.nx() + c);
      out.at(r, c, 0) = mx[k];
      out.at(r, c, 1) = my[k];
    }
  return out;
}

}  // namespace detail

// Acceleration-sensitive Gaussian velocity field of one frame.
inline FieldTensor as_gvf(const Scene& scene, const RoiConfig& roi = {}, const FieldParams& params = {}) {
  return detail::velocity_field(scene, roi, params, true);
}

// Plain Gaussian velocity field (no acceleration skew).
inline FieldTensor gvf(const Scene& scene, const RoiConfig& roi = {}, const FieldParams& params = {}) {
  return detail::velocity_field(scene, roi, params, false);
}

}  // namespace lanescope
