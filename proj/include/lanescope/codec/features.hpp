#pragma once

// Per-frame 12-d features: ego [vx, vy, ax, ay] followed by the latent code.

#include <span>
#include <string>

#include <Eigen/Dense>

#include "lanescope/core.hpp"
#include "lanescope/errors.hpp"

namespace lanescope::codec {

inline FeatureSequence build_features(std::span<const VehicleState> ego_states, const Eigen::MatrixXd& latents) {
  const auto t = static_cast<Eigen::Index>(ego_states.size());
  if (latents.rows() != t)
    throw LengthMismatch(std::to_string(ego_states.size()) + " ego states but " + std::to_string(latents.rows()) +
                         " latent codes");
  if (latents.cols() != static_cast<Eigen::Index>(kLatentDim))
    throw ShapeError("latent codes must have " + std::to_string(kLatentDim) + " columns");
  FeatureSequence out(t, static_cast<Eigen::Index>(kFeatureDim));
  for (Eigen::Index i = 0; i < t; ++i) {
    const auto& e = ego_states[static_cast<std::size_t>(i)];
    out.row(i).head<kEgoFeatureDim>() << e.vx, e.vy, e.ax, e.ay;
    out.row(i).tail<kLatentDim>() = latents.row(i);
  }
  return out;
}

struct Standardization {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;  // population standard deviation; 1 for constant dimensions

  FeatureSequence apply(const FeatureSequence& raw) const {
    if (raw.cols() != mean.size()) throw ShapeError("feature width differs from the standardization");
    return (raw.rowwise() - mean).array().rowwise() / scale.array();
  }

  FeatureSequence invert(const FeatureSequence& z) const {
    if (z.cols() != mean.size()) throw ShapeError("feature width differs from the standardization");
    return (z.array().rowwise() * scale.array()).rowwise() + mean.array();
  }
};

inline Standardization fit_standardization(const FeatureSequence& features) {
  if (features.rows() == 0) throw EmptyDataset("no feature rows to standardize");
  Standardization s;
  s.mean = features.colwise().mean();
  s.scale = ((features.rowwise() - s.mean).array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j)
    if (!(s.scale[j] > 0.0)) s.scale[j] = 1.0;
  return s;
}

struct StandardizedFeatures {
  FeatureSequence features;
  Standardization transform;
};

inline StandardizedFeatures standardize(const FeatureSequence& features) {
  auto t = fit_standardization(features);
  return {t.apply(features), t};
}

}  // namespace lanescope::codec
