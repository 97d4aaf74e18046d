#pragma once

// Segment stage: joint standardization of raw feature sequences followed by a
// sticky HDP-HMM fit under shared parameters.

#include <cstdint>
#include <vector>

#include "lanescope/bnp.hpp"
#include "lanescope/codec/features.hpp"

namespace lanescope {

struct SegmentConfig {
  HdpHmmHyper hyper;
  int iterations = 500;
  bool standardize = true;

  void validate() const {
    hyper.validate();
    if (iterations < 1) throw ConfigError("bnp.iterations must be positive");
  }
};

struct SegmentResult {
  FitResult fit;
  codec::Standardization transform;
};

// One standardization over the concatenation of all sequences.
inline codec::Standardization fit_joint_standardization(const std::vector<FeatureSequence>& raw) {
  if (raw.empty()) throw EmptyDataset("no feature sequences");
  Eigen::Index rows = 0;
  for (const auto& s : raw) {
    if (s.cols() != raw.front().cols()) throw ShapeError("feature sequences differ in width");
    rows += s.rows();
  }
  FeatureSequence all(rows, raw.front().cols());
  Eigen::Index at = 0;
  for (const auto& s : raw) {
    all.middleRows(at, s.rows()) = s;
    at += s.rows();
  }
  return codec::fit_standardization(all);
}

inline SegmentResult segment(const std::vector<FeatureSequence>& raw, const SegmentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SegmentResult out;
  std::vector<FeatureSequence> data;
  if (cfg.standardize) {
    out.transform = fit_joint_standardization(raw);
    data.reserve(raw.size());
    for (const auto& s : raw) data.push_back(out.transform.apply(s));
  } else {
    if (raw.empty()) throw EmptyDataset("no feature sequences");
    const auto d = raw.front().cols();
    out.transform.mean = Eigen::RowVectorXd::Zero(d);
    out.transform.scale = Eigen::RowVectorXd::Ones(d);
    data = raw;
  }
  out.fit = fit(data, cfg.hyper, cfg.iterations, seed);
  return out;
}

}  // namespace lanescope
