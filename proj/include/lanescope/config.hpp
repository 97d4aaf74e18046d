#pragma once

// Pipeline configuration: one JSON document with sections io, synth, ingest,
// roi, field, codec, bnp and analysis plus a top-level seed. Every key must
// exist in the defaults; `a.b=v` overrides use the same paths.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanescope/bnp.hpp"
#include "lanescope/codec/train.hpp"
#include "lanescope/core.hpp"
#include "lanescope/dataset.hpp"
#include "lanescope/errors.hpp"
#include "lanescope/ingest.hpp"
#include "lanescope/segment.hpp"

namespace lanescope {

struct IoConfig {
  std::string dir = ".";  // relative paths below resolve against this
  std::string tracks = "tracks.csv";
  std::string scenes = "scenes.jsonl";
  std::string fields = "fields.jsonl";
  std::string fields_csv;  // empty = no CSV export
  std::string codec_model = "codec.json";
  std::string features = "features.csv";
  std::string labels = "labels.csv";
  std::string chain = "chain.json";
  std::string analysis = "analysis";  // directory

  std::string resolve(const std::string& p) const {
    if (p.empty()) return p;
    std::filesystem::path path(p);
    return path.is_absolute() ? path.string() : (std::filesystem::path(dir) / path).lexically_normal().string();
  }
};

struct IngestConfig {
  ColumnMap columns;
  double buffer_s = 2.0;
};

struct CodecConfig {
  std::string encoder = "linear";  // cae | linear
  codec::TrainConfig train = desk_training();

  // 2000 fields, batch 128: monotone 100-iteration windows at this budget.
  static codec::TrainConfig desk_training() {
    codec::TrainConfig t;
    t.max_iterations = 2000;
    t.nadam.learning_rate = 0.005;
    return t;
  }
};

struct AnalysisConfig {
  std::vector<std::string> regions{"ALL", "PRE", "LANE_CHANGE", "POST"};
  double effective_threshold = 0.01;
  std::vector<double> fractions;  // empty = no pattern-count curve
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  IoConfig io;
  bool synth_enabled = true;
  SynthConfig synth;
  IngestConfig ingest;
  RoiConfig roi;
  FieldParams field;
  CodecConfig codec;
  SegmentConfig bnp;
  double s0_scale = 1.0;
  AnalysisConfig analysis;

  void validate() const;
};

namespace config_detail {

using nlohmann::json;

inline json to_json(const PipelineConfig& c) {
  const auto& cm = c.ingest.columns;
  const auto& t = c.codec.train;
  const auto& h = c.bnp.hyper;
  return {
      {"seed", c.seed},
      {"io",
       {{"dir", c.io.dir},
        {"tracks", c.io.tracks},
        {"scenes", c.io.scenes},
        {"fields", c.io.fields},
        {"fields_csv", c.io.fields_csv},
        {"codec_model", c.io.codec_model},
        {"features", c.io.features},
        {"labels", c.io.labels},
        {"chain", c.io.chain},
        {"analysis", c.io.analysis}}},
      {"synth",
       {{"enabled", c.synth_enabled},
        {"scenarios", c.synth.scenarios},
        {"gap_frames", c.synth.gap_frames},
        {"lane_count", c.synth.options.lane_count},
        {"rate_hz", c.synth.options.rate_hz},
        {"duration_frames", c.synth.options.duration_frames},
        {"min_neighbors", c.synth.options.min_neighbors},
        {"max_neighbors", c.synth.options.max_neighbors},
        {"lane_change_seconds", c.synth.options.lane_change_seconds}}},
      {"ingest",
       {{"columns",
         {{"frame", cm.frame},
          {"id", cm.id},
          {"x", cm.x},
          {"y", cm.y},
          {"x_velocity", cm.x_velocity},
          {"y_velocity", cm.y_velocity},
          {"x_acceleration", cm.x_acceleration},
          {"y_acceleration", cm.y_acceleration},
          {"lane_id", cm.lane_id}}},
        {"source_rate_hz", cm.source_rate_hz},
        {"target_rate_hz", cm.target_rate_hz},
        {"buffer_s", c.ingest.buffer_s}}},
      {"roi", {{"d_front", c.roi.d_front}, {"d_behind", c.roi.d_behind}, {"d_side", c.roi.d_side}, {"dx", c.roi.dx}, {"dy", c.roi.dy}}},
      {"field",
       {{"amplitude", c.field.amplitude},
        {"sigma_x", c.field.sigma_x},
        {"sigma_y", c.field.sigma_y},
        {"lambda_x", c.field.lambda_x},
        {"lambda_y", c.field.lambda_y},
        {"xi_x", c.field.xi_x},
        {"xi_y", c.field.xi_y},
        {"jitter", c.field.jitter},
        {"ego_anchor", c.field.include_ego_anchor}}},
      {"codec",
       {{"encoder", c.codec.encoder},
        {"batch_size", t.batch_size},
        {"iterations", t.max_iterations},
        {"learning_rate", t.nadam.learning_rate},
        {"beta1", t.nadam.beta1},
        {"beta2", t.nadam.beta2},
        {"epsilon", t.nadam.epsilon},
        {"lr_half_life", t.lr_half_life},
        {"input_scale", t.input_scale}}},
      {"bnp",
       {{"gamma", h.gamma},
        {"alpha_plus_kappa", h.alpha_plus_kappa},
        {"rho", h.rho},
        {"L", h.L},
        {"nu0", h.nu0},
        {"s0_scale", c.s0_scale},
        {"hyper_resampling", h.hyper_resampling},
        {"gamma_shape", h.gamma_shape},
        {"gamma_rate", h.gamma_rate},
        {"apk_shape", h.apk_shape},
        {"apk_rate", h.apk_rate},
        {"rho_a", h.rho_a},
        {"rho_b", h.rho_b},
        {"hyper_inner_iterations", h.hyper_inner_iterations},
        {"iterations", c.bnp.iterations},
        {"standardize", c.bnp.standardize}}},
      {"analysis",
       {{"regions", c.analysis.regions},
        {"effective_threshold", c.analysis.effective_threshold},
        {"fractions", c.analysis.fractions},
        {"seeds", c.analysis.seeds}}}};
}

template <typename T>
void get(const json& j, const char* key, T& out, const std::string& path) {
  try {
    j.at(key).get_to(out);
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key + " has the wrong type");
  }
}

inline PipelineConfig from_json(const json& j) {
  PipelineConfig c;
  get(j, "seed", c.seed, "");
  const auto& io = j.at("io");
  for (auto [key, field] : {std::pair{"dir", &c.io.dir}, {"tracks", &c.io.tracks}, {"scenes", &c.io.scenes},
                            {"fields", &c.io.fields}, {"fields_csv", &c.io.fields_csv},
                            {"codec_model", &c.io.codec_model}, {"features", &c.io.features},
                            {"labels", &c.io.labels}, {"chain", &c.io.chain}, {"analysis", &c.io.analysis}})
    get(io, key, *field, "io");
  const auto& s = j.at("synth");
  get(s, "enabled", c.synth_enabled, "synth");
  get(s, "scenarios", c.synth.scenarios, "synth");
  get(s, "gap_frames", c.synth.gap_frames, "synth");
  get(s, "lane_count", c.synth.options.lane_count, "synth");
  get(s, "rate_hz", c.synth.options.rate_hz, "synth");
  get(s, "duration_frames", c.synth.options.duration_frames, "synth");
  get(s, "min_neighbors", c.synth.options.min_neighbors, "synth");
  get(s, "max_neighbors", c.synth.options.max_neighbors, "synth");
  get(s, "lane_change_seconds", c.synth.options.lane_change_seconds, "synth");
  const auto& in = j.at("ingest");
  auto& cm = c.ingest.columns;
  const auto& cols = in.at("columns");
  for (auto [key, field] : {std::pair{"frame", &cm.frame}, {"id", &cm.id}, {"x", &cm.x}, {"y", &cm.y},
                            {"x_velocity", &cm.x_velocity}, {"y_velocity", &cm.y_velocity},
                            {"x_acceleration", &cm.x_acceleration}, {"y_acceleration", &cm.y_acceleration},
                            {"lane_id", &cm.lane_id}})
    get(cols, key, *field, "ingest.columns");
  get(in, "source_rate_hz", cm.source_rate_hz, "ingest");
  get(in, "target_rate_hz", cm.target_rate_hz, "ingest");
  get(in, "buffer_s", c.ingest.buffer_s, "ingest");
  const auto& r = j.at("roi");
  for (auto [key, field] : {std::pair{"d_front", &c.roi.d_front}, {"d_behind", &c.roi.d_behind},
                            {"d_side", &c.roi.d_side}, {"dx", &c.roi.dx}, {"dy", &c.roi.dy}})
    get(r, key, *field, "roi");
  const auto& f = j.at("field");
  for (auto [key, field] : {std::pair{"amplitude", &c.field.amplitude}, {"sigma_x", &c.field.sigma_x},
                            {"sigma_y", &c.field.sigma_y}, {"lambda_x", &c.field.lambda_x},
                            {"lambda_y", &c.field.lambda_y}, {"xi_x", &c.field.xi_x}, {"xi_y", &c.field.xi_y},
                            {"jitter", &c.field.jitter}})
    get(f, key, *field, "field");
  get(f, "ego_anchor", c.field.include_ego_anchor, "field");
  const auto& cd = j.at("codec");
  auto& t = c.codec.train;
  get(cd, "encoder", c.codec.encoder, "codec");
  get(cd, "batch_size", t.batch_size, "codec");
  get(cd, "iterations", t.max_iterations, "codec");
  for (auto [key, field] : {std::pair{"learning_rate", &t.nadam.learning_rate}, {"beta1", &t.nadam.beta1},
                            {"beta2", &t.nadam.beta2}, {"epsilon", &t.nadam.epsilon},
                            {"lr_half_life", &t.lr_half_life}, {"input_scale", &t.input_scale}})
    get(cd, key, *field, "codec");
  const auto& b = j.at("bnp");
  auto& h = c.bnp.hyper;
  for (auto [key, field] : {std::pair{"gamma", &h.gamma}, {"alpha_plus_kappa", &h.alpha_plus_kappa}, {"rho", &h.rho},
                            {"nu0", &h.nu0}, {"s0_scale", &c.s0_scale}, {"gamma_shape", &h.gamma_shape},
                            {"gamma_rate", &h.gamma_rate}, {"apk_shape", &h.apk_shape}, {"apk_rate", &h.apk_rate},
                            {"rho_a", &h.rho_a}, {"rho_b", &h.rho_b}})
    get(b, key, *field, "bnp");
  get(b, "L", h.L, "bnp");
  get(b, "hyper_resampling", h.hyper_resampling, "bnp");
  get(b, "hyper_inner_iterations", h.hyper_inner_iterations, "bnp");
  get(b, "iterations", c.bnp.iterations, "bnp");
  get(b, "standardize", c.bnp.standardize, "bnp");
  h.S0 = c.s0_scale * Eigen::MatrixXd::Identity(kFeatureDim, kFeatureDim);
  const auto& a = j.at("analysis");
  get(a, "regions", c.analysis.regions, "analysis");
  get(a, "effective_threshold", c.analysis.effective_threshold, "analysis");
  get(a, "fractions", c.analysis.fractions, "analysis");
  get(a, "seeds", c.analysis.seeds, "analysis");
  c.codec.train.seed = c.seed;
  c.synth.seed = c.seed;
  return c;
}

// Overlays `user` on `base`; keys absent from `base` are rejected.
inline void merge(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw UsageError((path.empty() ? "config" : path) + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const auto here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw UsageError("unknown config key '" + here + "'");
    if (base[key].is_object())
      merge(base[key], value, here);
    else
      base[key] = value;
  }
}

// Override values parse as JSON; anything else is taken as a string.
inline json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return json(text);
  }
}

}  // namespace config_detail

inline void PipelineConfig::validate() const {
  roi.validate();
  field.validate();
  synth.validate();
  ingest.columns.validate();
  if (!(ingest.buffer_s > 0)) throw ConfigError("ingest.buffer_s must be positive");
  if (codec.encoder != "cae" && codec.encoder != "linear") throw ConfigError("codec.encoder must be 'cae' or 'linear'");
  codec.train.validate();
  if (!(s0_scale > 0)) throw ConfigError("bnp.s0_scale must be positive");
  bnp.validate();
  if (!(analysis.effective_threshold >= 0 && analysis.effective_threshold < 1))
    throw ConfigError("analysis.effective_threshold must lie in [0, 1)");
  for (const auto& r : analysis.regions)
    if (r != "ALL" && r != "PRE" && r != "LANE_CHANGE" && r != "POST")
      throw ConfigError("analysis.regions: unknown region '" + r + "'");
  for (double f : analysis.fractions)
    if (!(f > 0 && f <= 1)) throw ConfigError("analysis.fractions must lie in (0, 1]");
  if (!analysis.fractions.empty() && analysis.seeds.empty()) throw ConfigError("analysis.seeds is empty");
}

inline nlohmann::json config_json(const PipelineConfig& c) { return config_detail::to_json(c); }

// Defaults, then `doc`, then each "a.b=v" override, in order.
inline PipelineConfig load_config(const nlohmann::json& doc, const std::vector<std::string>& overrides = {}) {
  auto tree = config_detail::to_json(PipelineConfig{});
  config_detail::merge(tree, doc, "");
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + o + "' is not of the form a.b=value");
    const auto path = o.substr(0, eq);
    nlohmann::json* node = &tree;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object() || !node->contains(key)) throw UsageError("unknown config key '" + path + "'");
      node = &(*node)[key];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (node->is_object()) throw UsageError("'" + path + "' names a section, not a value");
    *node = config_detail::parse_value(o.substr(eq + 1));
  }
  auto c = config_detail::from_json(tree);
  c.validate();
  return c;
}

}  // namespace lanescope
