#pragma once

// Pipeline stages. Each stage reads the files named in the config, writes its
// outputs and a `<output>.manifest.json` beside the primary output.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "lanescope/analysis.hpp"
#include "lanescope/codec/cae.hpp"
#include "lanescope/codec/checkpoint.hpp"
#include "lanescope/codec/features.hpp"
#include "lanescope/codec/linear.hpp"
#include "lanescope/codec/train.hpp"
#include "lanescope/config.hpp"
#include "lanescope/dataset.hpp"
#include "lanescope/io.hpp"
#include "lanescope/segment.hpp"

namespace lanescope {

using Log = std::function<void(const std::string&)>;

namespace stage_detail {

inline void write_manifest(const std::string& stage, const PipelineConfig& cfg, const std::vector<std::string>& inputs,
                           const std::vector<std::string>& outputs, const std::string& path) {
  io::Manifest m{stage, cfg.seed, config_json(cfg), inputs, outputs};
  io::write_json(path, m.to_json());
}

inline void require(const std::string& path) {
  if (!std::filesystem::exists(path)) throw PathNotFound(path);
}

inline std::vector<FieldTensor> tensors(const std::vector<io::FieldRecord>& records) {
  std::vector<FieldTensor> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.field);
  return out;
}

// Scenes and fields must describe the same frames in the same order.
inline void check_aligned(const std::vector<io::SceneRecord>& scenes, const std::vector<io::FieldRecord>& fields) {
  if (scenes.size() != fields.size())
    throw LengthMismatch(std::to_string(scenes.size()) + " scenes but " + std::to_string(fields.size()) + " fields");
  for (std::size_t i = 0; i < scenes.size(); ++i)
    if (scenes[i].sequence != fields[i].sequence || scenes[i].scene.frame != fields[i].field.frame())
      throw LengthMismatch("scene and field " + std::to_string(i) + " refer to different frames");
}

}  // namespace stage_detail

// -------------------------------------------------------------------- synth

inline void run_synth(const PipelineConfig& cfg, const Log& log = {}) {
  const auto out = cfg.io.resolve(cfg.io.tracks);
  const auto tracks = synth_recording(cfg.synth);
  {
    auto os = io::open_out(out);
    write_tracks_csv(os, tracks, true);
  }
  stage_detail::write_manifest("synth", cfg, {}, {out}, out + ".manifest.json");
  if (log) log("synth: " + std::to_string(tracks.size()) + " trajectories -> " + out);
}

// ------------------------------------------------------------------- ingest

inline void run_ingest(const PipelineConfig& cfg, const Log& log = {}) {
  const auto in = cfg.io.resolve(cfg.io.tracks), out = cfg.io.resolve(cfg.io.scenes);
  std::vector<Trajectory> raw;
  {
    auto is = io::open_in(in);
    raw = parse_tracks(is, cfg.ingest.columns);
  }
  const auto tracks = downsample_all(normalize(std::move(raw)), cfg.ingest.columns);
  const auto seqs = lane_change_sequences(tracks, cfg.roi, cfg.ingest.columns.target_rate_hz, cfg.ingest.buffer_s);
  if (seqs.empty()) throw NoLaneChange("no trajectory in " + in + " changes lane exactly once");
  std::vector<io::SceneRecord> records;
  for (const auto& s : seqs)
    for (std::size_t t = 0; t < s.scenes.size(); ++t) records.push_back({s.ego_id, s.regions.tags[t], s.scenes[t]});
  {
    auto os = io::open_out(out);
    io::write_scenes_jsonl(os, records);
  }
  stage_detail::write_manifest("ingest", cfg, {in}, {out}, out + ".manifest.json");
  if (log) log("ingest: " + std::to_string(seqs.size()) + " lane-change sequences, " + std::to_string(records.size()) + " scenes -> " + out);
}

// ------------------------------------------------------------------- fields

inline void run_fields(const PipelineConfig& cfg, const Log& log = {}) {
  const auto in = cfg.io.resolve(cfg.io.scenes), out = cfg.io.resolve(cfg.io.fields);
  std::vector<io::SceneRecord> records;
  {
    auto is = io::open_in(in);
    records = io::read_scenes_jsonl(is, cfg.roi);
  }
  std::vector<Scene> scenes;
  scenes.reserve(records.size());
  for (const auto& r : records) scenes.push_back(r.scene);
  const auto fields = compute_fields(scenes, cfg.roi, cfg.field);
  std::vector<io::FieldRecord> out_records;
  out_records.reserve(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) out_records.push_back({records[i].sequence, fields[i]});
  {
    auto os = io::open_out(out);
    io::write_fields_jsonl(os, out_records, cfg.roi);
  }
  std::vector<std::string> outputs{out};
  if (!cfg.io.fields_csv.empty()) {
    const auto csv = cfg.io.resolve(cfg.io.fields_csv);
    auto os = io::open_out(csv);
    os << "sequence,";
    io::write_field_csv_header(os);
    for (const auto& r : out_records) io::write_field_csv_rows(os, r.field, cfg.roi, std::to_string(r.sequence) + ",");
    outputs.push_back(csv);
  }
  stage_detail::write_manifest("fields", cfg, {in}, outputs, out + ".manifest.json");
  if (log) log("fields: " + std::to_string(fields.size()) + " AS-GVF tensors -> " + out);
}

// -------------------------------------------------------------- train-codec

inline void run_train_codec(const PipelineConfig& cfg, const Log& log = {}) {
  const auto in = cfg.io.resolve(cfg.io.fields), out = cfg.io.resolve(cfg.io.codec_model);
  std::vector<io::FieldRecord> records;
  {
    auto is = io::open_in(in);
    records = io::read_fields_jsonl(is);
  }
  const auto fields = stage_detail::tensors(records);
  if (cfg.codec.encoder == "linear") {
    io::write_json(out, codec::linear_projection_json(codec::linear_fallback_fit(fields)));
    if (log) log("train-codec: linear projection of " + std::to_string(fields.size()) + " fields -> " + out);
  } else {
    auto train = cfg.codec.train;
    train.seed = cfg.seed;
    const auto every = std::max<std::int64_t>(1, train.max_iterations / 10);
    auto result = codec::cae_train(codec::Autoencoder<float>::initialized(cfg.seed), fields, train,
                                   [&](std::int64_t it, double loss) {
                                     if (log && (it + 1) % every == 0)
                                       log("train-codec: iteration " + std::to_string(it + 1) + " loss " + io::num(loss));
                                   });
    codec::save_checkpoint(result.model, out);
    if (log) log("train-codec: dataset MSE " + io::num(codec::dataset_mse(result.model, fields)) + " -> " + out);
  }
  stage_detail::write_manifest("train-codec", cfg, {in}, {out}, out + ".manifest.json");
}

// ------------------------------------------------------------------- encode

inline void run_encode(const PipelineConfig& cfg, const Log& log = {}) {
  const auto scenes_path = cfg.io.resolve(cfg.io.scenes), fields_path = cfg.io.resolve(cfg.io.fields);
  const auto model_path = cfg.io.resolve(cfg.io.codec_model), out = cfg.io.resolve(cfg.io.features);
  std::vector<io::SceneRecord> scenes;
  std::vector<io::FieldRecord> records;
  {
    auto is = io::open_in(scenes_path);
    scenes = io::read_scenes_jsonl(is, cfg.roi);
  }
  {
    auto is = io::open_in(fields_path);
    records = io::read_fields_jsonl(is);
  }
  stage_detail::check_aligned(scenes, records);
  const auto fields = stage_detail::tensors(records);
  Eigen::MatrixXd latents;
  const auto model = io::read_json(model_path);
  const auto format = model.value("format", std::string());
  if (format == "lanescope-linear")
    latents = codec::linear_fallback_encode(codec::linear_projection_from_json(model), fields);
  else if (format == "lanescope-cae")
    latents = codec::cae_encode(codec::checkpoint_from_json<float>(model), fields);
  else
    throw ParseError(model_path + " is neither a CAE checkpoint nor a linear projection");

  std::vector<VehicleState> ego;
  ego.reserve(scenes.size());
  io::FeatureTable table;
  for (const auto& s : scenes) {
    ego.push_back(s.scene.ego);
    table.sequence.push_back(s.sequence);
    table.frame.push_back(s.scene.frame);
    table.region.push_back(s.region);
  }
  table.values = codec::build_features(ego, latents);
  {
    auto os = io::open_out(out);
    io::write_features_csv(os, table);
  }
  stage_detail::write_manifest("encode", cfg, {scenes_path, fields_path, model_path}, {out}, out + ".manifest.json");
  if (log) log("encode: " + std::to_string(table.frame.size()) + " feature rows -> " + out);
}

// ------------------------------------------------------------------ segment

inline void run_segment(const PipelineConfig& cfg, const Log& log = {}) {
  const auto in = cfg.io.resolve(cfg.io.features), out = cfg.io.resolve(cfg.io.labels);
  const auto chain = cfg.io.resolve(cfg.io.chain);
  io::FeatureTable table;
  {
    auto is = io::open_in(in);
    table = io::read_features_csv(is);
  }
  auto result = segment(io::split_sequences(table), cfg.bnp, cfg.seed);
  auto relabeled = relabel_by_frequency(result.fit.state.z);
  io::LabelTable labels{table.sequence, table.frame, {}};
  for (const auto& seq : relabeled.labels) labels.label.insert(labels.label.end(), seq.begin(), seq.end());
  {
    auto os = io::open_out(out);
    io::write_labels_csv(os, labels);
  }
  io::write_json(chain, io::chain_summary_json(result.fit, relabeled.original, result.transform));
  stage_detail::write_manifest("segment", cfg, {in}, {out, chain}, out + ".manifest.json");
  if (log)
    log("segment: " + std::to_string(result.fit.effective_states) + " effective patterns after " +
        std::to_string(cfg.bnp.iterations) + " sweeps -> " + out);
}

// ------------------------------------------------------------------ analyze

inline void run_analyze(const PipelineConfig& cfg, const Log& log = {}) {
  const auto labels_path = cfg.io.resolve(cfg.io.labels), scenes_path = cfg.io.resolve(cfg.io.scenes);
  const auto fields_path = cfg.io.resolve(cfg.io.fields), features_path = cfg.io.resolve(cfg.io.features);
  const auto dir = std::filesystem::path(cfg.io.resolve(cfg.io.analysis));
  io::LabelTable labels;
  std::vector<io::SceneRecord> scenes;
  std::vector<io::FieldRecord> records;
  {
    auto is = io::open_in(labels_path);
    labels = io::read_labels_csv(is);
  }
  {
    auto is = io::open_in(scenes_path);
    scenes = io::read_scenes_jsonl(is, cfg.roi);
  }
  {
    auto is = io::open_in(fields_path);
    records = io::read_fields_jsonl(is);
  }
  stage_detail::check_aligned(scenes, records);
  if (labels.label.size() != scenes.size())
    throw LengthMismatch(std::to_string(labels.label.size()) + " labels but " + std::to_string(scenes.size()) + " scenes");
  for (std::size_t i = 0; i < scenes.size(); ++i)
    if (labels.sequence[i] != scenes[i].sequence || labels.frame[i] != scenes[i].scene.frame)
      throw LengthMismatch("label row " + std::to_string(i) + " refers to a different frame than its scene");

  const auto label_set = io::split_labels(labels);
  std::vector<std::vector<Region>> tags;
  std::vector<VehicleState> ego;
  for (const auto& [b, e] : io::sequence_ranges(scenes)) {
    tags.emplace_back();
    for (std::size_t i = b; i < e; ++i) tags.back().push_back(scenes[i].region);
  }
  for (const auto& s : scenes) ego.push_back(s.scene.ego);
  const auto fields = stage_detail::tensors(records);

  const auto hist = occupancy_histogram(label_set);
  const auto protos = prototype_fields(fields, labels.label);
  const auto lateral = lateral_state_table(labels.label, ego);
  const int patterns = max_label(label_set);
  const auto names = io::numbered("pattern_", patterns);

  using io::json;
  json doc;
  doc["format"] = "lanescope-analysis";
  doc["frames"] = labels.label.size();
  doc["sequences"] = label_set.size();
  doc["patterns"] = patterns;
  json histogram = json::array();
  for (const auto& [k, c] : hist) histogram.push_back({{"pattern", k}, {"count", c}});
  doc["histogram"] = histogram;
  doc["effective_patterns"] = bins_above(hist, cfg.analysis.effective_threshold);
  json matrices = json::array();
  std::vector<TransitionMatrix> tms;
  for (const auto& region : cfg.analysis.regions)
    for (bool self : {true, false}) {
      tms.push_back(transition_counts(label_set, tags, region_filter_from_string(region), self, patterns));
      auto m = io::count_matrix_json(tms.back().counts, names, names);
      m["region"] = region;
      m["include_self"] = self;
      m["total"] = tms.back().total();
      matrices.push_back(m);
    }
  doc["transitions"] = matrices;
  json proto = json::array();
  for (const auto& [k, f] : protos) {
    auto j = io::field_json(f, cfg.roi);
    j.erase("frame");
    j["pattern"] = k;
    j["members"] = hist.at(k);
    proto.push_back(j);
  }
  doc["prototypes"] = proto;
  json lat = json::array();
  for (const auto& [k, states] : lateral) {
    json vy = json::array(), ay = json::array();
    for (const auto& s : states) {
      vy.push_back(s.vy);
      ay.push_back(s.ay);
    }
    lat.push_back({{"pattern", k}, {"vy", vy}, {"ay", ay}});
  }
  doc["lateral_states"] = lat;

  std::vector<std::string> outputs;
  auto emit = [&](const std::string& name, const std::function<void(std::ostream&)>& body) {
    const auto path = (dir / name).string();
    auto os = io::open_out(path);
    body(os);
    outputs.push_back(path);
  };
  emit("histogram.csv", [&](std::ostream& os) {
    os << "pattern,count\n";
    for (const auto& [k, c] : hist) os << k << ',' << c << '\n';
  });
  emit("transitions.csv", [&](std::ostream& os) {
    os << "region,include_self,from,to,count\n";
    for (const auto& m : tms)
      for (int i = 0; i < m.patterns(); ++i)
        for (int j = 0; j < m.patterns(); ++j)
          os << region_name(m.region) << ',' << (m.include_self ? "true" : "false") << ',' << i + 1 << ',' << j + 1
             << ',' << m.counts(i, j) << '\n';
  });
  emit("prototypes.csv", [&](std::ostream& os) {
    os << "pattern,row,col,x,y,dvx,dvy\n";
    for (const auto& [k, f] : protos)
      for (std::size_t r = 0; r < f.rows(); ++r)
        for (std::size_t c = 0; c < f.cols(); ++c)
          os << k << ',' << r << ',' << c << ',' << io::num(cfg.roi.grid_x(c)) << ',' << io::num(cfg.roi.grid_y(r))
             << ',' << io::num(f.at(r, c, 0)) << ',' << io::num(f.at(r, c, 1)) << '\n';
  });
  emit("lateral.csv", [&](std::ostream& os) {
    os << "pattern,sequence,frame,vy,ay\n";
    for (std::size_t i = 0; i < scenes.size(); ++i)
      os << labels.label[i] << ',' << scenes[i].sequence << ',' << scenes[i].scene.frame << ','
         << io::num(scenes[i].scene.ego.vy) << ',' << io::num(scenes[i].scene.ego.ay) << '\n';
  });

  std::vector<std::string> inputs{labels_path, scenes_path, fields_path};
  if (!cfg.analysis.fractions.empty()) {
    io::FeatureTable table;
    {
      auto is = io::open_in(features_path);
      table = io::read_features_csv(is);
    }
    inputs.push_back(features_path);
    const auto curve = pattern_count_curve(io::split_sequences(table), cfg.bnp, cfg.analysis.fractions, cfg.analysis.seeds);
    json points = json::array();
    for (const auto& p : curve)
      points.push_back({{"fraction", p.fraction}, {"frames", p.frames}, {"counts", p.counts}, {"median", p.median}});
    doc["pattern_count_curve"] = {{"seeds", cfg.analysis.seeds}, {"points", points}};
    emit("pattern_curve.csv", [&](std::ostream& os) {
      os << "fraction,frames,seed,effective_patterns\n";
      for (const auto& p : curve)
        for (std::size_t s = 0; s < p.counts.size(); ++s)
          os << io::num(p.fraction) << ',' << p.frames << ',' << cfg.analysis.seeds[s] << ',' << p.counts[s] << '\n';
    });
  }
  const auto main = (dir / "analysis.json").string();
  io::write_json(main, doc);
  outputs.insert(outputs.begin(), main);
  stage_detail::write_manifest("analyze", cfg, inputs, outputs, (dir / "manifest.json").string());
  if (log) log("analyze: " + std::to_string(patterns) + " patterns -> " + dir.string());
}

// ----------------------------------------------------------------- pipeline

// synth (when enabled), ingest, fields, train-codec, encode, segment, analyze.
inline void run_pipeline(const PipelineConfig& cfg, const Log& log = {}) {
  if (cfg.synth_enabled) run_synth(cfg, log);
  run_ingest(cfg, log);
  run_fields(cfg, log);
  run_train_codec(cfg, log);
  run_encode(cfg, log);
  run_segment(cfg, log);
  run_analyze(cfg, log);
}

}  // namespace lanescope
