#pragma once

// File formats shared by the pipeline stages: scenes JSONL, field exports,
// feature and label CSVs, chain summaries, analysis tables and manifests.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanescope/analysis.hpp"
#include "lanescope/bnp.hpp"
#include "lanescope/codec/features.hpp"
#include "lanescope/core.hpp"
#include "lanescope/errors.hpp"
#include "lanescope/ingest.hpp"

namespace lanescope::io {

using nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

// Shortest decimal text that reads back to the same double.
inline std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ------------------------------------------------------------------ files

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PathNotFound(path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PathNotFound("cannot write " + path);
  return out;
}

inline std::string read_text(const std::string& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

inline json read_json(const std::string& path) { return parse_json(read_text(path), path); }

inline void write_json(const std::string& path, const json& doc) {
  auto out = open_out(path);
  out << doc.dump(1) << '\n';
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 15];
  return s;
}

inline std::string file_hash(const std::string& path) { return hex64(fnv1a(read_text(path))); }

// ----------------------------------------------------------------- scenes

inline json state_json(const VehicleState& s) {
  return {{"vehicle_id", s.vehicle_id}, {"frame", s.frame}, {"x", s.x},   {"y", s.y},  {"vx", s.vx},
          {"vy", s.vy},                 {"ax", s.ax},       {"ay", s.ay}, {"lane_id", s.lane_id}};
}

inline VehicleState state_from_json(const json& j) {
  VehicleState s;
  s.vehicle_id = j.at("vehicle_id").get<std::int64_t>();
  s.frame = j.at("frame").get<std::int64_t>();
  s.x = j.at("x").get<double>();
  s.y = j.at("y").get<double>();
  s.vx = j.at("vx").get<double>();
  s.vy = j.at("vy").get<double>();
  s.ax = j.at("ax").get<double>();
  s.ay = j.at("ay").get<double>();
  s.lane_id = j.at("lane_id").get<int>();
  return s;
}

// A scene line with the owning ego sequence and its region tag.
struct SceneRecord {
  std::int64_t sequence = 0;
  Region region = Region::Pre;
  Scene scene;
};

inline json scene_json(const Scene& s) {
  json n = json::array();
  for (const auto& v : s.neighbors) n.push_back(state_json(v));
  return {{"frame", s.frame}, {"ego", state_json(s.ego)}, {"neighbors", n}};
}

inline void write_scenes_jsonl(std::ostream& os, const std::vector<SceneRecord>& records) {
  for (const auto& r : records) {
    auto j = scene_json(r.scene);
    j["sequence"] = r.sequence;
    j["region"] = to_string(r.region);
    os << j.dump() << '\n';
  }
}

inline std::vector<SceneRecord> read_scenes_jsonl(std::istream& is, const RoiConfig& roi) {
  std::vector<SceneRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      std::vector<VehicleState> neighbors;
      for (const auto& n : j.at("neighbors")) neighbors.push_back(state_from_json(n));
      SceneRecord r;
      r.scene = Scene(state_from_json(j.at("ego")), std::move(neighbors), roi);
      r.scene.frame = j.at("frame").get<std::int64_t>();
      r.sequence = j.value("sequence", r.scene.ego.vehicle_id);
      r.region = region_from_string(j.value("region", std::string("PRE")));
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError("scene line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.empty()) throw EmptyInput("no scenes");
  return out;
}

// Contiguous runs of equal sequence ids: [begin, end) index ranges.
template <typename Record>
std::vector<std::pair<std::size_t, std::size_t>> sequence_ranges(const std::vector<Record>& records) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i == 0 || records[i].sequence != records[i - 1].sequence)
      out.emplace_back(i, i + 1);
    else
      out.back().second = i + 1;
  }
  return out;
}

// ----------------------------------------------------------------- fields

// {frame, grid: {x0, y0, dx, dy, nx, ny}, dvx, dvy}; arrays row-major with the
// lateral row as the slow index.
inline json field_json(const FieldTensor& f, const RoiConfig& roi) {
  std::vector<double> dvx, dvy;
  dvx.reserve(f.rows() * f.cols());
  dvy.reserve(f.rows() * f.cols());
  for (std::size_t r = 0; r < f.rows(); ++r)
    for (std::size_t c = 0; c < f.cols(); ++c) {
      dvx.push_back(f.at(r, c, 0));
      dvy.push_back(f.at(r, c, 1));
    }
  return {{"frame", f.frame()},
          {"grid", {{"x0", roi.grid_x(0)}, {"y0", roi.grid_y(0)}, {"dx", roi.dx}, {"dy", roi.dy}, {"nx", f.cols()}, {"ny", f.rows()}}},
          {"dvx", dvx},
          {"dvy", dvy}};
}

inline FieldTensor field_from_json(const json& j) {
  try {
    const auto nx = j.at("grid").at("nx").get<std::size_t>(), ny = j.at("grid").at("ny").get<std::size_t>();
    const auto dvx = j.at("dvx").get<std::vector<double>>(), dvy = j.at("dvy").get<std::vector<double>>();
    if (dvx.size() != nx * ny || dvy.size() != nx * ny) throw ShapeError("field arrays do not match the grid");
    FieldTensor f(ny, nx, j.at("frame").get<std::int64_t>());
    for (std::size_t r = 0; r < ny; ++r)
      for (std::size_t c = 0; c < nx; ++c) {
        f.at(r, c, 0) = dvx[r * nx + c];
        f.at(r, c, 1) = dvy[r * nx + c];
      }
    return f;
  } catch (const json::exception& e) {
    throw ParseError(std::string("field: ") + e.what());
  }
}

struct FieldRecord {
  std::int64_t sequence = 0;
  FieldTensor field;
};

inline void write_fields_jsonl(std::ostream& os, const std::vector<FieldRecord>& records, const RoiConfig& roi) {
  for (const auto& r : records) {
    auto j = field_json(r.field, roi);
    j["sequence"] = r.sequence;
    os << j.dump() << '\n';
  }
}

inline std::vector<FieldRecord> read_fields_jsonl(std::istream& is) {
  std::vector<FieldRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("field line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back({j.value("sequence", std::int64_t{0}), field_from_json(j)});
  }
  if (out.empty()) throw EmptyInput("no fields");
  return out;
}

inline void write_field_csv_header(std::ostream& os) { os << "frame,row,col,x,y,dvx,dvy\n"; }

inline void write_field_csv_rows(std::ostream& os, const FieldTensor& f, const RoiConfig& roi,
                                 const std::string& prefix = "") {
  for (std::size_t r = 0; r < f.rows(); ++r)
    for (std::size_t c = 0; c < f.cols(); ++c)
      os << prefix << f.frame() << ',' << r << ',' << c << ',' << num(roi.grid_x(c)) << ',' << num(roi.grid_y(r))
         << ',' << num(f.at(r, c, 0)) << ',' << num(f.at(r, c, 1)) << '\n';
}

// ------------------------------------------------------- features, labels

struct FeatureTable {
  std::vector<std::int64_t> sequence, frame;
  std::vector<Region> region;
  FeatureSequence values;  // rows aligned with the columns above
};

inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names{"vx", "vy", "ax", "ay", "h1", "h2", "h3", "h4", "h5", "h6", "h7", "h8"};
  return names;
}

inline void write_features_csv(std::ostream& os, const FeatureTable& t) {
  os << "sequence,frame,region";
  for (const auto& n : feature_names()) os << ',' << n;
  os << '\n';
  for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    os << t.sequence[k] << ',' << t.frame[k] << ',' << to_string(t.region[k]);
    for (Eigen::Index j = 0; j < t.values.cols(); ++j) os << ',' << num(t.values(i, j));
    os << '\n';
  }
}

inline double parse_number(const std::string& cell, std::size_t line) {
  double v = 0.0;
  const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (r.ec != std::errc() || r.ptr != cell.data() + cell.size())
    throw ParseError("line " + std::to_string(line) + ": '" + cell + "' is not a number");
  return v;
}

inline std::int64_t parse_integer(const std::string& cell, std::size_t line) {
  std::int64_t v = 0;
  const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (r.ec != std::errc() || r.ptr != cell.data() + cell.size())
    throw ParseError("line " + std::to_string(line) + ": '" + cell + "' is not an integer");
  return v;
}

inline std::vector<std::string> split(const std::string& line) { return detail::split_csv_line(line); }

inline std::vector<std::string> expect_header(std::istream& is, const std::vector<std::string>& required) {
  std::string line;
  if (!std::getline(is, line)) throw EmptyInput("missing CSV header");
  auto header = split(line);
  for (std::size_t i = 0; i < required.size(); ++i)
    if (i >= header.size() || header[i] != required[i]) throw MissingColumn("expected column '" + required[i] + "'");
  return header;
}

inline FeatureTable read_features_csv(std::istream& is) {
  std::vector<std::string> cols{"sequence", "frame", "region"};
  for (const auto& n : feature_names()) cols.push_back(n);
  expect_header(is, cols);
  FeatureTable t;
  std::vector<double> flat;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != cols.size()) throw ParseError("line " + std::to_string(lineno) + ": wrong cell count");
    t.sequence.push_back(parse_integer(cells[0], lineno));
    t.frame.push_back(parse_integer(cells[1], lineno));
    t.region.push_back(region_from_string(cells[2]));
    for (std::size_t j = 3; j < cells.size(); ++j) flat.push_back(parse_number(cells[j], lineno));
  }
  if (t.frame.empty()) throw EmptyInput("no feature rows");
  const auto d = static_cast<Eigen::Index>(feature_names().size());
  t.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), static_cast<Eigen::Index>(t.frame.size()), d);
  return t;
}

inline std::vector<FeatureSequence> split_sequences(const FeatureTable& t) {
  std::vector<FeatureSequence> out;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= t.sequence.size(); ++i)
    if (i == t.sequence.size() || t.sequence[i] != t.sequence[begin]) {
      out.push_back(t.values.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(i - begin)));
      begin = i;
    }
  return out;
}

struct LabelTable {
  std::vector<std::int64_t> sequence, frame;
  Labels label;  // pattern ids, 1-based
};

inline void write_labels_csv(std::ostream& os, const LabelTable& t) {
  os << "sequence,frame,label\n";
  for (std::size_t i = 0; i < t.label.size(); ++i) os << t.sequence[i] << ',' << t.frame[i] << ',' << t.label[i] << '\n';
}

inline LabelTable read_labels_csv(std::istream& is) {
  expect_header(is, {"sequence", "frame", "label"});
  LabelTable t;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != 3) throw ParseError("line " + std::to_string(lineno) + ": wrong cell count");
    t.sequence.push_back(parse_integer(cells[0], lineno));
    t.frame.push_back(parse_integer(cells[1], lineno));
    t.label.push_back(static_cast<int>(parse_integer(cells[2], lineno)));
  }
  if (t.label.empty()) throw EmptyInput("no label rows");
  return t;
}

inline LabelSet split_labels(const LabelTable& t) {
  LabelSet out;
  for (std::size_t i = 0; i < t.label.size(); ++i) {
    if (i == 0 || t.sequence[i] != t.sequence[i - 1]) out.emplace_back();
    out.back().push_back(t.label[i]);
  }
  return out;
}

// ----------------------------------------------------------------- chain

inline json matrix_json(const Eigen::MatrixXd& m, const std::vector<std::string>& rows,
                        const std::vector<std::string>& cols) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    data.push_back(row);
  }
  return {{"rows", rows}, {"cols", cols}, {"data", data}};
}

inline json count_matrix_json(const CountMatrix& m, const std::vector<std::string>& rows,
                              const std::vector<std::string>& cols) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    data.push_back(row);
  }
  return {{"rows", rows}, {"cols", cols}, {"data", data}};
}

inline std::vector<std::string> numbered(const std::string& prefix, int n, int first = 1) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(first + i));
  return out;
}

// Chain summary. States are reported in pattern order: the sampler state
// original[k - 1] is pattern k; unoccupied states follow in sampler order.
inline json chain_summary_json(const FitResult& r, const std::vector<int>& order,
                               const codec::Standardization& transform) {
  const int L = r.hyper.L;
  std::vector<int> perm = order;
  for (int k = 0; k < L; ++k)
    if (std::find(perm.begin(), perm.end(), k) == perm.end()) perm.push_back(k);
  Eigen::VectorXd beta(L);
  Eigen::MatrixXd pi(L, L);
  const Eigen::VectorXi occ = occupancy(r.state.z, L);
  json occupancy_out = json::array();
  for (int i = 0; i < L; ++i) {
    const auto si = static_cast<std::size_t>(i);
    beta[i] = r.state.beta[perm[si]];
    for (int j = 0; j < L; ++j) pi(i, j) = r.state.pi(perm[si], perm[static_cast<std::size_t>(j)]);
    occupancy_out.push_back(occ[perm[si]]);
  }
  json iterations = json::array();
  for (std::size_t i = 0; i < r.loglik_history.size(); ++i)
    iterations.push_back({{"iteration", i + 1}, {"loglik", r.loglik_history[i]}, {"effective_states", r.effective_history[i]}});
  const auto names = numbered("pattern_", L);
  return {{"format", "lanescope-chain"},
          {"iterations", iterations},
          {"effective_states", r.effective_states},
          {"patterns", names},
          {"sampler_state", perm},
          {"beta", std::vector<double>(beta.data(), beta.data() + L)},
          {"pi", matrix_json(pi, names, names)},
          {"occupancy", occupancy_out},
          {"hyper",
           {{"gamma", r.hyper.gamma}, {"alpha_plus_kappa", r.hyper.alpha_plus_kappa}, {"rho", r.hyper.rho}, {"L", L}}},
          {"standardization",
           {{"features", feature_names()},
            {"mean", std::vector<double>(transform.mean.data(), transform.mean.data() + transform.mean.size())},
            {"scale", std::vector<double>(transform.scale.data(), transform.scale.data() + transform.scale.size())}}}};
}

// ---------------------------------------------------------------- manifest

struct Manifest {
  std::string stage;
  std::uint64_t seed = 0;
  json config;
  std::vector<std::string> inputs, outputs;

  json to_json() const {
    json in = json::array(), out = json::array();
    for (const auto& p : inputs) in.push_back({{"path", p}, {"fnv1a64", file_hash(p)}});
    for (const auto& p : outputs) out.push_back({{"path", p}, {"fnv1a64", file_hash(p)}});
    return {{"stage", stage},
            {"seed", seed},
            {"inputs", in},
            {"outputs", out},
            {"config", config},
            {"versions",
             {{"lanescope", kVersion},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
              {"compiler", __VERSION__}}}};
  }
};

}  // namespace lanescope::io
