#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "lanescope/config.hpp"
#include "lanescope/io.hpp"

using namespace lanescope;
using nlohmann::json;

// ---------------------------------------------------------------- hashing

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(io::fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(io::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(io::fnv1a("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(io::hex64(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
  EXPECT_EQ(io::hex64(1), "0000000000000001");
}

TEST(Numbers, ShortestRoundTrip) {
  for (double v : {0.1, -1.0 / 3.0, 1e-300, 31.578066601601208, 0.0, 12345678.9})
    EXPECT_EQ(std::stod(io::num(v)), v);
  EXPECT_EQ(io::num(0.5), "0.5");
}

// ----------------------------------------------------------------- scenes

TEST(Scenes, JsonlRoundTrip) {
  RoiConfig roi;
  VehicleState ego{7, 12, 100.0, 6.0, 30.1, 0.2, -0.3, 0.05, 2};
  VehicleState a{8, 12, 120.5, 2.0, 28.0, 0.0, 0.4, 0.0, 1};
  VehicleState b{9, 12, 75.25, 9.5, 33.3, -0.1, 0.0, 0.0, 3};
  std::vector<io::SceneRecord> records{{7, Region::LaneChange, Scene(ego, {a, b}, roi)},
                                       {7, Region::Post, Scene(ego, {}, roi)}};
  std::stringstream ss;
  io::write_scenes_jsonl(ss, records);
  const auto back = io::read_scenes_jsonl(ss, roi);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].scene.ego, ego);
  EXPECT_EQ(back[0].scene.neighbors, (std::vector<VehicleState>{a, b}));
  EXPECT_EQ(back[0].region, Region::LaneChange);
  EXPECT_EQ(back[1].region, Region::Post);
  EXPECT_EQ(back[1].sequence, 7);
}

TEST(Scenes, FieldNamesMatchTheStateType) {
  RoiConfig roi;
  VehicleState ego{1, 3, 0, 0, 30, 0, 0, 0, 1};
  std::stringstream ss;
  io::write_scenes_jsonl(ss, {{1, Region::Pre, Scene(ego, {}, roi)}});
  const auto j = json::parse(ss.str());
  EXPECT_EQ(j.at("frame"), 3);
  for (const char* k : {"vehicle_id", "frame", "x", "y", "vx", "vy", "ax", "ay", "lane_id"})
    EXPECT_TRUE(j.at("ego").contains(k)) << k;
  EXPECT_TRUE(j.at("neighbors").is_array());
}

TEST(Scenes, Errors) {
  RoiConfig roi;
  std::stringstream bad("{\"frame\": 1}\n");
  EXPECT_THROW(io::read_scenes_jsonl(bad, roi), ParseError);
  std::stringstream empty("");
  EXPECT_THROW(io::read_scenes_jsonl(empty, roi), EmptyInput);
}

// ----------------------------------------------------------------- fields

TEST(Fields, ExportLayoutIsRowMajor) {
  RoiConfig roi;
  FieldTensor f(13, 17, 42);
  for (std::size_t r = 0; r < 13; ++r)
    for (std::size_t c = 0; c < 17; ++c) {
      f.at(r, c, 0) = 100.0 * static_cast<double>(r) + static_cast<double>(c);
      f.at(r, c, 1) = -f.at(r, c, 0);
    }
  const auto j = io::field_json(f, roi);
  EXPECT_EQ(j.at("frame"), 42);
  EXPECT_EQ(j.at("grid").at("x0"), -40.0);
  EXPECT_EQ(j.at("grid").at("y0"), -6.0);
  EXPECT_EQ(j.at("grid").at("nx"), 17);
  EXPECT_EQ(j.at("grid").at("ny"), 13);
  EXPECT_EQ(j.at("dvx").at(17 * 2 + 5), 205.0);
  EXPECT_EQ(j.at("dvy").at(17 * 12 + 16), -1216.0);
  EXPECT_EQ(io::field_from_json(j), f);
}

TEST(Fields, CsvRowsCarryCoordinates) {
  RoiConfig roi;
  FieldTensor f(13, 17, 3);
  f.at(6, 8, 0) = 1.5;
  std::stringstream ss;
  io::write_field_csv_header(ss);
  io::write_field_csv_rows(ss, f, roi);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "frame,row,col,x,y,dvx,dvy");
  int rows = 0;
  bool seen = false;
  while (std::getline(ss, line)) {
    ++rows;
    if (line == "3,6,8,0,0,1.5,0") seen = true;
  }
  EXPECT_EQ(rows, 13 * 17);
  EXPECT_TRUE(seen);
}

TEST(Fields, JsonlRoundTripAndShapeCheck) {
  RoiConfig roi;
  FieldTensor f(13, 17, 1);
  f.values()[10] = std::nextafter(0.3, 1.0);
  std::stringstream ss;
  io::write_fields_jsonl(ss, {{5, f}, {6, f}}, roi);
  const auto back = io::read_fields_jsonl(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].sequence, 6);
  EXPECT_EQ(back[0].field, f);
  auto j = io::field_json(f, roi);
  j["dvx"].erase(0);
  EXPECT_THROW(io::field_from_json(j), ShapeError);
}

// ------------------------------------------------------- features, labels

TEST(Features, CsvRoundTripIsExact) {
  io::FeatureTable t;
  t.sequence = {1, 1, 2};
  t.frame = {0, 1, 0};
  t.region = {Region::Pre, Region::LaneChange, Region::Post};
  t.values = Eigen::MatrixXd::Random(3, 12) * 1e3;
  t.values(1, 4) = 1e-310;
  std::stringstream ss;
  io::write_features_csv(ss, t);
  const auto back = io::read_features_csv(ss);
  EXPECT_EQ(back.sequence, t.sequence);
  EXPECT_EQ(back.frame, t.frame);
  EXPECT_EQ(back.region, t.region);
  EXPECT_EQ(back.values, t.values);
  const auto seqs = io::split_sequences(back);
  ASSERT_EQ(seqs.size(), 2u);
  EXPECT_EQ(seqs[0].rows(), 2);
  EXPECT_EQ(seqs[1].rows(), 1);
}

TEST(Features, BadInput) {
  std::stringstream wrong("sequence,frame,vx\n");
  EXPECT_THROW(io::read_features_csv(wrong), MissingColumn);
  std::stringstream ss;
  io::FeatureTable t{{1}, {0}, {Region::Pre}, Eigen::MatrixXd::Zero(1, 12)};
  io::write_features_csv(ss, t);
  auto text = ss.str();
  text.replace(text.rfind(",0"), 2, ",x");
  std::stringstream broken(text);
  EXPECT_THROW(io::read_features_csv(broken), ParseError);
}

TEST(Labels, CsvRoundTripAndSplit) {
  io::LabelTable t{{3, 3, 3, 8, 8}, {0, 1, 2, 0, 1}, {1, 1, 2, 2, 1}};
  std::stringstream ss;
  io::write_labels_csv(ss, t);
  EXPECT_EQ(ss.str().substr(0, 21), "sequence,frame,label\n");
  const auto back = io::read_labels_csv(ss);
  EXPECT_EQ(back.label, t.label);
  EXPECT_EQ(io::split_labels(back), (LabelSet{{1, 1, 2}, {2, 1}}));
}

// ------------------------------------------------------------------ chain

TEST(Chain, SummaryFollowsPatternOrder) {
  FitResult r;
  r.hyper.L = 3;
  r.state.beta = Eigen::Vector3d(0.2, 0.5, 0.3);
  r.state.pi = (Eigen::MatrixXd(3, 3) << 0.9, 0.1, 0.0, 0.2, 0.7, 0.1, 0.0, 0.0, 1.0).finished();
  r.state.z = {{1, 1, 1, 0}};
  r.loglik_history = {-5.0, -4.0};
  r.effective_history = {2, 2};
  r.effective_states = 2;
  codec::Standardization s{Eigen::RowVectorXd::Zero(12), Eigen::RowVectorXd::Ones(12)};
  const auto j = io::chain_summary_json(r, {1, 0}, s);
  EXPECT_EQ(j.at("sampler_state"), json({1, 0, 2}));
  EXPECT_EQ(j.at("beta"), json({0.5, 0.2, 0.3}));
  EXPECT_EQ(j.at("occupancy"), json({3, 1, 0}));
  EXPECT_EQ(j.at("pi").at("data").at(0), json({0.7, 0.2, 0.1}));
  EXPECT_EQ(j.at("pi").at("rows").at(0), "pattern_1");
  EXPECT_EQ(j.at("iterations").size(), 2u);
  EXPECT_EQ(j.at("iterations").at(1).at("loglik"), -4.0);
}

// ----------------------------------------------------------------- config

TEST(Config, DefaultsValidate) {
  const auto c = load_config(json::object());
  EXPECT_EQ(c.bnp.hyper.L, 25);
  EXPECT_EQ(c.bnp.hyper.rho, 0.9);
  EXPECT_EQ(c.codec.train.batch_size, 128);
  EXPECT_EQ(c.codec.encoder, "linear");
  EXPECT_EQ(c.roi.nx(), 17u);
  EXPECT_EQ(c.bnp.hyper.S0, Eigen::MatrixXd::Identity(12, 12));
  EXPECT_EQ(config_json(c), config_json(load_config(config_json(c))));
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(load_config(json{{"bnpp", json::object()}}), UsageError);
  EXPECT_THROW(load_config(json{{"bnp", {{"Lx", 3}}}}), UsageError);
  EXPECT_THROW(load_config(json::object(), {"bnp.Lx=3"}), UsageError);
  EXPECT_THROW(load_config(json::object(), {"bnp=3"}), UsageError);
  EXPECT_THROW(load_config(json::object(), {"nonsense"}), UsageError);
}

TEST(Config, OverridesApplyInOrder) {
  const auto c = load_config(json{{"bnp", {{"L", 10}}}}, {"bnp.L=30", "codec.encoder=cae", "seed=11",
                                                           "analysis.fractions=[0.5,1.0]", "roi.dx=2.5"});
  EXPECT_EQ(c.bnp.hyper.L, 30);
  EXPECT_EQ(c.codec.encoder, "cae");
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.codec.train.seed, 11u);
  EXPECT_EQ(c.analysis.fractions, (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(c.roi.dx, 2.5);
  EXPECT_EQ(load_config(json::object(), {"bnp.L=12", "bnp.L=14"}).bnp.hyper.L, 14);
}

TEST(Config, InvalidValuesAreConfigErrors) {
  EXPECT_THROW(load_config(json::object(), {"bnp.L=abc"}), ConfigError);
  EXPECT_THROW(load_config(json::object(), {"bnp.rho=1.0"}), ConfigError);
  EXPECT_THROW(load_config(json::object(), {"codec.encoder=pca"}), ConfigError);
  EXPECT_THROW(load_config(json::object(), {"analysis.regions=[\"MIDDLE\"]"}), ConfigError);
  EXPECT_THROW(load_config(json::object(), {"roi.dx=3"}), InvalidArgument);
  EXPECT_THROW(load_config(json::object(), {"ingest.target_rate_hz=7"}), RateMismatch);
}

TEST(Config, PathsResolveAgainstDir) {
  const auto c = load_config(json{{"io", {{"dir", "/tmp/x"}, {"labels", "sub/l.csv"}, {"chain", "/abs/c.json"}}}});
  EXPECT_EQ(c.io.resolve(c.io.labels), "/tmp/x/sub/l.csv");
  EXPECT_EQ(c.io.resolve(c.io.chain), "/abs/c.json");
}
