#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "lanescope/codec/cae.hpp"
#include "lanescope/codec/checkpoint.hpp"
#include "lanescope/codec/features.hpp"
#include "lanescope/codec/linear.hpp"
#include "lanescope/codec/nadam.hpp"
#include "lanescope/codec/train.hpp"

using namespace lanescope;
using namespace lanescope::codec;

namespace {

std::vector<FieldTensor> random_fields(std::size_t n, std::uint64_t seed, double amplitude = 0.8) {
  Rng rng(seed);
  std::vector<FieldTensor> out;
  for (std::size_t i = 0; i < n; ++i) {
    FieldTensor f;
    for (double& v : f.values()) v = uniform(rng, -amplitude, amplitude);
    f.set_frame(static_cast<std::int64_t>(i));
    out.push_back(std::move(f));
  }
  return out;
}

// Flat views of every parameter, for perturbation.
template <typename Scalar>
std::vector<Scalar*> parameter_slots(Autoencoder<Scalar>& m) {
  std::vector<Scalar*> slots;
  for (auto& l : m.layers()) {
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) slots.push_back(l.weights.data() + i);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) slots.push_back(l.bias.data() + i);
  }
  return slots;
}

template <typename Scalar>
std::vector<Scalar> flat_gradients(const Gradients<Scalar>& g) {
  std::vector<Scalar> out;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    out.insert(out.end(), g.weights[l].data(), g.weights[l].data() + g.weights[l].size());
    out.insert(out.end(), g.bias[l].data(), g.bias[l].data() + g.bias[l].size());
  }
  return out;
}

// Max relative error of analytic vs central-difference gradients over
// `samples` random parameters.
double gradient_check(Autoencoder<double> model, const std::vector<FieldTensor>& batch, int samples,
                      std::uint64_t seed) {
  const auto analytic = flat_gradients(cae_gradients(model, std::span<const FieldTensor>(batch)));
  auto slots = parameter_slots(model);
  const auto input = pack_fields<double>(batch, model.input_scale());
  const int b = static_cast<int>(batch.size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, slots.size() - 1);
  const double h = 1e-5;
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const std::size_t k = pick(rng);
    const double saved = *slots[k];
    *slots[k] = saved + h;
    const double up = model.loss(input, b);
    *slots[k] = saved - h;
    const double down = model.loss(input, b);
    *slots[k] = saved;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic[k]), 1e-7});
    worst = std::max(worst, std::abs(fd - analytic[k]) / denom);
  }
  return worst;
}

}  // namespace

TEST(CaeArchitecture, LayerShapesChain) {
  const auto specs = autoencoder_architecture();
  ASSERT_EQ(specs.size(), 9u);
  const Shape expected[] = {{13, 17, 2}, {9, 13, 32}, {5, 9, 32}, {1, 5, 32}, {1, 1, 8},
                            {1, 5, 32},  {5, 9, 32},  {9, 13, 32}, {13, 17, 32}, {13, 17, 2}};
  for (std::size_t l = 0; l < specs.size(); ++l) {
    EXPECT_EQ(specs[l].input, expected[l]) << "layer " << l;
    EXPECT_EQ(specs[l].output, expected[l + 1]) << "layer " << l;
    EXPECT_EQ(specs[l].expected_output(), specs[l].output) << "layer " << l;
  }
  EXPECT_EQ(specs[kLatentLayer].output.size(), 8);
}

TEST(CaeArchitecture, ParameterCountMatchesLayerTable) {
  // (kernel h, kernel w, in channels, out channels) per layer.
  const int table[][4] = {{5, 5, 2, 32}, {5, 5, 32, 32}, {5, 5, 32, 32}, {1, 5, 32, 8},  {1, 5, 8, 32},
                          {5, 5, 32, 32}, {5, 5, 32, 32}, {5, 5, 32, 32}, {3, 3, 32, 2}};
  std::size_t closed_form = 0;
  for (const auto& r : table) closed_form += static_cast<std::size_t>(r[0] * r[1] * r[2] * r[3] + r[3]);
  EXPECT_EQ(closed_form, 132970u);
  EXPECT_EQ(Autoencoder<double>::initialized(0).parameter_count(), closed_form);
}

TEST(CaeArchitecture, BrokenChainIsShapeError) {
  auto specs = autoencoder_architecture();
  specs[1].output = {5, 8, 32};
  EXPECT_THROW(Autoencoder<double>{specs}, ShapeError);
  specs = autoencoder_architecture();
  specs[2].input = {9, 13, 32};
  EXPECT_THROW(Autoencoder<double>{specs}, ShapeError);
}

TEST(CaeInit, DeterministicPerSeedWithinGlorotBounds) {
  auto a = Autoencoder<double>::initialized(11);
  auto b = Autoencoder<double>::initialized(11);
  auto c = Autoencoder<double>::initialized(12);
  bool differs = false;
  for (std::size_t l = 0; l < a.layers().size(); ++l) {
    EXPECT_EQ(a.layers()[l].weights, b.layers()[l].weights);
    differs = differs || a.layers()[l].weights != c.layers()[l].weights;
    const auto& s = a.layers()[l].spec;
    const double limit = std::sqrt(6.0 / (s.fan_in() + s.fan_out()));
    EXPECT_LE(a.layers()[l].weights.cwiseAbs().maxCoeff(), limit);
    EXPECT_GT(a.layers()[l].weights.cwiseAbs().maxCoeff(), 0.9 * limit);
    EXPECT_TRUE(a.layers()[l].bias.isZero(0.0));
  }
  EXPECT_TRUE(differs);
}

TEST(CaeForward, ShapesAndTanhRange) {
  auto model = Autoencoder<double>::initialized(3);
  auto batch = random_fields(5, 1);
  auto input = pack_fields<double>(batch);
  auto trace = model.forward(input, 5);
  ASSERT_EQ(trace.activations.size(), 10u);
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& s = model.layers()[l].spec.output;
    EXPECT_EQ(trace.activations[l + 1].rows(), s.channels);
    EXPECT_EQ(trace.activations[l + 1].cols(), 5 * s.spatial());
    EXPECT_LT(trace.activations[l + 1].cwiseAbs().maxCoeff(), 1.0);
  }
  auto r = cae_forward(model, std::span<const FieldTensor>(batch));
  EXPECT_EQ(r.latents.rows(), 5);
  EXPECT_EQ(r.latents.cols(), 8);
  ASSERT_EQ(r.reconstructions.size(), 5u);
  EXPECT_EQ(r.reconstructions[3].frame(), 3);
}

TEST(CaeForward, ZeroModelGivesZeroOutputs) {
  Autoencoder<double> model;  // zero weights and biases
  auto batch = random_fields(3, 2);
  auto r = cae_forward(model, std::span<const FieldTensor>(batch));
  EXPECT_TRUE(r.latents.isZero(0.0));
  for (const auto& f : r.reconstructions)
    for (double v : f.values()) EXPECT_EQ(v, 0.0);
}

TEST(CaeForward, WrongShapeIsShapeError) {
  auto model = Autoencoder<double>::initialized(0);
  std::vector<FieldTensor> bad{FieldTensor(12, 17)};
  EXPECT_THROW(cae_forward(model, std::span<const FieldTensor>(bad)), ShapeError);
  EXPECT_THROW(cae_gradients(model, std::span<const FieldTensor>(bad)), ShapeError);
  Matrix<double> wrong = Matrix<double>::Zero(2, 100);
  EXPECT_THROW(model.forward(wrong, 1), ShapeError);
}

TEST(CaeForward, EncodeIsPureAndMatchesForward) {
  auto model = Autoencoder<double>::initialized(5);
  auto fields = random_fields(7, 4);
  std::span<const FieldTensor> view(fields);
  auto a = cae_encode(model, view);
  EXPECT_EQ(a, cae_encode(model, view));
  EXPECT_EQ(a, cae_forward(model, view).latents);
  // Chunking changes GEMM blocking, so only rounding-level agreement.
  EXPECT_LT((cae_encode(model, view, 3) - a).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CaeGradients, MatchCentralDifferencesAtInit) {
  auto model = Autoencoder<double>::initialized(21);
  auto batch = random_fields(2, 9);
  EXPECT_LT(gradient_check(model, batch, 200, 77), 1e-4);
}

TEST(CaeGradients, MatchCentralDifferencesAfterTraining) {
  auto data = random_fields(8, 10);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_iterations = 150;
  cfg.input_scale = 1.0;
  auto trained = cae_train(Autoencoder<double>::initialized(22), std::span<const FieldTensor>(data), cfg);
  auto batch = random_fields(2, 11);
  EXPECT_LT(gradient_check(trained.model, batch, 200, 78), 1e-4);
}

TEST(CaeGradients, ZeroInputGivesZeroFirstLayerWeightGradient) {
  auto model = Autoencoder<double>::initialized(6);
  std::vector<FieldTensor> batch(2);  // all-zero fields
  auto g = cae_gradients(model, std::span<const FieldTensor>(batch));
  EXPECT_TRUE(g.weights[0].isZero(0.0));
}

TEST(CaeGradients, DuplicatedSampleMatchesSingle) {
  auto model = Autoencoder<double>::initialized(8);
  auto one = random_fields(1, 12);
  std::vector<FieldTensor> two{one[0], one[0]};
  auto a = flat_gradients(cae_gradients(model, std::span<const FieldTensor>(one)));
  auto b = flat_gradients(cae_gradients(model, std::span<const FieldTensor>(two)));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12 + 1e-10 * std::abs(a[i]));
}

TEST(Nadam, StepMatchesClosedFormOnFirstIteration) {
  // With m = v = 0 and t = 1: m_hat = g, v_hat = g^2, so the update is
  // lr * (b1 g + g) / (|g| + eps).
  auto model = Autoencoder<double>::initialized(1);
  auto before = model;
  auto grads = model.zero_gradients();
  grads.weights[0](0, 0) = 0.5;
  grads.weights[0](1, 0) = -2.0;
  NadamConfig cfg;
  Nadam<double> opt(model, cfg);
  opt.step(model, grads);
  const double lr = cfg.learning_rate, eps = cfg.epsilon;
  EXPECT_NEAR(model.layers()[0].weights(0, 0), before.layers()[0].weights(0, 0) - lr * 1.9 * 0.5 / (0.5 + eps), 1e-15);
  EXPECT_NEAR(model.layers()[0].weights(1, 0), before.layers()[0].weights(1, 0) + lr * 1.9 * 2.0 / (2.0 + eps), 1e-15);
  EXPECT_EQ(model.layers()[0].weights(2, 0), before.layers()[0].weights(2, 0));
}

TEST(Nadam, SecondStepFollowsRecurrence) {
  auto model = Autoencoder<double>::initialized(1);
  const double w0 = model.layers()[1].bias[0];
  auto grads = model.zero_gradients();
  NadamConfig cfg;
  Nadam<double> opt(model, cfg);
  const double g1 = 0.3, g2 = -0.1;
  grads.bias[1][0] = g1;
  opt.step(model, grads);
  grads.bias[1][0] = g2;
  opt.step(model, grads);

  const double b1 = cfg.beta1, b2 = cfg.beta2, lr = cfg.learning_rate, eps = cfg.epsilon;
  double m = 0, v = 0, w = w0;
  int t = 0;
  for (double g : {g1, g2}) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    w -= lr * (b1 * mh + (1 - b1) / (1 - std::pow(b1, t)) * g) / (std::sqrt(vh) + eps);
  }
  EXPECT_NEAR(model.layers()[1].bias[0], w, 1e-15);
}

TEST(CaeTrain, ZeroLearningRateLeavesParametersUnchanged) {
  auto data = random_fields(6, 13);
  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.max_iterations = 5;
  cfg.nadam.learning_rate = 0.0;
  cfg.input_scale = 1.0;
  auto init = Autoencoder<double>::initialized(4);
  auto r = cae_train(init, std::span<const FieldTensor>(data), cfg);
  for (std::size_t l = 0; l < init.layers().size(); ++l) {
    EXPECT_EQ(r.model.layers()[l].weights, init.layers()[l].weights);
    EXPECT_EQ(r.model.layers()[l].bias, init.layers()[l].bias);
  }
  ASSERT_EQ(r.loss_history.size(), 5u);
  // Each batch is the whole (reshuffled) dataset; only summation order varies.
  for (double l : r.loss_history) EXPECT_NEAR(l, r.loss_history.front(), 1e-14);
}

TEST(CaeTrain, DeterministicLossHistory) {
  auto data = random_fields(20, 14);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_iterations = 10;
  cfg.seed = 99;
  auto a = cae_train(Autoencoder<float>::initialized(4), std::span<const FieldTensor>(data), cfg);
  auto b = cae_train(Autoencoder<float>::initialized(4), std::span<const FieldTensor>(data), cfg);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.model.iterations(), 10);
  cfg.seed = 100;
  auto c = cae_train(Autoencoder<float>::initialized(4), std::span<const FieldTensor>(data), cfg);
  EXPECT_NE(a.loss_history, c.loss_history);
}

TEST(CaeTrain, MemorizesASingleSample) {
  auto data = random_fields(1, 15, 0.5);
  TrainConfig cfg;
  cfg.max_iterations = 500;
  cfg.input_scale = 1.0;
  auto r = cae_train(Autoencoder<double>::initialized(2), std::span<const FieldTensor>(data), cfg);
  EXPECT_LT(dataset_mse(r.model, std::span<const FieldTensor>(data)), 1e-4);
}

TEST(CaeTrain, AutoScaleUsesLargestMagnitude) {
  auto data = random_fields(3, 16);
  data[1].values()[7] = -4.5;
  TrainConfig cfg;
  cfg.max_iterations = 1;
  auto r = cae_train(Autoencoder<float>::initialized(2), std::span<const FieldTensor>(data), cfg);
  EXPECT_EQ(r.model.input_scale(), 4.5);
}

TEST(CaeTrain, EmptyDatasetAndBadConfig) {
  std::vector<FieldTensor> none;
  TrainConfig cfg;
  EXPECT_THROW(cae_train(Autoencoder<float>::initialized(0), std::span<const FieldTensor>(none), cfg), EmptyDataset);
  auto data = random_fields(2, 1);
  cfg.nadam.beta1 = 1.0;
  EXPECT_THROW(cae_train(Autoencoder<float>::initialized(0), std::span<const FieldTensor>(data), cfg),
               InvalidArgument);
}

TEST(CaeTrain, WindowMeans) {
  std::vector<double> h{1, 3, 5, 7, 9};
  EXPECT_EQ(window_means(h, 2), (std::vector<double>{2, 6}));
  EXPECT_TRUE(window_means(h, 6).empty());
}

TEST(Checkpoint, Base64KnownVectors) {
  auto bytes = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
  EXPECT_EQ(detail::base64_encode(bytes("")), "");
  EXPECT_EQ(detail::base64_encode(bytes("f")), "Zg==");
  EXPECT_EQ(detail::base64_encode(bytes("fo")), "Zm8=");
  EXPECT_EQ(detail::base64_encode(bytes("foobar")), "Zm9vYmFy");
  EXPECT_EQ(detail::base64_decode("Zm9vYg=="), bytes("foob"));
  EXPECT_THROW(detail::base64_decode("Zm9"), ParseError);
  EXPECT_THROW(detail::base64_decode("Zm=v"), ParseError);
  // 1.0 = 0x3FF0000000000000, little-endian bytes 00 00 00 00 00 00 F0 3F
  EXPECT_EQ(detail::encode_doubles({1.0}), "AAAAAAAA8D8=");
  EXPECT_EQ(detail::decode_doubles("AAAAAAAA8D8=", 1), std::vector<double>{1.0});
}

TEST(Checkpoint, RoundTripIsExact) {
  TrainConfig cfg;
  cfg.max_iterations = 3;
  cfg.batch_size = 4;
  cfg.input_scale = 2.5;
  auto data = random_fields(4, 17);
  auto trained = cae_train(Autoencoder<double>::initialized(31), std::span<const FieldTensor>(data), cfg).model;
  auto doc = checkpoint_json(trained);
  EXPECT_EQ(doc["seed"], 31);
  EXPECT_EQ(doc["iterations"], 3);
  auto back = checkpoint_from_json<double>(nlohmann::json::parse(doc.dump()));
  for (std::size_t l = 0; l < trained.layers().size(); ++l) {
    EXPECT_EQ(back.layers()[l].weights, trained.layers()[l].weights);
    EXPECT_EQ(back.layers()[l].bias, trained.layers()[l].bias);
  }
  EXPECT_EQ(back.input_scale(), 2.5);
  EXPECT_EQ(back.iterations(), 3);

  doc["layers"][2]["weights"] = "AAAA";
  EXPECT_THROW(checkpoint_from_json<double>(doc), ParseError);
  auto broken = checkpoint_json(trained);
  broken["layers"][4]["output"] = {1, 6, 32};
  EXPECT_THROW(checkpoint_from_json<double>(broken), ShapeError);
  EXPECT_THROW(load_checkpoint<double>("/nonexistent/model.json"), PathNotFound);
}

TEST(LinearFallback, IdenticalFieldsAreRankDeficient) {
  std::vector<FieldTensor> same(20, random_fields(1, 3)[0]);
  EXPECT_THROW(linear_fallback_fit(std::span<const FieldTensor>(same)), RankDeficient);
  auto few = random_fields(5, 3);
  EXPECT_THROW(linear_fallback_fit(std::span<const FieldTensor>(few)), RankDeficient);
}

TEST(LinearFallback, ReconstructionErrorNonincreasingInK) {
  auto data = random_fields(60, 18);
  std::span<const FieldTensor> view(data);
  double prev = std::numeric_limits<double>::infinity();
  for (int k : {1, 2, 4, 8, 16, 32}) {
    auto p = linear_fallback_fit(view, k);
    double err = 0.0;
    for (const auto& f : data) {
      auto rec = linear_fallback_decode(p, linear_fallback_encode(p, f));
      err += (flatten(rec) - flatten(f)).squaredNorm();
    }
    EXPECT_LE(err, prev + 1e-9) << "k = " << k;
    prev = err;
  }
}

TEST(LinearFallback, FullBasisIsLossless) {
  auto data = random_fields(500, 19);
  auto p = linear_fallback_fit(std::span<const FieldTensor>(data), 442);
  for (std::size_t i = 0; i < 10; ++i) {
    auto rec = linear_fallback_decode(p, linear_fallback_encode(p, data[i]));
    EXPECT_LT((flatten(rec) - flatten(data[i])).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(LinearFallback, CodesAreCenteredAndJsonRoundTrips) {
  auto data = random_fields(40, 20);
  std::span<const FieldTensor> view(data);
  auto p = linear_fallback_fit(view);
  auto codes = linear_fallback_encode(p, view);
  EXPECT_EQ(codes.cols(), 8);
  EXPECT_LT(codes.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
  for (int c = 1; c < p.k(); ++c) EXPECT_GE(p.variances[c - 1], p.variances[c]);
  auto back = linear_projection_from_json(nlohmann::json::parse(linear_projection_json(p).dump()));
  EXPECT_EQ(linear_fallback_encode(back, view), codes);
}

TEST(Features, AssemblesEgoStateAndLatent) {
  std::vector<VehicleState> ego(100);
  for (std::size_t t = 0; t < ego.size(); ++t) {
    ego[t].vx = 30 + 0.1 * static_cast<double>(t);
    ego[t].vy = 0.01 * static_cast<double>(t);
    ego[t].ax = -0.5;
    ego[t].ay = std::sin(static_cast<double>(t));
  }
  Eigen::MatrixXd latents = Eigen::MatrixXd::Random(100, 8);
  auto f = build_features(ego, latents);
  ASSERT_EQ(f.rows(), 100);
  ASSERT_EQ(f.cols(), 12);
  EXPECT_EQ(f(10, 0), ego[10].vx);
  EXPECT_EQ(f(10, 3), ego[10].ay);
  EXPECT_EQ(f(10, 4), latents(10, 0));
  EXPECT_EQ(f(99, 11), latents(99, 7));

  auto s = standardize(f);
  const Eigen::RowVectorXd mean = s.features.colwise().mean();
  const Eigen::RowVectorXd var = (s.features.rowwise() - mean).array().square().colwise().mean();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index j = 0; j < 12; ++j) {
    if (j == 2) {
      EXPECT_EQ(s.transform.scale[j], 1.0);  // constant ax
      EXPECT_EQ(var[j], 0.0);
    } else {
      EXPECT_NEAR(var[j], 1.0, 1e-8);
    }
  }
  EXPECT_LT((s.transform.invert(s.features) - f).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Features, LengthMismatch) {
  std::vector<VehicleState> ego(100);
  EXPECT_THROW(build_features(ego, Eigen::MatrixXd::Zero(99, 8)), LengthMismatch);
  EXPECT_THROW(build_features(ego, Eigen::MatrixXd::Zero(100, 7)), ShapeError);
}
