#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "lanescope/codec/cae.hpp"
#include "lanescope/codec/nadam.hpp"
#include "lanescope/errors.hpp"
#include "lanescope/random.hpp"

namespace lanescope::codec {

struct TrainConfig {
  int batch_size = 128;
  std::int64_t max_iterations = 5000;
  NadamConfig nadam;
  // Learning rate halves every lr_half_life iterations; 0 keeps it constant.
  double lr_half_life = 0.0;
  std::uint64_t seed = 0;
  // Fields are divided by this before training; <= 0 picks the largest
  // absolute value in the dataset.
  double input_scale = 0.0;

  void validate() const {
    if (batch_size <= 0 || max_iterations < 0) throw InvalidArgument("batch size and iterations must be positive");
    if (!(nadam.beta1 > 0 && nadam.beta1 < 1 && nadam.beta2 > 0 && nadam.beta2 < 1))
      throw InvalidArgument("Nadam betas must lie in (0, 1)");
    if (!(nadam.learning_rate >= 0 && nadam.epsilon > 0)) throw InvalidArgument("invalid Nadam step parameters");
    if (!(lr_half_life >= 0)) throw InvalidArgument("lr_half_life must be nonnegative");
  }
};

inline double max_abs_value(std::span<const FieldTensor> fields) {
  double m = 0.0;
  for (const auto& f : fields)
    for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

template <typename Scalar>
struct TrainResult {
  Autoencoder<Scalar> model;
  std::vector<double> loss_history;  // mean batch MSE per iteration, before the update
};

// Mini-batch Nadam on the reconstruction MSE. Batches walk a seeded
// permutation of the dataset that is reshuffled every epoch.
template <typename Scalar>
TrainResult<Scalar> cae_train(Autoencoder<Scalar> model, std::span<const FieldTensor> dataset, const TrainConfig& cfg,
                              const std::function<void(std::int64_t, double)>& progress = {}) {
  cfg.validate();
  if (dataset.empty()) throw EmptyDataset("no fields to train on");

  if (cfg.input_scale > 0.0) {
    model.set_input_scale(cfg.input_scale);
  } else if (model.iterations() == 0) {
    const double m = max_abs_value(dataset);
    model.set_input_scale(m > 0.0 ? m : 1.0);
  }

  const Matrix<Scalar> all = pack_fields<Scalar>(dataset, model.input_scale());
  const Eigen::Index spatial = kInputShape.spatial();
  const std::size_t n = dataset.size();
  const int batch = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n));

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  Nadam<Scalar> optimizer(model, cfg.nadam);
  auto grads = model.zero_gradients();
  TrainResult<Scalar> result{std::move(model), {}};
  result.loss_history.reserve(static_cast<std::size_t>(cfg.max_iterations));
  Matrix<Scalar> input(kInputShape.channels, batch * spatial);

  for (std::int64_t it = 0; it < cfg.max_iterations; ++it) {
    for (int b = 0; b < batch; ++b) {
      if (cursor == n) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      input.middleCols(b * spatial, spatial) = all.middleCols(static_cast<Eigen::Index>(order[cursor++]) * spatial, spatial);
    }
    auto trace = result.model.forward(input, batch);
    const double loss = static_cast<double>(result.model.backward(trace, input, grads));
    if (cfg.lr_half_life > 0)
      optimizer.set_learning_rate(cfg.nadam.learning_rate * std::exp2(-static_cast<double>(it) / cfg.lr_half_life));
    optimizer.step(result.model, grads);
    result.loss_history.push_back(loss);
    if (progress) progress(it, loss);
  }
  result.model.set_iterations(result.model.iterations() + cfg.max_iterations);
  return result;
}

// Reconstruction MSE over a whole dataset, in network units.
template <typename Scalar>
double dataset_mse(const Autoencoder<Scalar>& model, std::span<const FieldTensor> dataset, std::size_t chunk = 256) {
  double total = 0.0;
  for (std::size_t start = 0; start < dataset.size(); start += chunk) {
    const std::size_t n = std::min(chunk, dataset.size() - start);
    auto input = pack_fields<Scalar>(dataset.subspan(start, n), model.input_scale());
    total += static_cast<double>(model.loss(input, static_cast<int>(n))) * static_cast<double>(n);
  }
  return total / static_cast<double>(dataset.size());
}

// Means of consecutive non-overlapping windows of the loss history.
inline std::vector<double> window_means(const std::vector<double>& history, std::size_t window) {
  std::vector<double> out;
  for (std::size_t start = 0; start + window <= history.size(); start += window)
    out.push_back(std::accumulate(history.begin() + static_cast<std::ptrdiff_t>(start),
                                  history.begin() + static_cast<std::ptrdiff_t>(start + window), 0.0) /
                  static_cast<double>(window));
  return out;
}

}  // namespace lanescope::codec
