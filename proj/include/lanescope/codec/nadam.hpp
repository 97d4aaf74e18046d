#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lanescope/codec/cae.hpp"

namespace lanescope::codec {

struct NadamConfig {
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/**
 * Nesterov-accelerated Adam.
 *
 *   m <- b1 m + (1 - b1) g,   v <- b2 v + (1 - b2) g^2
 *   m_hat = m / (1 - b1^t),   v_hat = v / (1 - b2^t)
 *   theta <- theta - lr (b1 m_hat + (1 - b1) / (1 - b1^t) g) / (sqrt(v_hat) + eps)
 */
template <typename Scalar>
class Nadam {
 public:
  Nadam(const Autoencoder<Scalar>& model, NadamConfig config)
      : config_(config), m_(model.zero_gradients()), v_(model.zero_gradients()) {}

  std::int64_t steps() const { return t_; }
  double learning_rate() const { return config_.learning_rate; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  void step(Autoencoder<Scalar>& model, const Gradients<Scalar>& grads) {
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      update(layers[l].weights, m_.weights[l], v_.weights[l], grads.weights[l], c1, c2);
      update(layers[l].bias, m_.bias[l], v_.bias[l], grads.bias[l], c1, c2);
    }
  }

 private:
  template <typename Param, typename Grad>
  void update(Param& theta, Param& m, Param& v, const Grad& g, double c1, double c2) const {
    const auto b1 = static_cast<Scalar>(config_.beta1), b2 = static_cast<Scalar>(config_.beta2);
    m = b1 * m + (Scalar(1) - b1) * g;
    v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
    const auto m_hat = m.array() / static_cast<Scalar>(c1);
    const auto v_hat = v.array() / static_cast<Scalar>(c2);
    const auto lookahead = b1 * m_hat + static_cast<Scalar>((1.0 - config_.beta1) / c1) * g.array();
    theta.array() -= static_cast<Scalar>(config_.learning_rate) * lookahead /
                     (v_hat.sqrt() + static_cast<Scalar>(config_.epsilon));
  }

  NadamConfig config_;
  Gradients<Scalar> m_;
  Gradients<Scalar> v_;
  std::int64_t t_ = 0;
};

}  // namespace lanescope::codec
