#pragma once

// Convolutional autoencoder over 13x17x2 velocity fields.
//
// Activations for a batch are stored as a (channels x batch*rows*cols) matrix,
// column index = (b * rows + i) * cols + j. Valid convolutions and stride-1
// transposed convolutions are both expressed through one gather (im2col) and
// one scatter (col2im) primitive, which are adjoint to each other.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lanescope/core.hpp"
#include "lanescope/errors.hpp"
#include "lanescope/random.hpp"

namespace lanescope::codec {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct Shape {
  int rows = 0, cols = 0, channels = 0;
  int spatial() const { return rows * cols; }
  int size() const { return rows * cols * channels; }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.rows) + "x" + std::to_string(s.cols) + "x" + std::to_string(s.channels);
}

enum class LayerKind { Conv, TransposedConv };

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  int kernel_rows = 1, kernel_cols = 1;
  int padding = 0;  // symmetric zero padding; 0 = "valid"
  Shape input, output;

  int in_channels() const { return input.channels; }
  int out_channels() const { return output.channels; }
  int kernel_area() const { return kernel_rows * kernel_cols; }
  // Weight matrix shape: conv (out x k*in), transposed conv (in x k*out).
  int weight_rows() const { return kind == LayerKind::Conv ? out_channels() : in_channels(); }
  int weight_cols() const { return kernel_area() * (kind == LayerKind::Conv ? in_channels() : out_channels()); }
  int parameter_count() const { return weight_rows() * weight_cols() + out_channels(); }
  int fan_in() const { return kernel_area() * in_channels(); }
  int fan_out() const { return kernel_area() * out_channels(); }

  Shape expected_output() const {
    if (kind == LayerKind::Conv)
      return {input.rows - kernel_rows + 1 + 2 * padding, input.cols - kernel_cols + 1 + 2 * padding, output.channels};
    return {input.rows + kernel_rows - 1 - 2 * padding, input.cols + kernel_cols - 1 - 2 * padding, output.channels};
  }
};

// 13x17x2 -> conv 5x5x32 -> conv 5x5x32 -> conv 5x5x32 -> conv 1x5x8 (latent)
// -> tconv 1x5x32 -> tconv 5x5x32 x3 -> tconv 3x3x2 ("same") -> 13x17x2
inline std::vector<LayerSpec> autoencoder_architecture() {
  using K = LayerKind;
  return {
      {K::Conv, 5, 5, 0, {13, 17, 2}, {9, 13, 32}},
      {K::Conv, 5, 5, 0, {9, 13, 32}, {5, 9, 32}},
      {K::Conv, 5, 5, 0, {5, 9, 32}, {1, 5, 32}},
      {K::Conv, 1, 5, 0, {1, 5, 32}, {1, 1, 8}},
      {K::TransposedConv, 1, 5, 0, {1, 1, 8}, {1, 5, 32}},
      {K::TransposedConv, 5, 5, 0, {1, 5, 32}, {5, 9, 32}},
      {K::TransposedConv, 5, 5, 0, {5, 9, 32}, {9, 13, 32}},
      {K::TransposedConv, 5, 5, 0, {9, 13, 32}, {13, 17, 32}},
      {K::TransposedConv, 3, 3, 1, {13, 17, 32}, {13, 17, 2}},
  };
}

inline constexpr std::size_t kLatentLayer = 3;  // output of this layer is the code
inline constexpr Shape kInputShape{13, 17, 2};

namespace detail {

template <typename Scalar>
using ConstBlock = Eigen::Ref<const Matrix<Scalar>>;
template <typename Scalar>
using Block = Eigen::Ref<Matrix<Scalar>>;

// cols[(u*kw + v)*C + c, (b*Hd + i)*Wd + j] = src[c, (b*Hs + i+u-off)*Ws + j+v-off]
// `cols` must be zero-initialised by the caller (out-of-range taps stay 0).
template <typename Scalar>
void gather(ConstBlock<Scalar> src, Block<Scalar> cols, int channels, int src_rows, int src_cols, int dst_rows,
            int dst_cols, int kernel_rows, int kernel_cols, int offset, int batch) {
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < dst_rows; ++i)
      for (int j = 0; j < dst_cols; ++j) {
        const Eigen::Index col = (static_cast<Eigen::Index>(b) * dst_rows + i) * dst_cols + j;
        Scalar* out = cols.col(col).data();
        for (int u = 0; u < kernel_rows; ++u) {
          const int si = i + u - offset;
          if (si < 0 || si >= src_rows) continue;
          for (int v = 0; v < kernel_cols; ++v) {
            const int sj = j + v - offset;
            if (sj < 0 || sj >= src_cols) continue;
            const Eigen::Index scol = (static_cast<Eigen::Index>(b) * src_rows + si) * src_cols + sj;
            const Scalar* in = src.col(scol).data();
            Scalar* dst = out + (u * kernel_cols + v) * channels;
            for (int c = 0; c < channels; ++c) dst[c] = in[c];
          }
        }
      }
}

// Adjoint of gather: dst[c, (b*Hd + i+u-off)*Wd + j+v-off] += cols[(u*kw+v)*C + c, (b*Hs + i)*Ws + j]
template <typename Scalar>
void scatter(ConstBlock<Scalar> cols, Block<Scalar> dst, int channels, int src_rows, int src_cols, int dst_rows,
             int dst_cols, int kernel_rows, int kernel_cols, int offset, int batch) {
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < src_rows; ++i)
      for (int j = 0; j < src_cols; ++j) {
        const Eigen::Index col = (static_cast<Eigen::Index>(b) * src_rows + i) * src_cols + j;
        const Scalar* in = cols.col(col).data();
        for (int u = 0; u < kernel_rows; ++u) {
          const int di = i + u - offset;
          if (di < 0 || di >= dst_rows) continue;
          for (int v = 0; v < kernel_cols; ++v) {
            const int dj = j + v - offset;
            if (dj < 0 || dj >= dst_cols) continue;
            const Eigen::Index dcol = (static_cast<Eigen::Index>(b) * dst_rows + di) * dst_cols + dj;
            Scalar* out = dst.col(dcol).data();
            const Scalar* src = in + (u * kernel_cols + v) * channels;
            for (int c = 0; c < channels; ++c) out[c] += src[c];
          }
        }
      }
}

// Samples per chunk so the unfolded (im2col) block stays cache-sized.
inline int chunk_samples(const LayerSpec& s, int batch) {
  const int spatial = std::max(s.input.spatial(), s.output.spatial());
  const long per_sample = static_cast<long>(s.weight_cols()) * spatial;
  const long target = 1L << 18;  // elements
  return std::clamp(static_cast<int>(target / std::max(1L, per_sample)), 1, batch);
}

}  // namespace detail

template <typename Scalar>
struct Layer {
  LayerSpec spec;
  Matrix<Scalar> weights;
  Vector<Scalar> bias;
};

template <typename Scalar>
struct Gradients {
  std::vector<Matrix<Scalar>> weights;
  std::vector<Vector<Scalar>> bias;
};

template <typename Scalar>
class Autoencoder {
 public:
  Autoencoder() : Autoencoder(autoencoder_architecture()) {}

  explicit Autoencoder(std::vector<LayerSpec> specs) {
    for (std::size_t l = 0; l < specs.size(); ++l) {
      const auto& s = specs[l];
      if (!(s.expected_output() == s.output))
        throw ShapeError("layer " + std::to_string(l) + " maps " + to_string(s.input) + " to " +
                         to_string(s.expected_output()) + ", declared " + to_string(s.output));
      if (l > 0 && !(specs[l - 1].output == s.input))
        throw ShapeError("layer " + std::to_string(l) + " input does not chain from layer " + std::to_string(l - 1));
      Layer<Scalar> layer;
      layer.spec = s;
      layer.weights = Matrix<Scalar>::Zero(s.weight_rows(), s.weight_cols());
      layer.bias = Vector<Scalar>::Zero(s.out_channels());
      layers_.push_back(std::move(layer));
    }
  }

  // Uniform in +-sqrt(6 / (fan_in + fan_out)); zero biases.
  static Autoencoder initialized(std::uint64_t seed) {
    Autoencoder model;
    model.seed_ = seed;
    Rng rng(seed);
    for (auto& layer : model.layers_) {
      const double limit = std::sqrt(6.0 / (layer.spec.fan_in() + layer.spec.fan_out()));
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j)
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
          layer.weights(i, j) = static_cast<Scalar>(uniform(rng, -limit, limit));
    }
    return model;
  }

  std::vector<Layer<Scalar>>& layers() { return layers_; }
  const std::vector<Layer<Scalar>>& layers() const { return layers_; }
  const Shape& input_shape() const { return layers_.front().spec.input; }
  const Shape& output_shape() const { return layers_.back().spec.output; }
  int latent_dim() const { return layers_[kLatentLayer].spec.output.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.spec.parameter_count());
    return n;
  }

  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t s) { seed_ = s; }
  std::int64_t iterations() const { return iterations_; }
  void set_iterations(std::int64_t n) { iterations_ = n; }
  // Fields are divided by this before entering the network.
  double input_scale() const { return input_scale_; }
  void set_input_scale(double s) { input_scale_ = s; }

  template <typename Other>
  Autoencoder<Other> cast() const {
    Autoencoder<Other> out;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      out.layers()[l].weights = layers_[l].weights.template cast<Other>();
      out.layers()[l].bias = layers_[l].bias.template cast<Other>();
    }
    out.set_seed(seed_);
    out.set_iterations(iterations_);
    out.set_input_scale(input_scale_);
    return out;
  }

  Gradients<Scalar> zero_gradients() const {
    Gradients<Scalar> g;
    for (const auto& l : layers_) {
      g.weights.push_back(Matrix<Scalar>::Zero(l.weights.rows(), l.weights.cols()));
      g.bias.push_back(Vector<Scalar>::Zero(l.bias.size()));
    }
    return g;
  }

  // Activations of every layer for a (channels x batch*spatial) input.
  struct Trace {
    int batch = 0;
    std::vector<Matrix<Scalar>> activations;  // [0] = input, [l+1] = output of layer l

    const Matrix<Scalar>& latent() const { return activations[kLatentLayer + 1]; }
    const Matrix<Scalar>& output() const { return activations.back(); }
  };

  Trace forward(const Matrix<Scalar>& input, int batch) const {
    check_input(input, batch);
    Trace trace;
    trace.batch = batch;
    trace.activations.reserve(layers_.size() + 1);
    trace.activations.push_back(input);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      trace.activations.push_back(apply(layers_[l], trace.activations.back(), batch));
      const Shape& s = layers_[l].spec.output;
      if (trace.activations.back().rows() != s.channels ||
          trace.activations.back().cols() != static_cast<Eigen::Index>(batch) * s.spatial())
        throw ShapeError("layer " + std::to_string(l) + " produced an unexpected shape");
    }
    return trace;
  }

  // Mean squared reconstruction error over all elements of the batch.
  Scalar loss(const Matrix<Scalar>& input, int batch) const {
    auto trace = forward(input, batch);
    return (trace.output() - input).squaredNorm() / static_cast<Scalar>(input.size());
  }

  // Gradient of the mean squared reconstruction error; returns the loss.
  Scalar backward(const Trace& trace, const Matrix<Scalar>& target, Gradients<Scalar>& grads) const {
    const int batch = trace.batch;
    const Scalar n = static_cast<Scalar>(target.size());
    Matrix<Scalar> diff = trace.output() - target;
    const Scalar mse = diff.squaredNorm() / n;
    Matrix<Scalar> grad_out = (Scalar(2) / n) * diff;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& layer = layers_[l];
      const auto& s = layer.spec;
      const Matrix<Scalar>& out = trace.activations[l + 1];
      const Matrix<Scalar>& in = trace.activations[l];
      Matrix<Scalar> grad_pre = grad_out.array() * (Scalar(1) - out.array().square());
      grads.bias[l] = grad_pre.rowwise().sum();
      grads.weights[l].setZero();
      Matrix<Scalar> grad_in;
      if (l > 0) grad_in = Matrix<Scalar>::Zero(s.in_channels(), in.cols());
      const Eigen::Index in_sp = s.input.spatial(), out_sp = s.output.spatial();
      const int chunk = detail::chunk_samples(s, batch);
      Matrix<Scalar> cols;
      for (int b0 = 0; b0 < batch; b0 += chunk) {
        const int nb = std::min(chunk, batch - b0);
        auto in_blk = in.middleCols(b0 * in_sp, nb * in_sp);
        auto gpre_blk = grad_pre.middleCols(b0 * out_sp, nb * out_sp);
        if (s.kind == LayerKind::Conv) {
          cols.setZero(s.weight_cols(), nb * out_sp);
          detail::gather<Scalar>(in_blk, cols, s.in_channels(), s.input.rows, s.input.cols, s.output.rows,
                                 s.output.cols, s.kernel_rows, s.kernel_cols, s.padding, nb);
          grads.weights[l].noalias() += gpre_blk * cols.transpose();
          if (l > 0) {
            cols.noalias() = layer.weights.transpose() * gpre_blk;
            detail::scatter<Scalar>(cols, grad_in.middleCols(b0 * in_sp, nb * in_sp), s.in_channels(),
                                    s.output.rows, s.output.cols, s.input.rows, s.input.cols, s.kernel_rows,
                                    s.kernel_cols, s.padding, nb);
          }
        } else {
          cols.setZero(s.weight_cols(), nb * in_sp);
          detail::gather<Scalar>(gpre_blk, cols, s.out_channels(), s.output.rows, s.output.cols, s.input.rows,
                                 s.input.cols, s.kernel_rows, s.kernel_cols, s.padding, nb);
          grads.weights[l].noalias() += in_blk * cols.transpose();
          if (l > 0) grad_in.middleCols(b0 * in_sp, nb * in_sp).noalias() = layer.weights * cols;
        }
      }
      if (l > 0) grad_out = std::move(grad_in);
    }
    return mse;
  }

 private:
  void check_input(const Matrix<Scalar>& input, int batch) const {
    const Shape& s = input_shape();
    if (batch <= 0 || input.rows() != s.channels || input.cols() != static_cast<Eigen::Index>(batch) * s.spatial())
      throw ShapeError("expected input of shape " + to_string(s) + " per sample");
  }

  static Matrix<Scalar> apply(const Layer<Scalar>& layer, const Matrix<Scalar>& in, int batch) {
    const auto& s = layer.spec;
    const Eigen::Index in_sp = s.input.spatial(), out_sp = s.output.spatial();
    Matrix<Scalar> pre = Matrix<Scalar>::Zero(s.out_channels(), batch * out_sp);
    const int chunk = detail::chunk_samples(s, batch);
    Matrix<Scalar> cols;
    for (int b0 = 0; b0 < batch; b0 += chunk) {
      const int nb = std::min(chunk, batch - b0);
      auto in_blk = in.middleCols(b0 * in_sp, nb * in_sp);
      if (s.kind == LayerKind::Conv) {
        cols.setZero(s.weight_cols(), nb * out_sp);
        detail::gather<Scalar>(in_blk, cols, s.in_channels(), s.input.rows, s.input.cols, s.output.rows,
                               s.output.cols, s.kernel_rows, s.kernel_cols, s.padding, nb);
        pre.middleCols(b0 * out_sp, nb * out_sp).noalias() = layer.weights * cols;
      } else {
        cols.noalias() = layer.weights.transpose() * in_blk;
        detail::scatter<Scalar>(cols, pre.middleCols(b0 * out_sp, nb * out_sp), s.out_channels(), s.input.rows,
                                s.input.cols, s.output.rows, s.output.cols, s.kernel_rows, s.kernel_cols,
                                s.padding, nb);
      }
    }
    pre.colwise() += layer.bias;
    return pre.array().tanh().matrix();
  }

  std::vector<Layer<Scalar>> layers_;
  std::uint64_t seed_ = 0;
  std::int64_t iterations_ = 0;
  double input_scale_ = 1.0;
};

// Packs fields into the network layout, dividing by `scale`.
template <typename Scalar>
Matrix<Scalar> pack_fields(std::span<const FieldTensor> fields, double scale = 1.0) {
  const auto spatial = static_cast<Eigen::Index>(kInputShape.spatial());
  Matrix<Scalar> m(kInputShape.channels, static_cast<Eigen::Index>(fields.size()) * spatial);
  for (std::size_t b = 0; b < fields.size(); ++b) {
    const auto& f = fields[b];
    if (f.rows() != static_cast<std::size_t>(kInputShape.rows) || f.cols() != static_cast<std::size_t>(kInputShape.cols))
      throw ShapeError("field " + std::to_string(b) + " has shape " + std::to_string(f.rows()) + "x" +
                       std::to_string(f.cols()) + "x2, expected " + to_string(kInputShape));
    for (Eigen::Index p = 0; p < spatial; ++p)
      for (Eigen::Index c = 0; c < kInputShape.channels; ++c)
        m(c, static_cast<Eigen::Index>(b) * spatial + p) =
            static_cast<Scalar>(f.values()[static_cast<std::size_t>(c * spatial + p)] / scale);
  }
  return m;
}

template <typename Scalar>
std::vector<FieldTensor> unpack_fields(const Matrix<Scalar>& m, double scale = 1.0) {
  const auto spatial = static_cast<Eigen::Index>(kInputShape.spatial());
  const auto batch = m.cols() / spatial;
  std::vector<FieldTensor> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    FieldTensor f(kInputShape.rows, kInputShape.cols);
    for (Eigen::Index p = 0; p < spatial; ++p)
      for (Eigen::Index c = 0; c < kInputShape.channels; ++c)
        f.values()[static_cast<std::size_t>(c * spatial + p)] = static_cast<double>(m(c, b * spatial + p)) * scale;
    out.push_back(std::move(f));
  }
  return out;
}

struct ForwardResult {
  Eigen::MatrixXd latents;                // batch x 8
  std::vector<FieldTensor> reconstructions;  // in field units
};

template <typename Scalar>
ForwardResult cae_forward(const Autoencoder<Scalar>& model, std::span<const FieldTensor> batch) {
  if (batch.empty()) throw ShapeError("empty batch");
  auto input = pack_fields<Scalar>(batch, model.input_scale());
  auto trace = model.forward(input, static_cast<int>(batch.size()));
  ForwardResult out;
  // latent activations are (8 x batch) with a 1x1 spatial extent
  out.latents = trace.latent().transpose().template cast<double>();
  out.reconstructions = unpack_fields<Scalar>(trace.output(), model.input_scale());
  for (std::size_t b = 0; b < batch.size(); ++b) out.reconstructions[b].set_frame(batch[b].frame());
  return out;
}

template <typename Scalar>
Eigen::MatrixXd cae_encode(const Autoencoder<Scalar>& model, std::span<const FieldTensor> fields,
                           std::size_t chunk = 256) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(fields.size()), model.latent_dim());
  for (std::size_t start = 0; start < fields.size(); start += chunk) {
    const std::size_t n = std::min(chunk, fields.size() - start);
    auto r = cae_forward(model, fields.subspan(start, n));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = r.latents;
  }
  return out;
}

// Gradient of the batch MSE (in network units) with respect to all parameters.
template <typename Scalar>
Gradients<Scalar> cae_gradients(const Autoencoder<Scalar>& model, std::span<const FieldTensor> batch) {
  if (batch.empty()) throw ShapeError("empty batch");
  auto input = pack_fields<Scalar>(batch, model.input_scale());
  auto trace = model.forward(input, static_cast<int>(batch.size()));
  auto grads = model.zero_gradients();
  model.backward(trace, input, grads);
  return grads;
}

}  // namespace lanescope::codec
