#pragma once

// CAE checkpoints: one JSON document holding the layer table and every
// parameter array as base64 of little-endian IEEE-754 doubles.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanescope/codec/cae.hpp"
#include "lanescope/errors.hpp"

namespace lanescope::codec {

namespace detail {

inline constexpr char kBase64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::size_t n = std::min<std::size_t>(3, bytes.size() - i);
    std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
    if (n > 1) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    if (n > 2) chunk |= bytes[i + 2];
    out += kBase64Alphabet[(chunk >> 18) & 63];
    out += kBase64Alphabet[(chunk >> 12) & 63];
    out += n > 1 ? kBase64Alphabet[(chunk >> 6) & 63] : '=';
    out += n > 2 ? kBase64Alphabet[chunk & 63] : '=';
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw ParseError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t chunk = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int v = 0;
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
      } else if (pad > 0 || (v = value(c)) < 0) {
        throw ParseError("invalid base64 character");
      }
      chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
    }
    out.push_back(static_cast<std::uint8_t>(chunk >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(chunk >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(chunk));
  }
  return out;
}

inline std::string encode_doubles(const std::vector<double>& values) {
  std::vector<std::uint8_t> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return base64_encode(bytes);
}

inline std::vector<double> decode_doubles(const std::string& text, std::size_t expected) {
  const auto bytes = base64_decode(text);
  if (bytes.size() != expected * 8)
    throw ParseError("parameter array holds " + std::to_string(bytes.size() / 8) + " values, expected " +
                     std::to_string(expected));
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

inline nlohmann::json shape_json(const Shape& s) { return {s.rows, s.cols, s.channels}; }

inline Shape shape_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("layer shape must be [rows, cols, channels]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

}  // namespace detail

// Weight matrices are stored row-major.
template <typename Scalar>
nlohmann::json checkpoint_json(const Autoencoder<Scalar>& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : model.layers()) {
    const auto& s = layer.spec;
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.weights.size()));
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) w.push_back(static_cast<double>(layer.weights(i, j)));
    std::vector<double> b(layer.bias.data(), layer.bias.data() + layer.bias.size());
    layers.push_back({{"kind", s.kind == LayerKind::Conv ? "conv" : "transposed_conv"},
                      {"kernel", {s.kernel_rows, s.kernel_cols}},
                      {"padding", s.padding},
                      {"input", detail::shape_json(s.input)},
                      {"output", detail::shape_json(s.output)},
                      {"weights_shape", {layer.weights.rows(), layer.weights.cols()}},
                      {"weights", detail::encode_doubles(w)},
                      {"bias", detail::encode_doubles(b)}});
  }
  return {{"format", "lanescope-cae"},
          {"version", 1},
          {"encoding", "base64 little-endian float64"},
          {"seed", model.seed()},
          {"iterations", model.iterations()},
          {"input_scale", model.input_scale()},
          {"layers", layers}};
}

template <typename Scalar>
Autoencoder<Scalar> checkpoint_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "lanescope-cae") throw ParseError("not a CAE checkpoint");
    std::vector<LayerSpec> specs;
    for (const auto& l : doc.at("layers")) {
      LayerSpec s;
      const auto kind = l.at("kind").get<std::string>();
      if (kind != "conv" && kind != "transposed_conv") throw ParseError("unknown layer kind '" + kind + "'");
      s.kind = kind == "conv" ? LayerKind::Conv : LayerKind::TransposedConv;
      s.kernel_rows = l.at("kernel").at(0).get<int>();
      s.kernel_cols = l.at("kernel").at(1).get<int>();
      s.padding = l.at("padding").get<int>();
      s.input = detail::shape_from_json(l.at("input"));
      s.output = detail::shape_from_json(l.at("output"));
      specs.push_back(s);
    }
    if (specs.size() != autoencoder_architecture().size()) throw ShapeError("checkpoint layer count differs");
    Autoencoder<Scalar> model(specs);
    const auto& layers = doc.at("layers");
    for (std::size_t i = 0; i < specs.size(); ++i) {
      auto& layer = model.layers()[i];
      const auto rows = layer.weights.rows(), cols = layer.weights.cols();
      const auto& ws = layers[i].at("weights_shape");
      if (ws.at(0).get<Eigen::Index>() != rows || ws.at(1).get<Eigen::Index>() != cols)
        throw ShapeError("layer " + std::to_string(i) + " weight shape mismatch");
      auto w = detail::decode_doubles(layers[i].at("weights").get<std::string>(), static_cast<std::size_t>(rows * cols));
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) layer.weights(r, c) = static_cast<Scalar>(w[static_cast<std::size_t>(r * cols + c)]);
      auto b = detail::decode_doubles(layers[i].at("bias").get<std::string>(), static_cast<std::size_t>(layer.bias.size()));
      for (Eigen::Index k = 0; k < layer.bias.size(); ++k) layer.bias[k] = static_cast<Scalar>(b[static_cast<std::size_t>(k)]);
    }
    model.set_seed(doc.at("seed").get<std::uint64_t>());
    model.set_iterations(doc.at("iterations").get<std::int64_t>());
    model.set_input_scale(doc.at("input_scale").get<double>());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

template <typename Scalar>
void save_checkpoint(const Autoencoder<Scalar>& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw PathNotFound("cannot write " + path);
  out << checkpoint_json(model).dump(1) << '\n';
}

template <typename Scalar>
Autoencoder<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PathNotFound(path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return checkpoint_from_json<Scalar>(doc);
}

}  // namespace lanescope::codec
