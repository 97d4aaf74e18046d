#pragma once

// Linear fallback encoder: principal directions of the flattened fields.

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lanescope/core.hpp"
#include "lanescope/errors.hpp"

namespace lanescope::codec {

struct LinearProjection {
  Eigen::VectorXd mean;        // flattened field mean
  Eigen::MatrixXd components;  // flattened size x k, orthonormal columns
  Eigen::VectorXd variances;   // per component, descending

  int k() const { return static_cast<int>(components.cols()); }
};

inline Eigen::VectorXd flatten(const FieldTensor& f) {
  return Eigen::Map<const Eigen::VectorXd>(f.values().data(), static_cast<Eigen::Index>(f.size()));
}

inline LinearProjection linear_fallback_fit(std::span<const FieldTensor> dataset, int k = static_cast<int>(kLatentDim)) {
  if (k < 1) throw InvalidArgument("projection needs at least one component");
  if (dataset.empty()) throw EmptyDataset("no fields to fit");
  const auto dim = static_cast<Eigen::Index>(dataset.front().size());
  if (k > dim) throw InvalidArgument("k exceeds the field dimension");
  const auto n = static_cast<Eigen::Index>(dataset.size());
  if (n < k) throw RankDeficient(std::to_string(n) + " fields cannot span " + std::to_string(k) + " directions");

  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& f = dataset[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(f.size()) != dim) throw ShapeError("fields differ in shape");
    x.row(i) = flatten(f).transpose();
  }
  LinearProjection p;
  p.mean = x.colwise().mean().transpose();
  x.rowwise() -= p.mean.transpose();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  const double tol = 1e-12 * std::max(values.cwiseAbs().maxCoeff(), 1e-300);
  int nonzero = 0;
  for (Eigen::Index i = 0; i < dim; ++i) nonzero += values[i] > tol ? 1 : 0;
  if (values.maxCoeff() <= 0.0 || nonzero < k)
    throw RankDeficient("only " + std::to_string(nonzero) + " directions carry variance, " + std::to_string(k) +
                        " requested");
  p.components = eig.eigenvectors().rightCols(k).rowwise().reverse();
  p.variances = values.tail(k).reverse();
  // Sign convention: the largest-magnitude entry of each direction is positive.
  for (int c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    p.components.col(c).cwiseAbs().maxCoeff(&arg);
    if (p.components(arg, c) < 0) p.components.col(c) *= -1.0;
  }
  return p;
}

inline Eigen::VectorXd linear_fallback_encode(const LinearProjection& p, const FieldTensor& field) {
  if (static_cast<Eigen::Index>(field.size()) != p.mean.size()) throw ShapeError("field shape differs from the fit");
  return p.components.transpose() * (flatten(field) - p.mean);
}

inline Eigen::MatrixXd linear_fallback_encode(const LinearProjection& p, std::span<const FieldTensor> fields) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(fields.size()), p.k());
  for (std::size_t i = 0; i < fields.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = linear_fallback_encode(p, fields[i]).transpose();
  return out;
}

inline FieldTensor linear_fallback_decode(const LinearProjection& p, const Eigen::VectorXd& code,
                                          std::size_t rows = FieldTensor::kDefaultRows,
                                          std::size_t cols = FieldTensor::kDefaultCols) {
  FieldTensor f(rows, cols);
  if (static_cast<Eigen::Index>(f.size()) != p.mean.size()) throw ShapeError("grid shape differs from the fit");
  Eigen::Map<Eigen::VectorXd>(f.values().data(), p.mean.size()) = p.mean + p.components * code;
  return f;
}

inline nlohmann::json linear_projection_json(const LinearProjection& p) {
  nlohmann::json comps = nlohmann::json::array();
  for (int c = 0; c < p.k(); ++c)
    comps.push_back(std::vector<double>(p.components.col(c).data(), p.components.col(c).data() + p.components.rows()));
  return {{"format", "lanescope-linear"},
          {"mean", std::vector<double>(p.mean.data(), p.mean.data() + p.mean.size())},
          {"variances", std::vector<double>(p.variances.data(), p.variances.data() + p.variances.size())},
          {"components", comps}};
}

inline LinearProjection linear_projection_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "lanescope-linear") throw ParseError("not a linear projection");
    LinearProjection p;
    auto mean = doc.at("mean").get<std::vector<double>>();
    auto var = doc.at("variances").get<std::vector<double>>();
    const auto& comps = doc.at("components");
    p.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    p.variances = Eigen::Map<Eigen::VectorXd>(var.data(), static_cast<Eigen::Index>(var.size()));
    p.components.resize(p.mean.size(), static_cast<Eigen::Index>(comps.size()));
    for (std::size_t c = 0; c < comps.size(); ++c) {
      auto col = comps[c].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(col.size()) != p.mean.size()) throw ShapeError("component length mismatch");
      p.components.col(static_cast<Eigen::Index>(c)) = Eigen::Map<Eigen::VectorXd>(col.data(), p.mean.size());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed projection: ") + e.what());
  }
}

}  // namespace lanescope::codec
