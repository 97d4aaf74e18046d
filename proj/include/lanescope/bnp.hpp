#pragma once

// Sticky HDP-HMM with zero-mean Gaussian emissions, fitted by the weak-limit
// blocked Gibbs sampler. States are 0-based internally.
//
//   beta ~ Dir(gamma/L, ..., gamma/L)
//   pi_j ~ Dir(alpha beta + kappa e_j)
//   Sigma_k ~ IW(nu0, S0)
//   z_t ~ pi_{z_{t-1}},  o_t ~ N(0, Sigma_{z_t})
//
// with alpha = (1 - rho)(alpha + kappa), kappa = rho (alpha + kappa). Several
// sequences share all parameters; each restarts from the initial
// distribution beta.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lanescope/core.hpp"
#include "lanescope/errors.hpp"
#include "lanescope/random.hpp"

namespace lanescope {

using Labels = std::vector<int>;
using LabelSet = std::vector<Labels>;  // one label sequence per feature sequence

struct HdpHmmHyper {
  double gamma = 1.0;
  double alpha_plus_kappa = 10.0;
  double rho = 0.9;  // kappa / (alpha + kappa)
  int L = 25;
  double nu0 = static_cast<double>(kFeatureDim) + 2.0;
  Eigen::MatrixXd S0 = Eigen::MatrixXd::Identity(kFeatureDim, kFeatureDim);
  bool hyper_resampling = false;
  // Gamma(shape, rate) priors on gamma and alpha + kappa; Beta prior on rho.
  double gamma_shape = 1.0, gamma_rate = 0.01;
  double apk_shape = 1.0, apk_rate = 0.01;
  double rho_a = 10.0, rho_b = 1.0;
  int hyper_inner_iterations = 20;

  // Defaults for emission dimension `dim`: nu0 = dim + 2, S0 = I.
  static HdpHmmHyper for_dim(int dim) {
    HdpHmmHyper h;
    h.nu0 = dim + 2.0;
    h.S0 = Eigen::MatrixXd::Identity(dim, dim);
    return h;
  }

  int dim() const { return static_cast<int>(S0.rows()); }
  double alpha() const { return (1.0 - rho) * alpha_plus_kappa; }
  double kappa() const { return rho * alpha_plus_kappa; }

  void validate() const {
    if (!(gamma > 0)) throw ConfigError("bnp.gamma must be positive");
    if (!(alpha_plus_kappa > 0)) throw ConfigError("bnp.alpha_plus_kappa must be positive");
    if (!(rho >= 0 && rho < 1)) throw ConfigError("bnp.rho must lie in [0, 1)");
    if (L < 2) throw ConfigError("bnp.L must be at least 2");
    if (S0.rows() < 1 || S0.rows() != S0.cols()) throw ConfigError("bnp.S0 must be square");
    if (!(nu0 > dim() + 1)) throw ConfigError("bnp.nu0 must exceed D + 1");
    if (!S0.isApprox(S0.transpose(), 1e-12) || Eigen::LLT<Eigen::MatrixXd>(S0).info() != Eigen::Success)
      throw ConfigError("bnp.S0 must be symmetric positive definite");
    if (!(gamma_shape > 0 && gamma_rate > 0 && apk_shape > 0 && apk_rate > 0 && rho_a > 0 && rho_b > 0))
      throw ConfigError("hyperprior parameters must be positive");
    if (hyper_inner_iterations < 1) throw ConfigError("bnp.hyper_inner_iterations must be positive");
  }
};

struct AuxCounts {
  Eigen::MatrixXi m;      // tables per (restaurant j, dish k)
  Eigen::VectorXi w;      // override tables per restaurant
  Eigen::MatrixXi m_bar;  // m with the overrides removed from the diagonal
};

struct HdpHmmState {
  Eigen::VectorXd beta;              // L
  Eigen::MatrixXd pi;                // L x L, row-stochastic
  std::vector<Eigen::MatrixXd> sigmas;
  LabelSet z;
  Eigen::MatrixXi n;                 // transition counts
  AuxCounts aux;
  double loglik = 0.0;

  int L() const { return static_cast<int>(beta.size()); }
};

// ---------------------------------------------------------------- priors

// beta_k = u_k prod_{i<k} (1 - u_i) for the given sticks; the last weight is
// whatever remains so that the vector sums to one.
inline Eigen::VectorXd stick_breaking_from(const Eigen::VectorXd& sticks, int L) {
  if (L < 1) throw InvalidArgument("stick breaking needs L >= 1");
  if (sticks.size() < L - 1) throw InvalidArgument("need L - 1 stick proportions");
  Eigen::VectorXd beta(L);
  double remaining = 1.0, used = 0.0;
  for (int k = 0; k + 1 < L; ++k) {
    beta[k] = sticks[k] * remaining;
    remaining *= 1.0 - sticks[k];
    used += beta[k];
  }
  beta[L - 1] = std::max(0.0, 1.0 - used);
  return beta;
}

inline Eigen::VectorXd stick_breaking(double gamma, int L, Rng& rng) {
  if (!(gamma > 0)) throw InvalidArgument("gamma must be positive");
  if (L < 1) throw InvalidArgument("stick breaking needs L >= 1");
  Eigen::VectorXd sticks(std::max(L - 1, 0));
  for (Eigen::Index k = 0; k < sticks.size(); ++k) sticks[k] = beta_variate(1.0, gamma, rng);
  return stick_breaking_from(sticks, L);
}

// pi_j ~ Dir(alpha beta + kappa e_j + n_j)
inline Eigen::VectorXd sample_pi_row(const Eigen::VectorXd& beta, const Eigen::VectorXi& counts, int j,
                                     const HdpHmmHyper& hyper, Rng& rng) {
  Eigen::VectorXd conc = hyper.alpha() * beta + counts.cast<double>();
  conc[j] += hyper.kappa();
  return dirichlet(conc, rng);
}

inline Eigen::MatrixXd sample_pi(const Eigen::VectorXd& beta, const Eigen::MatrixXi& n, const HdpHmmHyper& hyper,
                                 Rng& rng) {
  const auto L = beta.size();
  Eigen::MatrixXd pi(L, L);
  for (Eigen::Index j = 0; j < L; ++j)
    pi.row(j) = sample_pi_row(beta, n.row(j).transpose(), static_cast<int>(j), hyper, rng).transpose();
  return pi;
}

// Bartlett construction: with Psi = C C^T and A lower triangular
// (A_ii^2 ~ chi2(nu - i), A_ij ~ N(0, 1) below the diagonal),
// Sigma = (C A^{-T}) (C A^{-T})^T ~ IW(nu, Psi).
inline Eigen::MatrixXd sample_inverse_wishart(double nu, const Eigen::MatrixXd& psi, Rng& rng) {
  const auto d = psi.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success) throw InvalidArgument("inverse-Wishart scale is not positive definite");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(chi_squared(nu - static_cast<double>(i), rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = standard_normal(rng);
  }
  // C A^{-T}: solve X A^T = C for X, i.e. A X^T = C^T.
  Eigen::MatrixXd xt = a.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd(llt.matrixL().transpose()));
  Eigen::MatrixXd x = xt.transpose();
  Eigen::MatrixXd sigma = x * x.transpose();
  return 0.5 * (sigma + sigma.transpose());
}

// --------------------------------------------------------------- counting

inline void check_labels(const std::vector<FeatureSequence>& features, const LabelSet& z, int L) {
  if (features.size() != z.size()) throw LengthMismatch("label and feature sequence counts differ");
  for (std::size_t s = 0; s < z.size(); ++s) {
    if (static_cast<Eigen::Index>(z[s].size()) != features[s].rows())
      throw LengthMismatch("sequence " + std::to_string(s) + ": label and feature lengths differ");
    for (int k : z[s])
      if (k < 0 || k >= L) throw InvalidArgument("label " + std::to_string(k) + " outside [0, L)");
  }
}

inline Eigen::MatrixXi count_transitions(const LabelSet& z, int L) {
  Eigen::MatrixXi n = Eigen::MatrixXi::Zero(L, L);
  for (const auto& seq : z)
    for (std::size_t t = 1; t < seq.size(); ++t) ++n(seq[t - 1], seq[t]);
  return n;
}

inline Eigen::VectorXi occupancy(const LabelSet& z, int L) {
  Eigen::VectorXi c = Eigen::VectorXi::Zero(L);
  for (const auto& seq : z)
    for (int k : seq) ++c[k];
  return c;
}

// States holding strictly more than `threshold` of all labels.
inline int effective_state_count(const LabelSet& z, int L, double threshold = 0.01) {
  const Eigen::VectorXi c = occupancy(z, L);
  const double total = c.sum();
  int count = 0;
  for (Eigen::Index k = 0; k < c.size(); ++k) count += c[k] > threshold * total ? 1 : 0;
  return count;
}

// ------------------------------------------------------------- emissions

// Sigma_k ~ IW(nu0 + n_k, S0 + sum_{t: z_t = k} o_t o_t^T)
inline std::vector<Eigen::MatrixXd> sample_emissions(const std::vector<FeatureSequence>& features, const LabelSet& z,
                                                     const HdpHmmHyper& hyper, Rng& rng) {
  const int L = hyper.L;
  const auto d = hyper.dim();
  check_labels(features, z, L);
  std::vector<Eigen::MatrixXd> scatter(static_cast<std::size_t>(L), Eigen::MatrixXd::Zero(d, d));
  std::vector<double> counts(static_cast<std::size_t>(L), 0.0);
  for (std::size_t s = 0; s < features.size(); ++s) {
    if (features[s].rows() > 0 && features[s].cols() != d)
      throw ShapeError("feature dimension differs from the emission prior");
    for (std::size_t t = 0; t < z[s].size(); ++t) {
      const auto k = static_cast<std::size_t>(z[s][t]);
      const auto o = features[s].row(static_cast<Eigen::Index>(t));
      scatter[k].selfadjointView<Eigen::Lower>().rankUpdate(o.transpose());
      counts[k] += 1.0;
    }
  }
  std::vector<Eigen::MatrixXd> sigmas;
  sigmas.reserve(static_cast<std::size_t>(L));
  for (std::size_t k = 0; k < static_cast<std::size_t>(L); ++k) {
    Eigen::MatrixXd s = scatter[k].selfadjointView<Eigen::Lower>();
    sigmas.push_back(sample_inverse_wishart(hyper.nu0 + counts[k], hyper.S0 + s, rng));
  }
  return sigmas;
}

// log N(o_t; 0, Sigma_k) for every frame and state (T x L).
inline Eigen::MatrixXd emission_loglik(const FeatureSequence& features, const std::vector<Eigen::MatrixXd>& sigmas) {
  const auto T = features.rows();
  const auto d = features.cols();
  const auto L = static_cast<Eigen::Index>(sigmas.size());
  Eigen::MatrixXd ll(T, L);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const Eigen::MatrixXd ot = features.transpose();
  for (Eigen::Index k = 0; k < L; ++k) {
    const auto& sigma = sigmas[static_cast<std::size_t>(k)];
    if (sigma.rows() != d || sigma.cols() != d) throw ShapeError("covariance dimension differs from the features");
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw InvalidArgument("emission covariance is not positive definite");
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    Eigen::MatrixXd y = llt.matrixL().solve(ot);
    ll.col(k) = (-0.5 * (static_cast<double>(d) * log2pi + logdet) - 0.5 * y.colwise().squaredNorm().array()).matrix().transpose();
  }
  for (Eigen::Index t = 0; t < T; ++t)
    if (!std::isfinite(ll.row(t).maxCoeff()))
      throw NumericalUnderflow("frame " + std::to_string(t) + " has no finite density under any state");
  return ll;
}

// ------------------------------------------------------ forward algorithm

// Exact log p(O | pi, Sigma, init) by the scaled forward recursion.
inline double loglik(const FeatureSequence& features, const Eigen::MatrixXd& pi,
                     const std::vector<Eigen::MatrixXd>& sigmas, const Eigen::VectorXd& init) {
  const auto T = features.rows();
  if (T == 0) return 0.0;
  const auto L = pi.rows();
  if (pi.cols() != L || init.size() != L || static_cast<Eigen::Index>(sigmas.size()) != L)
    throw ShapeError("pi, init and covariance counts disagree");
  const Eigen::MatrixXd ll = emission_loglik(features, sigmas);
  double total = 0.0;
  Eigen::RowVectorXd alpha(L), prior(L);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double m = ll.row(t).maxCoeff();
    prior = t == 0 ? Eigen::RowVectorXd(init.transpose()) : Eigen::RowVectorXd(alpha * pi);
    alpha = prior.array() * (ll.row(t).array() - m).exp();
    const double c = alpha.sum();
    if (!(c > 0.0) || !std::isfinite(c))
      throw NumericalUnderflow("forward recursion vanished at frame " + std::to_string(t));
    alpha /= c;
    total += std::log(c) + m;
  }
  return total;
}

inline double loglik(const std::vector<FeatureSequence>& features, const Eigen::MatrixXd& pi,
                     const std::vector<Eigen::MatrixXd>& sigmas, const Eigen::VectorXd& init) {
  double total = 0.0;
  for (const auto& f : features) total += loglik(f, pi, sigmas, init);
  return total;
}

// ------------------------------------------------------- label sampling

namespace detail {

// Log backward messages, each row shifted so its maximum is zero.
inline Eigen::MatrixXd backward_messages(const Eigen::MatrixXd& ll, const Eigen::MatrixXd& pi) {
  const auto T = ll.rows(), L = ll.cols();
  Eigen::MatrixXd b(T, L);
  b.row(T - 1).setZero();
  Eigen::VectorXd e(L);
  for (Eigen::Index t = T - 1; t > 0; --t) {
    const Eigen::RowVectorXd u = ll.row(t) + b.row(t);
    const double m = u.maxCoeff();
    e = (u.array() - m).exp().transpose();
    Eigen::RowVectorXd msg = (pi * e).transpose().array().log();
    const double top = msg.maxCoeff();
    if (!std::isfinite(top)) throw NumericalUnderflow("backward messages vanished at frame " + std::to_string(t));
    b.row(t - 1) = msg.array() - top;
  }
  return b;
}

inline int draw_state(const Eigen::RowVectorXd& prior, const Eigen::RowVectorXd& log_weight, Rng& rng,
                      Eigen::Index t) {
  const double m = log_weight.maxCoeff();
  Eigen::RowVectorXd w = prior.array() * (log_weight.array() - m).exp();
  if (!(w.sum() > 0.0) || !std::isfinite(w.sum()))
    throw NumericalUnderflow("no state can emit frame " + std::to_string(t));
  return static_cast<int>(categorical(w.data(), static_cast<std::size_t>(w.size()), rng));
}

}  // namespace detail

// Blocked draw of z from p(z | O, pi, Sigma) with z_0 ~ init.
inline Labels sample_labels(const FeatureSequence& features, const Eigen::MatrixXd& pi,
                            const std::vector<Eigen::MatrixXd>& sigmas, const Eigen::VectorXd& init, Rng& rng) {
  const auto T = features.rows();
  if (T == 0) return {};
  const auto L = pi.rows();
  if (pi.cols() != L || init.size() != L || static_cast<Eigen::Index>(sigmas.size()) != L)
    throw ShapeError("pi, init and covariance counts disagree");
  const Eigen::MatrixXd ll = emission_loglik(features, sigmas);
  const Eigen::MatrixXd b = detail::backward_messages(ll, pi);
  Labels z(static_cast<std::size_t>(T));
  z[0] = detail::draw_state(init.transpose(), ll.row(0) + b.row(0), rng, 0);
  for (Eigen::Index t = 1; t < T; ++t)
    z[static_cast<std::size_t>(t)] =
        detail::draw_state(pi.row(z[static_cast<std::size_t>(t - 1)]), ll.row(t) + b.row(t), rng, t);
  return z;
}

// ------------------------------------------------------ auxiliary counts

// m_jk counts new tables among n_jk customers, w_j the override tables.
inline AuxCounts sample_aux_counts(const Eigen::MatrixXi& n, const Eigen::VectorXd& beta, const HdpHmmHyper& hyper,
                                   Rng& rng) {
  const auto L = beta.size();
  if (n.rows() != L || n.cols() != L) throw ShapeError("count matrix does not match beta");
  AuxCounts aux{Eigen::MatrixXi::Zero(L, L), Eigen::VectorXi::Zero(L), Eigen::MatrixXi::Zero(L, L)};
  const double alpha = hyper.alpha(), kappa = hyper.kappa();
  for (Eigen::Index j = 0; j < L; ++j)
    for (Eigen::Index k = 0; k < L; ++k) {
      const double c = alpha * beta[k] + (j == k ? kappa : 0.0);
      int tables = 0;
      for (int i = 1; i <= n(j, k); ++i)
        if (i == 1 || bernoulli(c / (static_cast<double>(i - 1) + c), rng)) ++tables;
      aux.m(j, k) = tables;
    }
  const double rho = hyper.rho;
  for (Eigen::Index j = 0; j < L; ++j) {
    const double p = rho / (rho + beta[j] * (1.0 - rho));
    aux.w[j] = static_cast<int>(binomial(aux.m(j, j), p, rng));
  }
  aux.m_bar = aux.m;
  for (Eigen::Index j = 0; j < L; ++j) aux.m_bar(j, j) -= aux.w[j];
  return aux;
}

// beta ~ Dir(gamma / L + m_bar_{.k})
inline Eigen::VectorXd sample_beta(const Eigen::MatrixXi& m_bar, double gamma, Rng& rng) {
  const auto L = m_bar.cols();
  Eigen::VectorXd conc = Eigen::VectorXd::Constant(L, gamma / static_cast<double>(L)) +
                         m_bar.colwise().sum().transpose().cast<double>();
  return dirichlet(conc, rng);
}

// --------------------------------------------------------- hyperparameters

// Auxiliary-variable updates for the concentrations and a conjugate Beta
// update for rho; returns `hyper` unchanged when resampling is disabled.
inline HdpHmmHyper resample_hyperparameters(const HdpHmmState& state, const HdpHmmHyper& hyper, Rng& rng) {
  if (!hyper.hyper_resampling) return hyper;
  HdpHmmHyper h = hyper;
  const auto L = state.L();
  const Eigen::VectorXi customers = state.n.rowwise().sum();
  const double tables = state.aux.m.sum();

  for (int it = 0; it < h.hyper_inner_iterations; ++it) {
    // alpha + kappa: one (r_j, s_j) pair per visited restaurant.
    double log_r = 0.0, s = 0.0;
    for (Eigen::Index j = 0; j < L; ++j) {
      if (customers[j] == 0) continue;
      const double nj = customers[j];
      log_r += std::log(beta_variate(h.alpha_plus_kappa + 1.0, nj, rng));
      s += bernoulli(nj / (nj + h.alpha_plus_kappa), rng) ? 1.0 : 0.0;
    }
    h.alpha_plus_kappa = gamma_variate(h.apk_shape + tables - s, h.apk_rate - log_r, rng);

    // gamma: Escobar-West mixture over the number of distinct dishes.
    const Eigen::VectorXi dish_tables = state.aux.m_bar.colwise().sum();
    const double m_bar_total = dish_tables.sum();
    const double dishes = (dish_tables.array() > 0).count();
    if (m_bar_total > 0) {
      const double eta = beta_variate(h.gamma + 1.0, m_bar_total, rng);
      const double rate = h.gamma_rate - std::log(eta);
      const double odds = (h.gamma_shape + dishes - 1.0) / (m_bar_total * rate);
      const double shape = bernoulli(odds / (1.0 + odds), rng) ? h.gamma_shape + dishes : h.gamma_shape + dishes - 1.0;
      h.gamma = gamma_variate(shape, rate, rng);
    } else {
      h.gamma = gamma_variate(h.gamma_shape, h.gamma_rate, rng);
    }
  }
  const double overrides = state.aux.w.sum();
  h.rho = beta_variate(h.rho_a + overrides, h.rho_b + tables - overrides, rng);
  h.rho = std::min(h.rho, std::nextafter(1.0, 0.0));
  h.gamma = std::max(h.gamma, std::numeric_limits<double>::min());
  h.alpha_plus_kappa = std::max(h.alpha_plus_kappa, std::numeric_limits<double>::min());
  return h;
}

// ------------------------------------------------------------------ sweeps

inline void check_features(const std::vector<FeatureSequence>& features, const HdpHmmHyper& hyper) {
  if (features.empty()) throw EmptyDataset("no feature sequences");
  Eigen::Index total = 0;
  for (const auto& f : features) {
    if (f.cols() != hyper.dim())
      throw ShapeError("features have " + std::to_string(f.cols()) + " columns, prior expects " +
                       std::to_string(hyper.dim()));
    if (!f.allFinite()) throw NumericalUnderflow("features contain non-finite values");
    total += f.rows();
  }
  if (total < 2) throw EmptyDataset("need at least two frames");
}

// Parameters drawn given the current labels: aux counts, beta, pi, Sigma.
inline void sample_parameters(HdpHmmState& state, const std::vector<FeatureSequence>& features,
                              const HdpHmmHyper& hyper, Rng& rng) {
  state.n = count_transitions(state.z, hyper.L);
  state.aux = sample_aux_counts(state.n, state.beta, hyper, rng);
  state.beta = sample_beta(state.aux.m_bar, hyper.gamma, rng);
  state.pi = sample_pi(state.beta, state.n, hyper, rng);
  state.sigmas = sample_emissions(features, state.z, hyper, rng);
}

// Labels drawn uniformly at random, then parameters from their conditional.
inline HdpHmmState init_state(const std::vector<FeatureSequence>& features, const HdpHmmHyper& hyper, Rng& rng) {
  hyper.validate();
  check_features(features, hyper);
  HdpHmmState state;
  state.beta = stick_breaking(hyper.gamma, hyper.L, rng);
  std::uniform_int_distribution<int> any(0, hyper.L - 1);
  for (const auto& f : features) {
    Labels z(static_cast<std::size_t>(f.rows()));
    for (int& k : z) k = any(rng);
    state.z.push_back(std::move(z));
  }
  sample_parameters(state, features, hyper, rng);
  state.loglik = loglik(features, state.pi, state.sigmas, state.beta);
  return state;
}

// labels -> counts -> aux counts -> beta -> pi -> emissions -> hyperparameters
inline void gibbs_sweep(HdpHmmState& state, const std::vector<FeatureSequence>& features, HdpHmmHyper& hyper,
                        Rng& rng) {
  for (std::size_t s = 0; s < features.size(); ++s)
    state.z[s] = sample_labels(features[s], state.pi, state.sigmas, state.beta, rng);
  sample_parameters(state, features, hyper, rng);
  hyper = resample_hyperparameters(state, hyper, rng);
  state.loglik = loglik(features, state.pi, state.sigmas, state.beta);
}

struct FitResult {
  HdpHmmState state;
  HdpHmmHyper hyper;  // final values (differ from the input only with resampling)
  std::vector<double> loglik_history;
  std::vector<int> effective_history;
  int effective_states = 0;
};

inline FitResult fit(const std::vector<FeatureSequence>& features, HdpHmmHyper hyper, int iterations,
                     std::uint64_t seed, const std::function<void(int, const HdpHmmState&)>& progress = {}) {
  if (iterations < 1) throw ConfigError("bnp.iterations must be positive");
  Rng rng(seed);
  FitResult out;
  out.state = init_state(features, hyper, rng);
  out.loglik_history.reserve(static_cast<std::size_t>(iterations));
  for (int it = 0; it < iterations; ++it) {
    gibbs_sweep(out.state, features, hyper, rng);
    out.loglik_history.push_back(out.state.loglik);
    out.effective_history.push_back(effective_state_count(out.state.z, hyper.L));
    if (progress) progress(it, out.state);
  }
  out.hyper = hyper;
  out.effective_states = out.effective_history.back();
  return out;
}

inline FitResult fit(const FeatureSequence& features, const HdpHmmHyper& hyper, int iterations, std::uint64_t seed) {
  return fit(std::vector<FeatureSequence>{features}, hyper, iterations, seed);
}

}  // namespace lanescope
