#pragma once

// The two-layer ReLU network f(x) = sum_k a_k relu(b_k . x), its frozen-first-
// layer (random feature) counterpart, initialization, exact gradients, risks,
// and parameter norms. Everything here is a pure function of its arguments.

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "lazylab/dataset.hpp"
#include "lazylab/rng.hpp"

namespace lazylab {

struct NetParams {
  Eigen::VectorXd a;  // m outer weights
  Eigen::MatrixXd B;  // m x d inner weight rows
  double beta = 0.0;  // initialization magnitude this state descends from

  int m() const { return static_cast<int>(a.size()); }
  int d() const { return static_cast<int>(B.cols()); }

  void validate() const {
    if (a.size() != B.rows()) throw std::invalid_argument("params: a/B row mismatch");
    if (!a.allFinite() || !B.allFinite()) throw std::invalid_argument("params: non-finite entry");
  }
};

struct InitConfig {
  int m = 1;
  int d = 1;
  double beta = 0.0;
  std::uint64_t seed = 0;
};

/// a_k = +-beta with equal probability, b_k uniform on S^{d-1}. The inner rows
/// are drawn before the signs so the B draw is independent of beta.
inline NetParams init_params(const InitConfig& cfg) {
  if (cfg.m < 1 || cfg.d < 1) throw std::invalid_argument("init_params: m,d must be >= 1");
  if (cfg.beta < 0.0) throw std::invalid_argument("init_params: beta must be >= 0");
  Rng rng(derive_seed(cfg.seed, 0x494eu /*'IN'*/));
  NetParams p;
  p.beta = cfg.beta;
  p.B.resize(cfg.m, cfg.d);
  for (int k = 0; k < cfg.m; ++k) p.B.row(k) = rng.sphere(cfg.d).transpose();
  p.a.resize(cfg.m);
  for (int k = 0; k < cfg.m; ++k) p.a[k] = cfg.beta * rng.rademacher();
  if (cfg.beta == 0.0) p.a.setZero();  // normalize -0.0 away
  return p;
}

/// relu(B x), the m-vector of neuron activations at a single input.
inline Eigen::VectorXd activations(const Eigen::MatrixXd& B, const Eigen::VectorXd& x) {
  if (B.cols() != x.size()) throw std::invalid_argument("forward: dimension mismatch");
  return (B * x).cwiseMax(0.0);
}

inline double forward(const NetParams& params, const Eigen::VectorXd& x) {
  return params.a.dot(activations(params.B, x));
}

/// Random feature model: same formula with the inner layer frozen at B0.
inline double rf_forward(const Eigen::VectorXd& a_tilde, const Eigen::MatrixXd& B0,
                         const Eigen::VectorXd& x) {
  if (a_tilde.size() != B0.rows()) throw std::invalid_argument("rf_forward: a/B0 mismatch");
  return a_tilde.dot(activations(B0, x));
}

/// relu(B X^T): m x n activation matrix over a whole input batch.
inline Eigen::MatrixXd feature_matrix(const Eigen::MatrixXd& B, const Eigen::MatrixXd& X) {
  if (B.cols() != X.cols()) throw std::invalid_argument("feature_matrix: dimension mismatch");
  return (B * X.transpose()).cwiseMax(0.0);
}

/// f(x_i) - y_i for all training points.
inline Eigen::VectorXd residuals(const NetParams& params, const Dataset& data) {
  return feature_matrix(params.B, data.X).transpose() * params.a - data.y;
}

/// Training risk with the 1/(2n) convention.
inline double empirical_risk(const NetParams& params, const Dataset& data) {
  if (data.n() < 1) throw std::invalid_argument("empirical_risk: empty dataset");
  return residuals(params, data).squaredNorm() / (2.0 * data.n());
}

inline double empirical_risk_rf(const Eigen::VectorXd& a_tilde, const Eigen::MatrixXd& B0,
                                const Dataset& data) {
  if (data.n() < 1) throw std::invalid_argument("empirical_risk: empty dataset");
  return (feature_matrix(B0, data.X).transpose() * a_tilde - data.y).squaredNorm() /
         (2.0 * data.n());
}

struct PopulationRisk {
  double value = 0.0;
  double stderr_ = 0.0;
};

/// Monte-Carlo population risk (1/2)E(f(x)-f*(x))^2 on n_test fresh sphere
/// points. RandomLabels targets are rejected: they define no population value.
inline PopulationRisk population_risk_mc(const NetParams& params, const TargetFunction& target,
                                         int n_test, std::uint64_t seed,
                                         int quadrature_size = 1000) {
  if (n_test < 1) throw std::invalid_argument("population_risk_mc: n_test must be >= 1");
  if (target.kind == TargetFunction::Kind::RandomLabels)
    throw std::invalid_argument("population_risk_mc: no population target for random labels");
  Rng rng(derive_seed(seed, 0x5052u /*'PR'*/));
  Rng quad_rng(derive_seed(seed, 0x5051u));
  double mean = 0.0, m2 = 0.0;
  for (int i = 1; i <= n_test; ++i) {
    const Eigen::VectorXd x = rng.sphere(params.d());
    const double diff = forward(params, x) - target.value(x, quad_rng, quadrature_size);
    const double v = 0.5 * diff * diff;
    const double delta = v - mean;
    mean += delta / i;
    m2 += delta * (v - mean);
  }
  PopulationRisk out;
  out.value = mean;
  out.stderr_ = n_test > 1 ? std::sqrt(m2 / (n_test - 1.0) / n_test) : 0.0;
  return out;
}

struct Gradient {
  Eigen::VectorXd a;  // dRisk/da
  Eigen::MatrixXd B;  // dRisk/dB, row k is the gradient for b_k

  double squared_norm() const { return a.squaredNorm() + B.squaredNorm(); }
};

/// Exact gradient of the 1/(2n) risk:
///   dR/da_k = (1/n) sum_i e_i relu(b_k . x_i)
///   dR/db_k = (a_k/n) sum_i e_i relu'(b_k . x_i) x_i     (relu'(0) = 0)
inline Gradient gradient(const NetParams& params, const Dataset& data) {
  const int n = data.n();
  if (n < 1) throw std::invalid_argument("gradient: empty dataset");
  if (params.d() != data.d()) throw std::invalid_argument("gradient: dimension mismatch");
  const Eigen::MatrixXd Z = params.B * data.X.transpose();       // m x n pre-activations
  const Eigen::MatrixXd S = Z.cwiseMax(0.0);
  const Eigen::VectorXd e = S.transpose() * params.a - data.y;   // residuals
  Gradient g;
  g.a = S * e / n;
  Eigen::MatrixXd M = (Z.array() > 0.0).cast<double>();          // relu' mask
  M.array().rowwise() *= e.transpose().array();
  g.B = (params.a / n).asDiagonal() * (M * data.X);
  return g;
}

/// sum_k |a_k| ||b_k||; invariant under per-neuron rescaling (c a_k, b_k / c).
inline double path_norm(const NetParams& params) {
  return (params.a.cwiseAbs().array() * params.B.rowwise().norm().array()).sum();
}

struct Deviation {
  double max_a = 0.0;  // max_k |a_k - a_k(0)|
  double max_b = 0.0;  // max_k ||b_k - b_k(0)||
};

inline Deviation param_deviation(const NetParams& current, const NetParams& initial) {
  if (current.m() != initial.m() || current.d() != initial.d())
    throw std::invalid_argument("param_deviation: shape mismatch");
  Deviation dev;
  dev.max_a = (current.a - initial.a).cwiseAbs().maxCoeff();
  dev.max_b = (current.B - initial.B).rowwise().norm().maxCoeff();
  return dev;
}

/// JSON round-trip at full precision; the decimal representation reproduces
/// the exact double on re-parse.
inline nlohmann::json params_to_json(const NetParams& params) {
  nlohmann::json j;
  j["m"] = params.m();
  j["d"] = params.d();
  j["beta"] = params.beta;
  j["a"] = std::vector<double>(params.a.data(), params.a.data() + params.a.size());
  auto rows = nlohmann::json::array();
  for (int k = 0; k < params.m(); ++k) {
    std::vector<double> row(params.d());
    for (int c = 0; c < params.d(); ++c) row[c] = params.B(k, c);
    rows.push_back(std::move(row));
  }
  j["B"] = rows;
  return j;
}

inline NetParams params_from_json(const nlohmann::json& j) {
  NetParams p;
  const int m = j.at("m").get<int>();
  const int d = j.at("d").get<int>();
  p.beta = j.at("beta").get<double>();
  p.a.resize(m);
  p.B.resize(m, d);
  for (int k = 0; k < m; ++k) {
    p.a[k] = j.at("a").at(k).get<double>();
    for (int c = 0; c < d; ++c) p.B(k, c) = j.at("B").at(k).at(c).get<double>();
  }
  p.validate();
  return p;
}

}  // namespace lazylab
