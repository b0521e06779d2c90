#pragma once

// Executable forms of the optimization/coupling/generalization bounds: Gram
// matrices and their drift, the gradient-norm identity, deviation radii
// (p_n, q_n), the exponential risk envelope, the initial-risk and
// coupling-gap bounds, the explicit-representative construction a*, the
// Rademacher generalization bound, the early-stopping risk bound with its
// schedule corollaries, and the Lyapunov functional for the frozen-layer flow.
// Unspecified absolute constants default to 1 and all uses are trend checks.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "lazylab/dataset.hpp"
#include "lazylab/dynamics.hpp"
#include "lazylab/kernels.hpp"
#include "lazylab/model.hpp"

namespace lazylab {

struct GramPair {
  Eigen::MatrixXd Ga;  // (1/nm) sum_k relu(b_k.x_i) relu(b_k.x_j)
  Eigen::MatrixXd Gb;  // (1/nm) sum_k a_k^2 <x_i,x_j> relu'(b_k.x_i) relu'(b_k.x_j)
  Eigen::MatrixXd G;   // Ga + Gb
};

/// Parameter-dependent Gram matrices. As m grows at initialization, Ga and Gb
/// concentrate on the normalized kernel matrices (Ka and beta^2 Kb).
inline GramPair gram_matrices(const NetParams& params, const Eigen::MatrixXd& inputs) {
  if (params.d() != inputs.cols()) throw std::invalid_argument("gram_matrices: dimension mismatch");
  const int n = static_cast<int>(inputs.rows());
  const int m = params.m();
  const Eigen::MatrixXd Z = params.B * inputs.transpose();  // m x n
  const Eigen::MatrixXd S = Z.cwiseMax(0.0);
  Eigen::MatrixXd D = (Z.array() > 0.0).cast<double>();
  GramPair gp;
  gp.Ga = S.transpose() * S / (static_cast<double>(n) * m);
  D.array().colwise() *= params.a.array();  // rows scaled by a_k
  gp.Gb = (D.transpose() * D).cwiseProduct(inputs * inputs.transpose()) /
          (static_cast<double>(n) * m);
  gp.G = gp.Ga + gp.Gb;
  return gp;
}

struct IdentityCheck {
  double lhs = 0.0;  // ||grad risk||_F^2
  double rhs = 0.0;  // (m/n) e^T G e
};

/// Two independent code paths for the same scalar: the squared Frobenius norm
/// of the gradient, and the quadratic form of the residuals in G.
inline IdentityCheck gradient_norm_identity_check(const NetParams& params, const Dataset& data) {
  IdentityCheck chk;
  chk.lhs = gradient(params, data).squared_norm();
  const Eigen::VectorXd e = residuals(params, data);
  const GramPair gp = gram_matrices(params, data.X);
  chk.rhs = (static_cast<double>(params.m()) / data.n()) * e.dot(gp.G * e);
  return chk;
}

struct PqPair {
  double p = 0.0;
  double q = 0.0;
};

/// Deviation radii p_n = 4 sqrt(R0) / (m (lambda_a + beta^2 lambda_b)) and
/// q_n = p_n^2 + beta p_n.
inline PqPair pq_bounds(double R0, int m, double lambda_a, double lambda_b, double beta) {
  if (R0 < 0.0) throw std::invalid_argument("pq_bounds: R0 must be >= 0");
  const double lam = lambda_a + beta * beta * lambda_b;
  if (!(lam > 0.0)) throw std::invalid_argument("pq_bounds: lambda_a + beta^2 lambda_b must be > 0");
  PqPair pq;
  pq.p = 4.0 * std::sqrt(R0) / (m * lam);
  pq.q = pq.p * pq.p + beta * pq.p;
  return pq;
}

/// Exponential decay envelope exp(-m (lambda_a + beta^2 lambda_b) t) R0.
inline double decay_envelope(double R0, int m, double lambda_a, double lambda_b, double beta,
                             double t) {
  if (t < 0.0) throw std::invalid_argument("decay_envelope: t must be >= 0");
  return std::exp(-static_cast<double>(m) * (lambda_a + beta * beta * lambda_b) * t) * R0;
}

/// Initial-risk bound (1/2)(1 + c(delta) sqrt(m) beta)^2 with
/// c(delta) = 2 + sqrt(ln(1/delta)).
inline double init_risk_bound(int m, double beta, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("init_risk_bound: delta in (0,1)");
  const double c = 2.0 + std::sqrt(std::log(1.0 / delta));
  const double r = 1.0 + c * std::sqrt(static_cast<double>(m)) * beta;
  return 0.5 * r * r;
}

/// All run-level constants the bound evaluators need. Two c(delta)
/// conventions coexist in the source statements and are stored separately:
/// c_delta_init = 2 + sqrt(ln(1/delta)) (initial-risk bound) and
/// c_delta_coupling = 1 + sqrt(ln(1/delta)) (coupling bound). The deviation
/// constant is C_delta = 10 c_delta_init^2.
struct TheoryLedger {
  double lambda_a = 0.0;
  double lambda_b = 0.0;
  double lambda_n = 0.0;
  double delta = 0.1;
  double c_delta_init = 0.0;
  double c_delta_coupling = 0.0;
  double C_delta = 0.0;
  double R0 = 0.0;
  double p_n = 0.0;
  double q_n = 0.0;
  double beta = 0.0;
  int m = 0;
  int n = 0;
  double big_C = 1.0;  // unspecified absolute constant; trend checks only

  double lambda_beta() const { return lambda_a + beta * beta * lambda_b; }
  double neighborhood_radius() const { return 0.25 * lambda_beta(); }
};

inline TheoryLedger make_ledger(const SpectralSummary& spec, double delta, double R0, double beta,
                                int m, int n) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("ledger: delta in (0,1)");
  TheoryLedger led;
  led.lambda_a = spec.lambda_a;
  led.lambda_b = spec.lambda_b;
  led.lambda_n = spec.lambda_n;
  led.delta = delta;
  led.c_delta_init = 2.0 + std::sqrt(std::log(1.0 / delta));
  led.c_delta_coupling = 1.0 + std::sqrt(std::log(1.0 / delta));
  led.C_delta = 10.0 * led.c_delta_init * led.c_delta_init;
  led.R0 = R0;
  led.beta = beta;
  led.m = m;
  led.n = n;
  const PqPair pq = pq_bounds(R0, m, spec.lambda_a, spec.lambda_b, beta);
  led.p_n = pq.p;
  led.q_n = pq.q;
  return led;
}

inline nlohmann::json ledger_json(const TheoryLedger& led) {
  return {{"lambda_a", led.lambda_a},
          {"lambda_b", led.lambda_b},
          {"lambda_n", led.lambda_n},
          {"delta", led.delta},
          {"c_delta_init", led.c_delta_init},
          {"c_delta_coupling", led.c_delta_coupling},
          {"C_delta", led.C_delta},
          {"R0", led.R0},
          {"p_n", led.p_n},
          {"q_n", led.q_n},
          {"beta", led.beta},
          {"m", led.m},
          {"n", led.n},
          {"big_C", led.big_C}};
}

/// Width-dependence estimates for the deviation radii. Small-initialization
/// regime (beta <= 1):
///   p_n <= C/(sqrt(m) la) (1/sqrt(m) + beta)
///   q_n <= C/(m la^2) (1/m + 2 beta/sqrt(m) + beta^2) + C beta/(m la)
///          + C beta^2/(sqrt(m) la)
/// Large initialization (beta > 1): p_n <= C/sqrt(m la lb), q_n <= C/(sqrt(m) lb).
inline PqPair pq_regime_estimates(const TheoryLedger& led) {
  const double C = led.C_delta;
  const double la = led.lambda_a;
  const double lb = led.lambda_b;
  const double beta = led.beta;
  const double m = static_cast<double>(led.m);
  PqPair est;
  if (beta <= 1.0) {
    est.p = C / (std::sqrt(m) * la) * (1.0 / std::sqrt(m) + beta);
    est.q = C / (m * la * la) * (1.0 / m + 2.0 * beta / std::sqrt(m) + beta * beta) +
            C * beta / (m * la) + C * beta * beta / (std::sqrt(m) * la);
  } else {
    est.p = C / std::sqrt(m * la * lb);
    est.q = C / (std::sqrt(m) * lb);
  }
  return est;
}

/// Width threshold under which the regime estimates are stated:
/// m >= 1024 ln(n^2/delta) / lambda_n^2.
inline double pq_regime_width_floor(const TheoryLedger& led) {
  return 1024.0 * std::log(led.n * static_cast<double>(led.n) / led.delta) /
         (led.lambda_n * led.lambda_n);
}

struct DeviationReport {
  int a_flags = 0;          // logged steps with max_a_dev > 2 p_n
  int b_flags = 0;          // logged steps with max_b_dev > 2 q_n
  double worst_a_ratio = 0.0;
  double worst_b_ratio = 0.0;
  PqPair regime_estimate;   // width-dependence estimates at this ledger
  bool regime_width_ok = false;
  bool regime_consistent = false;  // p_n,q_n below their estimates
  bool clean() const { return a_flags == 0 && b_flags == 0; }
};

/// Audits a trajectory against the deviation radii: flags every logged step
/// where |a_k - a_k(0)| exceeds 2 p_n or ||b_k - b_k(0)|| exceeds 2 q_n, and
/// reports the width-regime estimates alongside.
inline DeviationReport deviation_bound_check(const TrajectoryLog& log, const TheoryLedger& led) {
  DeviationReport rep;
  const double pa = 2.0 * led.p_n;
  const double qb = 2.0 * led.q_n;
  for (const auto& row : log.rows) {
    if (row.max_a_dev > pa) ++rep.a_flags;
    if (row.max_b_dev > qb) ++rep.b_flags;
    if (pa > 0.0) rep.worst_a_ratio = std::max(rep.worst_a_ratio, row.max_a_dev / pa);
    if (qb > 0.0) rep.worst_b_ratio = std::max(rep.worst_b_ratio, row.max_b_dev / qb);
  }
  rep.regime_estimate = pq_regime_estimates(led);
  rep.regime_width_ok = led.m >= pq_regime_width_floor(led);
  rep.regime_consistent = led.p_n <= rep.regime_estimate.p && led.q_n <= rep.regime_estimate.q;
  return rep;
}

/// Frobenius distance of the Gram matrices between two parameter states.
inline double gram_drift(const NetParams& params_t, const NetParams& params_0,
                         const Eigen::MatrixXd& inputs) {
  if (params_t.m() != params_0.m() || params_t.d() != params_0.d())
    throw std::invalid_argument("gram_drift: shape mismatch");
  return (gram_matrices(params_t, inputs).G - gram_matrices(params_0, inputs).G).norm();
}

/// First logged time at which the drift leaves the 0.25(la + beta^2 lb)
/// neighborhood; +infinity when the trajectory never exits.
inline double exit_time(const std::vector<std::pair<double, double>>& drift_series,
                        const TheoryLedger& led) {
  const double radius = led.neighborhood_radius();
  for (const auto& [t, drift] : drift_series) {
    if (drift > radius) return t;
  }
  return std::numeric_limits<double>::infinity();
}

struct EnvelopeReport {
  int violations = 0;
  double worst_ratio = 0.0;  // max over logged steps of risk / envelope
  bool clean() const { return violations == 0; }
};

/// Trajectory risk against the exponential envelope. The discrete iterate at
/// step s is compared to the envelope at t = eta (s-1): one explicit-Euler
/// step lags the continuous flow it discretizes, which is the documented
/// O(eta) slack.
inline EnvelopeReport risk_envelope_check(const TrajectoryLog& log, const TheoryLedger& led,
                                          double eta) {
  EnvelopeReport rep;
  for (const auto& row : log.rows) {
    const double t_lag = std::max(0.0, row.t - eta);
    const double env = decay_envelope(led.R0, led.m, led.lambda_a, led.lambda_b, led.beta, t_lag);
    const double ratio = env > 0.0 ? row.train_risk / env : (row.train_risk > 0.0 ? 1e300 : 0.0);
    rep.worst_ratio = std::max(rep.worst_ratio, ratio);
    if (row.train_risk > env * (1.0 + 1e-9)) ++rep.violations;
  }
  return rep;
}

/// Coupling-gap bound c^2(delta)/lambda_a (1/sqrt(m) + beta + sqrt(m) beta^3)
/// with c(delta) = 1 + sqrt(ln(1/delta)). Used for scaling checks only.
inline double coupling_gap_bound(const TheoryLedger& led) {
  const double m = static_cast<double>(led.m);
  const double c = led.c_delta_coupling;
  return c * c / led.lambda_a *
         (1.0 / std::sqrt(m) + led.beta + std::sqrt(m) * led.beta * led.beta * led.beta);
}

/// Representative outer weights a*_k = astar(b_k(0))/m for a target with an
/// integral representation; satisfies ||a*|| <= gamma/sqrt(m) by construction.
inline Eigen::VectorXd a_star_construct(const Eigen::MatrixXd& B0, const TargetFunction& target) {
  if (target.kind != TargetFunction::Kind::BarronDensity)
    throw std::invalid_argument("a_star_construct: target must carry a coefficient function");
  const int m = static_cast<int>(B0.rows());
  Eigen::VectorXd a_star(m);
  for (int k = 0; k < m; ++k) {
    const double c = target.coef(B0.row(k).transpose());
    if (std::abs(c) > target.gamma + 1e-12)
      throw std::invalid_argument("a_star_construct: |a*(b_k)| exceeds gamma");
    a_star[k] = c / m;
  }
  return a_star;
}

/// Population squared error ||f - f*||^2 (no 1/2 factor) by Monte-Carlo; the
/// convention of the representative-risk bound, kept separate from the 1/2
/// empirical convention on purpose.
inline PopulationRisk population_sq_error_mc(const Eigen::VectorXd& a, const Eigen::MatrixXd& B0,
                                             const TargetFunction& target, int n_test,
                                             std::uint64_t seed, int quadrature_size = 1000) {
  NetParams p;
  p.a = a;
  p.B = B0;
  PopulationRisk r = population_risk_mc(p, target, n_test, seed, quadrature_size);
  r.value *= 2.0;
  r.stderr_ *= 2.0;
  return r;
}

/// Representative population-error bound (gamma^2/m)(1 + sqrt(2 ln(1/delta)))^2.
inline double a_star_risk_bound(double gamma, int m, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("a_star_risk_bound: delta");
  const double r = 1.0 + std::sqrt(2.0 * std::log(1.0 / delta));
  return gamma * gamma / m * r * r;
}

/// Uniform generalization gap for the frozen-layer model:
/// 2 (2 sqrt(m)||a|| + 1)^2 / sqrt(n) * (1 + sqrt(2 ln((2/delta)(||a|| + 1/||a||)))).
inline double rad_gen_bound(double a_norm, int m, int n, double delta) {
  if (!(a_norm > 0.0))
    throw std::invalid_argument("rad_gen_bound: a_norm must be > 0 (use a tiny floor)");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("rad_gen_bound: delta in (0,1)");
  const double lead = 2.0 * std::pow(2.0 * std::sqrt(static_cast<double>(m)) * a_norm + 1.0, 2) /
                      std::sqrt(static_cast<double>(n));
  const double logterm =
      1.0 + std::sqrt(2.0 * std::log((2.0 / delta) * (a_norm + 1.0 / a_norm)));
  return lead * logterm;
}

/// Early-stopping population-risk bound at time t (constant big_C from the
/// ledger, default 1; shape/trend use only):
///   C ( 1/m + 1/(mt) + (1/sqrt(n)) F^2 + (t^2/m^2)(1+mt)^2 (1 + (t^2/m^2)(t+m)^4) F^2 )
/// with F = 1 + sqrt(t) + sqrt(mt)/n^{1/4}.
inline double early_stop_bound(int m, int n, double t, const TheoryLedger& led) {
  if (!(t > 0.0)) throw std::invalid_argument("early_stop_bound: t must be > 0");
  const double md = static_cast<double>(m);
  const double nd = static_cast<double>(n);
  const double F = 1.0 + std::sqrt(t) + std::sqrt(md * t) / std::pow(nd, 0.25);
  const double tail = (t * t / (md * md)) * std::pow(1.0 + md * t, 2) *
                      (1.0 + (t * t / (md * md)) * std::pow(t + md, 4)) * F * F;
  return led.big_C * (1.0 / md + 1.0 / (md * t) + F * F / std::sqrt(nd) + tail);
}

struct Schedule {
  double t = 0.0;
  double rate_exponent = 0.0;  // predicted population risk ~ n^{-rate_exponent}
};

/// Width/time schedule for m = n^p: below p = 7/8 stop at t = n^{-3p/7} for
/// rate n^{-4p/7}; above, stop at t = n^{-p+1/2} for the saturated rate
/// n^{-1/2}.
inline Schedule schedule_from_corollary(int n, double p) {
  if (p < 0.0) throw std::invalid_argument("schedule_from_corollary: p must be >= 0");
  const double nd = static_cast<double>(n);
  Schedule s;
  if (p <= 7.0 / 8.0) {
    s.t = std::pow(nd, -3.0 * p / 7.0);
    s.rate_exponent = 4.0 * p / 7.0;
  } else {
    s.t = std::pow(nd, -p + 0.5);
    s.rate_exponent = 0.5;
  }
  return s;
}

/// Lyapunov functional J(t) = t (risk_t - risk_star) + 0.5 ||a_t - a*||^2,
/// non-increasing along the frozen-layer flow up to Euler slack.
inline double lyapunov_J(const Eigen::VectorXd& a_t, const Eigen::VectorXd& a_star, double risk_t,
                         double risk_star, double t) {
  if (t < 0.0) throw std::invalid_argument("lyapunov_J: t must be >= 0");
  if (a_t.size() != a_star.size()) throw std::invalid_argument("lyapunov_J: size mismatch");
  return t * (risk_t - risk_star) + 0.5 * (a_t - a_star).squaredNorm();
}

/// One serialized verdict from a bound check.
struct CheckReport {
  std::string claim_id;
  std::string statement;       // human-readable form of the inequality checked
  nlohmann::json values;       // the numbers that entered the verdict
  double threshold = 0.0;
  bool pass = false;
  int trials = 0;              // for frequency checks; 0 for single-shot
  int failures = 0;

  nlohmann::json to_json() const {
    return {{"claim_id", claim_id}, {"statement", statement}, {"values", values},
            {"threshold", threshold}, {"pass", pass},        {"trials", trials},
            {"failures", failures}};
  }
};

}  // namespace lazylab
