#pragma once

// Explicit-Euler time integration of the three training flows: full network
// gradient descent, frozen-first-layer (random feature) descent, and
// path-norm-regularized subgradient descent. Continuous time is t = eta*step,
// so bounds stated in t apply to the logged grid directly.

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lazylab/dataset.hpp"
#include "lazylab/model.hpp"

namespace lazylab {

struct RunConfig {
  double eta = 0.0;
  long max_steps = 1;
  long log_every = 1;
  std::optional<double> stop_risk;  // stop once training risk falls below
  std::optional<double> stop_time;  // stop once t = eta*step reaches

  void validate() const {
    if (!(eta > 0.0)) throw std::invalid_argument("run config: eta must be positive");
    if (max_steps < 1) throw std::invalid_argument("run config: max_steps must be >= 1");
    if (log_every < 1) throw std::invalid_argument("run config: log_every must be >= 1");
  }
};

enum class StopReason { risk_reached, time_reached, budget_exhausted, diverged };

inline const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::risk_reached: return "risk-reached";
    case StopReason::time_reached: return "time-reached";
    case StopReason::budget_exhausted: return "budget-exhausted";
    case StopReason::diverged: return "diverged";
  }
  return "?";
}

struct LogRow {
  long step = 0;
  double t = 0.0;
  double train_risk = 0.0;
  std::optional<double> test_risk;
  double max_a_dev = 0.0;
  double max_b_dev = 0.0;
  double path_norm = 0.0;
  std::optional<double> gram_drift;
  std::optional<double> sup_gap;
  double lyap_slack = 0.0;  // cumulative (eta^2/2) sum ||grad||^2; not serialized
};

struct TrajectoryLog {
  std::vector<LogRow> rows;

  static std::string csv_header() {
    return "step,t,train_risk,test_risk,max_a_dev,max_b_dev,path_norm,gram_drift,sup_gap";
  }

  std::string to_csv() const {
    std::string out = csv_header() + "\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& r : rows) {
      out += std::to_string(r.step) + "," + format_double(r.t) + "," +
             format_double(r.train_risk) + "," + opt(r.test_risk) + "," +
             format_double(r.max_a_dev) + "," + format_double(r.max_b_dev) + "," +
             format_double(r.path_norm) + "," + opt(r.gram_drift) + "," + opt(r.sup_gap) + "\n";
    }
    return out;
  }
};

/// Optional per-log-point instrumentation. Everything here is evaluated only
/// on the logging grid, never inside the step loop.
struct LogHooks {
  std::function<double(const NetParams&)> test_risk;
  std::function<double(const Eigen::VectorXd&)> test_risk_rf;  // frozen-layer runs
  // May return nullopt to skip expensive drift evaluation at some log points.
  std::function<std::optional<double>(long /*step*/, const NetParams&)> gram_drift;
  std::function<void(long /*step*/, double /*t*/, const NetParams&)> on_log;
  std::function<void(long /*step*/, double /*t*/, const Eigen::VectorXd&)> on_log_rf;
};

struct TrainResult {
  NetParams params;
  TrajectoryLog log;
  StopReason reason = StopReason::budget_exhausted;
  long steps = 0;
};

struct RfTrainResult {
  Eigen::VectorXd a;
  TrajectoryLog log;
  StopReason reason = StopReason::budget_exhausted;
  long steps = 0;
};

namespace detail {

/// Divergence is growth past 1e6 relative to the initial risk (large-beta
/// initializations legitimately start huge), or any non-finite value.
inline bool diverged(double risk, double initial_risk) {
  return !std::isfinite(risk) || risk > 1e6 * std::max(1.0, initial_risk);
}

inline bool should_stop(const RunConfig& cfg, double risk, double t, long step, StopReason* why) {
  if (cfg.stop_risk && risk <= *cfg.stop_risk) {
    *why = StopReason::risk_reached;
    return true;
  }
  if (cfg.stop_time && t >= *cfg.stop_time - 1e-12) {
    *why = StopReason::time_reached;
    return true;
  }
  if (step >= cfg.max_steps) {
    *why = StopReason::budget_exhausted;
    return true;
  }
  return false;
}

/// Shared Euler loop for the plain and path-norm-penalized network flows.
/// penalty_coef = 0 gives exactly the unpenalized dynamics; otherwise each
/// step adds the subgradient of penalty_coef * path_norm (sign(a_k)||b_k||
/// for a_k, |a_k| b_k/||b_k|| for b_k, both taken as 0 at 0).
inline TrainResult euler_loop(const NetParams& params0, const Dataset& data, const RunConfig& cfg,
                              const LogHooks& hooks, double penalty_coef) {
  cfg.validate();
  data.validate();
  if (params0.d() != data.d()) throw std::invalid_argument("train: dimension mismatch");

  const int n = data.n();
  const int m = params0.m();
  const int d = params0.d();
  TrainResult res;
  res.params = params0;
  Eigen::VectorXd& a = res.params.a;
  Eigen::MatrixXd& B = res.params.B;

  Eigen::MatrixXd Z(m, n), S(m, n), M(m, n), MX(m, d), GB(m, d);
  Eigen::VectorXd e(n), ga(m), bn(m);

  double initial_risk = -1.0;
  auto log_state = [&](long step, double risk) {
    LogRow row;
    row.step = step;
    row.t = cfg.eta * step;
    row.train_risk = risk;
    const Deviation dev = param_deviation(res.params, params0);
    row.max_a_dev = dev.max_a;
    row.max_b_dev = dev.max_b;
    row.path_norm = path_norm(res.params);
    if (hooks.test_risk) row.test_risk = hooks.test_risk(res.params);
    if (hooks.gram_drift) row.gram_drift = hooks.gram_drift(step, res.params);
    res.log.rows.push_back(row);
    if (hooks.on_log) hooks.on_log(step, row.t, res.params);
  };

  for (long step = 0;; ++step) {
    Z.noalias() = B * data.X.transpose();
    S = Z.cwiseMax(0.0);
    e.noalias() = S.transpose() * a;
    e -= data.y;
    const double risk = e.squaredNorm() / (2.0 * n);
    if (step == 0) initial_risk = risk;

    if (detail::diverged(risk, initial_risk)) {
      log_state(step, risk);
      res.reason = StopReason::diverged;
      res.steps = step;
      return res;
    }
    StopReason why;
    if (detail::should_stop(cfg, risk, cfg.eta * step, step, &why)) {
      log_state(step, risk);
      res.reason = why;
      res.steps = step;
      return res;
    }
    if (step % cfg.log_every == 0) log_state(step, risk);

    ga.noalias() = S * e / n;
    M = (Z.array() > 0.0).cast<double>();
    M.array().rowwise() *= e.transpose().array();
    MX.noalias() = M * data.X;
    if (penalty_coef > 0.0) {
      bn = B.rowwise().norm();
      GB.noalias() = (1.0 / n) * (a.asDiagonal() * MX);
      for (int k = 0; k < m; ++k) {
        const double sgn = a[k] > 0.0 ? 1.0 : (a[k] < 0.0 ? -1.0 : 0.0);
        ga[k] += penalty_coef * sgn * bn[k];
        if (bn[k] > 0.0) GB.row(k) += (penalty_coef * std::abs(a[k]) / bn[k]) * B.row(k);
      }
      B -= cfg.eta * GB;
      a -= cfg.eta * ga;
    } else {
      // B update first so it reads the pre-step a (simultaneous Euler update).
      B.noalias() -= (cfg.eta / n) * (a.asDiagonal() * MX);
      a -= cfg.eta * ga;
    }
  }
}

}  // namespace detail

/// Gradient descent on the 1/(2n) empirical risk.
inline TrainResult train_nn(const NetParams& params0, const Dataset& data, const RunConfig& cfg,
                            const LogHooks& hooks = {}) {
  return detail::euler_loop(params0, data, cfg, hooks, 0.0);
}

/// Subgradient descent on risk + lambda sqrt(ln(d)/n) * path_norm.
inline TrainResult train_regularized(const NetParams& params0, const Dataset& data, double lambda,
                                     const RunConfig& cfg, const LogHooks& hooks = {}) {
  if (lambda < 0.0) throw std::invalid_argument("train_regularized: lambda must be >= 0");
  if (params0.d() < 2) throw std::invalid_argument("train_regularized: d must be >= 2");
  const double coef = lambda * std::sqrt(std::log(static_cast<double>(params0.d())) / data.n());
  return detail::euler_loop(params0, data, cfg, hooks, coef);
}

/// Frozen-first-layer descent: d a/dt = -(1/n) S0 (S0^T a - y) with
/// S0 = relu(B0 X^T) fixed. Logs deviations against a0 (the b-deviation is
/// identically 0) and accumulates the Euler slack (eta^2/2) sum ||grad||^2
/// used by the Lyapunov monotonicity check.
inline RfTrainResult train_rf(const Eigen::VectorXd& a0, const Eigen::MatrixXd& B0,
                              const Dataset& data, const RunConfig& cfg,
                              const LogHooks& hooks = {}) {
  cfg.validate();
  data.validate();
  if (a0.size() != B0.rows()) throw std::invalid_argument("train_rf: a0/B0 mismatch");
  if (B0.cols() != data.d()) throw std::invalid_argument("train_rf: dimension mismatch");

  const int n = data.n();
  const Eigen::MatrixXd S0 = feature_matrix(B0, data.X);  // m x n, fixed
  const Eigen::VectorXd b0_norms = B0.rowwise().norm();

  RfTrainResult res;
  res.a = a0;
  Eigen::VectorXd e(n), grad(a0.size());
  double slack = 0.0;
  double initial_risk = -1.0;

  auto log_state = [&](long step, double risk) {
    LogRow row;
    row.step = step;
    row.t = cfg.eta * step;
    row.train_risk = risk;
    row.max_a_dev = (res.a - a0).cwiseAbs().maxCoeff();
    row.max_b_dev = 0.0;
    row.path_norm = (res.a.cwiseAbs().array() * b0_norms.array()).sum();
    row.lyap_slack = slack;
    if (hooks.test_risk_rf) row.test_risk = hooks.test_risk_rf(res.a);
    res.log.rows.push_back(row);
    if (hooks.on_log_rf) hooks.on_log_rf(step, row.t, res.a);
  };

  for (long step = 0;; ++step) {
    e.noalias() = S0.transpose() * res.a;
    e -= data.y;
    const double risk = e.squaredNorm() / (2.0 * n);
    if (step == 0) initial_risk = risk;

    if (detail::diverged(risk, initial_risk)) {
      log_state(step, risk);
      res.reason = StopReason::diverged;
      res.steps = step;
      return res;
    }
    StopReason why;
    if (detail::should_stop(cfg, risk, cfg.eta * step, step, &why)) {
      log_state(step, risk);
      res.reason = why;
      res.steps = step;
      return res;
    }
    if (step % cfg.log_every == 0) log_state(step, risk);

    grad.noalias() = S0 * e / n;
    slack += 0.5 * cfg.eta * cfg.eta * grad.squaredNorm();
    res.a -= cfg.eta * grad;
  }
}

struct CoupledResult {
  TrainResult nn;
  RfTrainResult rf;
  std::vector<std::pair<double, double>> gap_series;  // (t, sup-gap) on the log grid
};

/// Runs the network flow and the random feature flow from the same initial
/// function (a_tilde_0 = a0, B frozen at B0) on identical step grids, and
/// records the sup over {training inputs} union {probes} of the pointwise gap
/// |f_nn(x) - f_rf(x)| at every logged step. Stopping rules read the network
/// risk; both flows always take the same number of steps.
inline CoupledResult coupled_run(const NetParams& params0, const Dataset& data,
                                 const RunConfig& cfg, const Eigen::MatrixXd& probes,
                                 const LogHooks& hooks = {}) {
  cfg.validate();
  data.validate();
  if (probes.cols() != data.d()) throw std::invalid_argument("coupled_run: probe dimension");
  for (int i = 0; i < probes.rows(); ++i) {
    if (std::abs(probes.row(i).norm() - 1.0) > 1e-9)
      throw std::invalid_argument("coupled_run: probes must be unit norm");
  }

  // Evaluation set: training inputs stacked with the probe points.
  Eigen::MatrixXd P(data.n() + probes.rows(), data.d());
  P.topRows(data.n()) = data.X;
  P.bottomRows(probes.rows()) = probes;

  const int n = data.n();
  const int m = params0.m();
  const Eigen::MatrixXd S0 = feature_matrix(params0.B, data.X);
  const Eigen::MatrixXd S0p = feature_matrix(params0.B, P);
  const Eigen::VectorXd b0_norms = params0.B.rowwise().norm();

  CoupledResult res;
  res.nn.params = params0;
  res.rf.a = params0.a;
  Eigen::VectorXd& a = res.nn.params.a;
  Eigen::MatrixXd& B = res.nn.params.B;
  Eigen::VectorXd& ar = res.rf.a;

  Eigen::MatrixXd Z(m, n), S(m, n), M(m, n), MX(m, data.d());
  Eigen::VectorXd e(n), er(n), ga(m), gr(m);
  double slack = 0.0;
  double initial_risk = -1.0;

  auto log_both = [&](long step, double risk_nn, double risk_rf) {
    const double t = cfg.eta * step;
    const Eigen::VectorXd fn = feature_matrix(B, P).transpose() * a;
    const Eigen::VectorXd fr = S0p.transpose() * ar;
    const double gap = (fn - fr).cwiseAbs().maxCoeff();
    res.gap_series.emplace_back(t, gap);

    LogRow rn;
    rn.step = step;
    rn.t = t;
    rn.train_risk = risk_nn;
    const Deviation dev = param_deviation(res.nn.params, params0);
    rn.max_a_dev = dev.max_a;
    rn.max_b_dev = dev.max_b;
    rn.path_norm = path_norm(res.nn.params);
    rn.sup_gap = gap;
    if (hooks.test_risk) rn.test_risk = hooks.test_risk(res.nn.params);
    if (hooks.gram_drift) rn.gram_drift = hooks.gram_drift(step, res.nn.params);
    res.nn.log.rows.push_back(rn);
    if (hooks.on_log) hooks.on_log(step, t, res.nn.params);

    LogRow rr;
    rr.step = step;
    rr.t = t;
    rr.train_risk = risk_rf;
    rr.max_a_dev = (ar - params0.a).cwiseAbs().maxCoeff();
    rr.max_b_dev = 0.0;
    rr.path_norm = (ar.cwiseAbs().array() * b0_norms.array()).sum();
    rr.sup_gap = gap;
    rr.lyap_slack = slack;
    if (hooks.test_risk_rf) rr.test_risk = hooks.test_risk_rf(ar);
    res.rf.log.rows.push_back(rr);
    if (hooks.on_log_rf) hooks.on_log_rf(step, t, ar);
  };

  for (long step = 0;; ++step) {
    Z.noalias() = B * data.X.transpose();
    S = Z.cwiseMax(0.0);
    e.noalias() = S.transpose() * a;
    e -= data.y;
    er.noalias() = S0.transpose() * ar;
    er -= data.y;
    const double risk_nn = e.squaredNorm() / (2.0 * n);
    const double risk_rf = er.squaredNorm() / (2.0 * n);
    if (step == 0) initial_risk = risk_nn;

    if (detail::diverged(risk_nn, initial_risk) || detail::diverged(risk_rf, initial_risk)) {
      log_both(step, risk_nn, risk_rf);
      res.nn.reason = res.rf.reason = StopReason::diverged;
      res.nn.steps = res.rf.steps = step;
      return res;
    }
    StopReason why;
    if (detail::should_stop(cfg, risk_nn, cfg.eta * step, step, &why)) {
      log_both(step, risk_nn, risk_rf);
      res.nn.reason = res.rf.reason = why;
      res.nn.steps = res.rf.steps = step;
      return res;
    }
    if (step % cfg.log_every == 0) log_both(step, risk_nn, risk_rf);

    ga.noalias() = S * e / n;
    M = (Z.array() > 0.0).cast<double>();
    M.array().rowwise() *= e.transpose().array();
    MX.noalias() = M * data.X;
    B.noalias() -= (cfg.eta / n) * (a.asDiagonal() * MX);
    a -= cfg.eta * ga;

    gr.noalias() = S0 * er / n;
    slack += 0.5 * cfg.eta * cfg.eta * gr.squaredNorm();
    ar -= cfg.eta * gr;
  }
}

}  // namespace lazylab
