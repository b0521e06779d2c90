#pragma once

// Experiment presets and the artifact pipeline: resolved configurations with
// stable hashes, a small worker pool over independent runs, per-run trajectory
// CSVs, a summary JSON, a MANIFEST covering every emitted file, and tidy
// long-format plot data. Every preset is deterministic given its seed list.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lazylab/dataset.hpp"
#include "lazylab/dynamics.hpp"
#include "lazylab/io.hpp"
#include "lazylab/kernels.hpp"
#include "lazylab/model.hpp"
#include "lazylab/rng.hpp"
#include "lazylab/theory.hpp"

namespace lazylab {

enum class Experiment {
  fit_random_labels,
  one_neuron,
  width_sweep,
  coupling_sweep,
  bound_audit,
};

inline const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::fit_random_labels: return "fit_random_labels";
    case Experiment::one_neuron: return "one_neuron";
    case Experiment::width_sweep: return "width_sweep";
    case Experiment::coupling_sweep: return "coupling_sweep";
    case Experiment::bound_audit: return "bound_audit";
  }
  return "?";
}

inline Experiment experiment_from_name(const std::string& name) {
  for (Experiment e : {Experiment::fit_random_labels, Experiment::one_neuron,
                       Experiment::width_sweep, Experiment::coupling_sweep,
                       Experiment::bound_audit}) {
    if (name == experiment_name(e)) return e;
  }
  throw std::invalid_argument("unknown experiment: " + name);
}

/// Process exit codes shared by the runner and the CLI.
struct ExitCode {
  static constexpr int ok = 0;
  static constexpr int config_error = 2;
  static constexpr int diverged = 3;
  static constexpr int budget_exhausted = 4;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::fit_random_labels;
  int n = 50;
  int d = 50;
  std::vector<int> m_list{10000};
  std::vector<double> beta_list;       // empty: preset rule (ladder / 1/sqrt(m) / 0)
  double eta = 0.0;                    // <= 0: auto, min(0.01, 1/(m lmax(G0)))
  std::vector<std::uint64_t> seed_list{1};
  double stop_risk = 0.0;              // <= 0: unset
  double stop_time = 0.0;              // <= 0: unset
  long max_steps = 100000;
  long log_every = 10;
  double lambda = 0.0;                 // width_sweep: path-norm strength
  std::vector<double> reg_stop_time;   // width_sweep: per-width time budgets
  int test_samples = 0;                // fresh test points for test-risk columns
  int probe_count = 0;                 // coupling_sweep: fresh sup-gap probes
  long gram_every = 0;                 // measure Gram drift every k-th log point
  double delta = 0.1;                  // confidence level for audit reports
  std::string out_dir = "artifacts";
  int workers = 1;
  bool reproducible = false;

  void validate() const {
    if (n < 1 || d < 1) throw std::invalid_argument("config: n and d must be >= 1");
    if (m_list.empty()) throw std::invalid_argument("config: m_list must be non-empty");
    for (int m : m_list)
      if (m < 1) throw std::invalid_argument("config: every width must be >= 1");
    if (seed_list.empty()) throw std::invalid_argument("config: seed_list must be non-empty");
    if (eta > 0.0 && !(eta < 1e6)) throw std::invalid_argument("config: eta out of range");
    if (max_steps < 1) throw std::invalid_argument("config: max_steps must be >= 1");
    if (log_every < 1) throw std::invalid_argument("config: log_every must be >= 1");
    if (lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
    if (!reg_stop_time.empty() && reg_stop_time.size() != m_list.size())
      throw std::invalid_argument("config: reg_stop_time must match m_list length");
    if (test_samples < 0) throw std::invalid_argument("config: test_samples must be >= 0");
    if (probe_count < 0) throw std::invalid_argument("config: probe_count must be >= 0");
    if (gram_every < 0) throw std::invalid_argument("config: gram_every must be >= 0");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("config: delta in (0,1)");
    if (out_dir.empty()) throw std::invalid_argument("config: output directory required");
    if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
  }
};

/// Preset defaults. Documented substitutes (values the presets fix that are
/// tool choices): the six-beta ladder of fit_random_labels, the width grid
/// and per-width regularized time budgets of width_sweep, and the one-neuron
/// target direction e1.
inline ExperimentConfig default_config(Experiment e) {
  ExperimentConfig cfg;
  cfg.experiment = e;
  switch (e) {
    case Experiment::fit_random_labels:
      cfg.n = 50;
      cfg.d = 50;
      cfg.m_list = {10000};
      cfg.stop_risk = 1e-8;
      cfg.max_steps = 100000;
      cfg.log_every = 10;
      cfg.gram_every = 10;
      break;
    case Experiment::one_neuron:
      cfg.n = 50;
      cfg.d = 10;
      cfg.m_list = {4, 50, 1000};
      cfg.beta_list = {0.0};
      cfg.eta = 0.01;
      cfg.stop_time = 2000.0;
      cfg.max_steps = 400000;
      cfg.log_every = 500;
      cfg.test_samples = 10000;
      break;
    case Experiment::width_sweep:
      cfg.n = 50;
      cfg.d = 10;
      cfg.m_list = {4, 16, 64, 256, 1024};
      cfg.beta_list = {0.0};
      cfg.stop_risk = 1e-5;
      cfg.max_steps = 4000000;
      cfg.log_every = 1000;
      cfg.lambda = 0.01;
      cfg.reg_stop_time = {6000.0, 6000.0, 6000.0, 6000.0, 6000.0};
      cfg.test_samples = 10000;
      break;
    case Experiment::coupling_sweep:
      cfg.n = 50;
      cfg.d = 10;
      cfg.m_list = {1000, 4000, 16000};
      cfg.seed_list = {1, 2, 3};
      cfg.stop_time = 20.0;
      cfg.max_steps = 100000;
      cfg.log_every = 1;  // recomputed per run to a log spacing of Delta-t = 2
      cfg.probe_count = 100;
      break;
    case Experiment::bound_audit:
      cfg.n = 50;
      cfg.d = 50;
      cfg.m_list = {10000};
      cfg.beta_list = {1.0};
      cfg.stop_risk = 1e-3;
      cfg.max_steps = 50000;
      cfg.log_every = 10;
      cfg.gram_every = 10;
      break;
  }
  return cfg;
}

namespace detail {

inline std::vector<double> json_number_list(const nlohmann::json& v, const std::string& key) {
  if (!v.is_array()) throw std::invalid_argument("config: " + key + " must be an array");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw std::invalid_argument("config: " + key + " entries must be numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

/// "1e+06" -> "1e06", "0.0001" -> "0p0001", "-2" -> "m2": filesystem-safe
/// number labels for run ids and series names.
inline std::string number_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  std::string out;
  for (const char* c = buf; *c; ++c) {
    if (*c == '.') out += 'p';
    else if (*c == '-') out += 'm';
    else if (*c == '+') continue;
    else out += *c;
  }
  return out;
}

/// Plain short form for series labels ("0.0001", "100").
inline std::string number_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

/// The six-magnitude initialization ladder used by fit_random_labels.
inline std::vector<double> beta_ladder(int m) {
  const double md = static_cast<double>(m);
  return {1.0 / md, 1.0 / std::sqrt(md), std::pow(md, -0.25), 1.0, std::sqrt(md), md};
}

/// Runs tasks on up to `workers` threads; rethrows the first captured error.
inline void run_pool(int workers, std::vector<std::function<void()>>& tasks) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(tasks.size());
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int k = std::min<int>(workers, static_cast<int>(tasks.size()));
  if (k <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(k));
    for (int w = 0; w < k; ++w) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Applies a JSON override document on top of a config. Unknown keys and type
/// mismatches are config errors.
inline void apply_overrides(ExperimentConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: document must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "experiment") {
      if (experiment_from_name(value.get<std::string>()) != cfg.experiment)
        throw std::invalid_argument("config: experiment name does not match the command");
    } else if (key == "n") {
      cfg.n = value.get<int>();
    } else if (key == "d") {
      cfg.d = value.get<int>();
    } else if (key == "m_list") {
      cfg.m_list.clear();
      for (double v : detail::json_number_list(value, key))
        cfg.m_list.push_back(static_cast<int>(v));
    } else if (key == "beta_list") {
      cfg.beta_list = detail::json_number_list(value, key);
    } else if (key == "eta") {
      cfg.eta = value.get<double>();
    } else if (key == "seed_list") {
      cfg.seed_list.clear();
      for (double v : detail::json_number_list(value, key))
        cfg.seed_list.push_back(static_cast<std::uint64_t>(v));
    } else if (key == "stop_risk") {
      cfg.stop_risk = value.get<double>();
    } else if (key == "stop_time") {
      cfg.stop_time = value.get<double>();
    } else if (key == "max_steps") {
      cfg.max_steps = value.get<long>();
    } else if (key == "log_every") {
      cfg.log_every = value.get<long>();
    } else if (key == "lambda") {
      cfg.lambda = value.get<double>();
    } else if (key == "reg_stop_time") {
      cfg.reg_stop_time = detail::json_number_list(value, key);
    } else if (key == "test_samples") {
      cfg.test_samples = value.get<int>();
    } else if (key == "probe_count") {
      cfg.probe_count = value.get<int>();
    } else if (key == "gram_every") {
      cfg.gram_every = value.get<long>();
    } else if (key == "delta") {
      cfg.delta = value.get<double>();
    } else if (key == "out") {
      cfg.out_dir = value.get<std::string>();
    } else if (key == "workers") {
      cfg.workers = value.get<int>();
    } else if (key == "reproducible") {
      cfg.reproducible = value.get<bool>();
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
}

/// Fully resolved configuration as JSON; hashing this gives the config hash
/// that stamps every artifact. Execution details that cannot change the
/// numbers (output directory, worker count, reproducible flag) are deliberately
/// excluded, so moving an artifact tree or rerunning on a different machine
/// shape does not change its identity.
inline nlohmann::json config_json(const ExperimentConfig& cfg) {
  return {{"experiment", experiment_name(cfg.experiment)},
          {"n", cfg.n},
          {"d", cfg.d},
          {"m_list", cfg.m_list},
          {"beta_list", cfg.beta_list},
          {"eta", cfg.eta},
          {"seed_list", cfg.seed_list},
          {"stop_risk", cfg.stop_risk},
          {"stop_time", cfg.stop_time},
          {"max_steps", cfg.max_steps},
          {"log_every", cfg.log_every},
          {"lambda", cfg.lambda},
          {"reg_stop_time", cfg.reg_stop_time},
          {"test_samples", cfg.test_samples},
          {"probe_count", cfg.probe_count},
          {"gram_every", cfg.gram_every},
          {"delta", cfg.delta}};
}

/// Step-size rule when none is configured: eta = min(0.01, 1/(m lmax(G(0)))).
/// The 1/(m lmax) part keeps the explicit Euler step well inside the
/// 2/(m lmax) stability threshold of the local quadratic model; the 0.01 cap
/// matches the fixed learning rate used at small scale.
inline double auto_eta(const NetParams& params0, const Dataset& data) {
  const GramPair g0 = gram_matrices(params0, data.X);
  const double lmax = max_eigenvalue(g0.G);
  if (!(lmax > 0.0)) return 0.01;
  return std::min(0.01, 1.0 / (params0.m() * lmax));
}

struct RunRecord {
  std::string id;
  std::string file;      // path relative to the artifact dir
  std::string kind;      // "nn", "rf", or "reg"
  int m = 0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double eta = 0.0;
  long steps = 0;
  std::string stop_reason;
  double final_train_risk = 0.0;
  std::optional<double> final_test_risk;
  double final_path_norm = 0.0;
  std::optional<double> terminal_sup_gap;
  double wall_seconds = 0.0;  // omitted from the summary in reproducible mode
};

struct ExperimentResult {
  std::string dir;
  std::vector<RunRecord> runs;
  std::vector<CheckReport> checks;
  std::vector<std::string> notes;
  int exit_code = ExitCode::ok;
};

namespace detail {

inline RunConfig base_run_config(const ExperimentConfig& cfg) {
  RunConfig rc;
  rc.max_steps = cfg.max_steps;
  rc.log_every = cfg.log_every;
  if (cfg.stop_risk > 0.0) rc.stop_risk = cfg.stop_risk;
  if (cfg.stop_time > 0.0) rc.stop_time = cfg.stop_time;
  return rc;
}

inline void fill_record_tail(RunRecord& rec, const TrajectoryLog& log, StopReason reason,
                             long steps) {
  rec.steps = steps;
  rec.stop_reason = stop_reason_name(reason);
  if (!log.rows.empty()) {
    const LogRow& last = log.rows.back();
    rec.final_train_risk = last.train_risk;
    rec.final_test_risk = last.test_risk;
    rec.final_path_norm = last.path_norm;
    rec.terminal_sup_gap = last.sup_gap;
  }
}

/// Test-risk hooks against a fixed test set. The frozen-layer variant keeps a
/// precomputed feature matrix so each log point costs one mat-vec.
struct TestEval {
  const Dataset* test = nullptr;
  Eigen::MatrixXd S_test;  // m x n_test

  void attach(LogHooks& hooks, const Eigen::MatrixXd& B0) {
    if (!test) return;
    S_test = feature_matrix(B0, test->X);
    const Dataset* ds = test;
    const Eigen::MatrixXd* st = &S_test;
    hooks.test_risk = [ds](const NetParams& p) { return empirical_risk(p, *ds); };
    hooks.test_risk_rf = [ds, st](const Eigen::VectorXd& a) {
      return (st->transpose() * a - ds->y).squaredNorm() / (2.0 * ds->n());
    };
  }
};

}  // namespace detail

/// The bound-audit battery: every theory evaluator exercised on one trained
/// preset instance, each verdict serialized as a CheckReport.
inline std::vector<CheckReport> audit_checks(const ExperimentConfig& cfg,
                                                     const Dataset& train, int m, double beta,
                                                     std::uint64_t init_seed,
                                                     const TrainResult& trained, double eta,
                                                     std::uint64_t seed) {
  std::vector<CheckReport> out;
  const double delta = cfg.delta;
  const NetParams params0 = init_params({m, cfg.d, beta, init_seed});

  const KernelPair kp = kernel_matrices(train.X, KernelMode::closed_form());
  const SpectralSummary spec = spectral_summary(kp);
  {
    CheckReport c;
    c.claim_id = "kernel-assumption";
    c.statement = "both normalized kernel matrices are strictly positive definite";
    c.values = {{"lambda_a", spec.lambda_a}, {"lambda_b", spec.lambda_b},
                {"lambda_n", spec.lambda_n}};
    c.threshold = 0.0;
    c.pass = spec.lambda_n > 0.0;
    out.push_back(c);
  }

  const double R0 =
      trained.log.rows.empty() ? empirical_risk(params0, train) : trained.log.rows[0].train_risk;
  const TheoryLedger led = make_ledger(spec, delta, R0, beta, m, train.n());

  {
    const IdentityCheck ic = gradient_norm_identity_check(params0, train);
    CheckReport c;
    c.claim_id = "identity-gradnorm";
    c.statement = "||grad risk||_F^2 equals (m/n) e^T G e at the initialization";
    c.values = {{"lhs", ic.lhs}, {"rhs", ic.rhs}};
    c.threshold = 1e-10 * std::max(1.0, ic.lhs);
    c.pass = std::abs(ic.lhs - ic.rhs) <= c.threshold;
    out.push_back(c);
  }
  {
    const double bound = init_risk_bound(m, beta, delta);
    CheckReport c;
    c.claim_id = "init-risk-bound";
    c.statement = "risk at initialization stays below (1/2)(1 + c(delta) sqrt(m) beta)^2";
    c.values = {{"risk0", R0}, {"bound", bound}};
    c.threshold = bound;
    c.pass = R0 <= bound;
    out.push_back(c);
  }
  {
    const GramPair g0 = gram_matrices(params0, train.X);
    const double lmin = min_eigenvalue(g0.G);
    const double floor = 0.75 * led.lambda_beta();
    CheckReport c;
    c.claim_id = "gram-min-eig";
    c.statement = "lmin(G(0)) >= (3/4)(lambda_a + beta^2 lambda_b)";
    c.values = {{"lmin_G0", lmin}, {"floor", floor}};
    c.threshold = floor;
    c.pass = lmin >= floor;
    out.push_back(c);
  }
  {
    const DeviationReport dev = deviation_bound_check(trained.log, led);
    CheckReport c;
    c.claim_id = "param-deviation";
    c.statement = "per-neuron deviations stay within 2 p_n (outer) and 2 q_n (inner)";
    c.values = {{"a_flags", dev.a_flags},
                {"b_flags", dev.b_flags},
                {"worst_a_ratio", dev.worst_a_ratio},
                {"worst_b_ratio", dev.worst_b_ratio},
                {"p_n", led.p_n},
                {"q_n", led.q_n},
                {"regime_width_ok", dev.regime_width_ok},
                {"regime_consistent", dev.regime_consistent}};
    c.threshold = 1.0;
    c.pass = dev.clean();
    out.push_back(c);
  }
  {
    const EnvelopeReport env = risk_envelope_check(trained.log, led, eta);
    CheckReport c;
    c.claim_id = "risk-envelope";
    c.statement = "logged risk never exceeds exp(-m(lambda_a + beta^2 lambda_b) t) R0 "
                  "(one Euler step of slack)";
    c.values = {{"violations", env.violations}, {"worst_ratio", env.worst_ratio}};
    c.threshold = 1.0;
    c.pass = env.clean();
    out.push_back(c);
  }
  {
    std::vector<std::pair<double, double>> drift;
    for (const auto& row : trained.log.rows)
      if (row.gram_drift) drift.emplace_back(row.t, *row.gram_drift);
    const double t0 = exit_time(drift, led);
    double worst = 0.0;
    for (const auto& [t, v] : drift) worst = std::max(worst, v);
    CheckReport c;
    c.claim_id = "gram-drift-exit";
    c.statement = "Gram drift stays inside the 0.25(lambda_a + beta^2 lambda_b) neighborhood";
    c.values = {{"worst_drift", worst},
                {"radius", led.neighborhood_radius()},
                {"exit_time", std::isfinite(t0) ? nlohmann::json(t0) : nlohmann::json("inf")},
                {"points", drift.size()}};
    c.threshold = led.neighborhood_radius();
    c.pass = !std::isfinite(t0);
    out.push_back(c);
  }
  {
    const double bound = coupling_gap_bound(led);
    CheckReport c;
    c.claim_id = "coupling-gap-bound";
    c.statement = "trajectory-gap bound c^2(delta)/lambda_a (1/sqrt(m) + beta + sqrt(m) beta^3) "
                  "evaluates finite and positive";
    c.values = {{"bound", bound}};
    c.threshold = 0.0;
    c.pass = std::isfinite(bound) && bound > 0.0;
    out.push_back(c);
  }
  {
    // Representative construction on a fresh Barron-style target: coefficient
    // function a*(b) = b.e1 (bounded by gamma = 1 on the sphere).
    const int m_small = 500;
    const double gamma = 1.0;
    const TargetFunction barron = TargetFunction::barron_density(
        [](const Eigen::VectorXd& b) { return b[0]; }, gamma);
    const Eigen::MatrixXd B0 = sample_sphere(m_small, cfg.d, derive_seed(seed, 0x4153u /*'AS'*/));
    const Eigen::VectorXd a_star = a_star_construct(B0, barron);
    const PopulationRisk risk = population_sq_error_mc(
        a_star, B0, barron, 20000, derive_seed(seed, 0x4154u), 2000);
    const double bound = a_star_risk_bound(gamma, m_small, delta);
    CheckReport c;
    c.claim_id = "astar-risk";
    c.statement = "population error of the representative outer weights stays below "
                  "(gamma^2/m)(1 + sqrt(2 ln(1/delta)))^2";
    c.values = {{"risk", risk.value},
                {"stderr", risk.stderr_},
                {"bound", bound},
                {"a_star_norm", a_star.norm()},
                {"norm_cap", gamma / std::sqrt(double(m_small))}};
    c.threshold = bound;
    c.pass = risk.value <= bound && a_star.norm() <= gamma / std::sqrt(double(m_small)) + 1e-12;
    out.push_back(c);
  }
  {
    const double a_norm = std::max(trained.params.a.norm(), 1e-12);
    const double bound = rad_gen_bound(a_norm, m, train.n(), delta);
    CheckReport c;
    c.claim_id = "rad-gen";
    c.statement = "uniform generalization-gap bound evaluates finite and positive at the "
                  "trained outer norm";
    c.values = {{"a_norm", a_norm}, {"bound", bound}};
    c.threshold = 0.0;
    c.pass = std::isfinite(bound) && bound > 0.0;
    out.push_back(c);
  }
  {
    const double p = std::log(static_cast<double>(m)) / std::log(static_cast<double>(train.n()));
    const Schedule sched = schedule_from_corollary(train.n(), p);
    const double bound = early_stop_bound(m, train.n(), sched.t, led);
    CheckReport c;
    c.claim_id = "early-stop";
    c.statement = "early-stopping schedule and population bound evaluate finite and positive";
    c.values = {{"p", p},
                {"stop_t", sched.t},
                {"rate_exponent", sched.rate_exponent},
                {"bound", bound}};
    c.threshold = 0.0;
    c.pass = std::isfinite(bound) && bound > 0.0 && sched.t > 0.0;
    out.push_back(c);
  }
  {
    // Lyapunov monotonicity along a small frozen-layer run on this dataset.
    const int m_small = 50;
    const NetParams small = init_params({m_small, cfg.d, 1.0, derive_seed(seed, 0x4c59u /*'LY'*/)});
    const Eigen::MatrixXd S0 = feature_matrix(small.B, train.X);
    const Eigen::VectorXd a_min =
        S0.transpose().colPivHouseholderQr().solve(train.y);
    const double risk_min =
        (S0.transpose() * a_min - train.y).squaredNorm() / (2.0 * train.n());
    RunConfig rc;
    rc.eta = 0.01;
    rc.max_steps = 2000;
    rc.log_every = 10;
    std::vector<Eigen::VectorXd> a_snaps;
    LogHooks hooks;
    hooks.on_log_rf = [&](long, double, const Eigen::VectorXd& a) { a_snaps.push_back(a); };
    const RfTrainResult rf = train_rf(small.a, small.B, train, rc, hooks);
    int violations = 0;
    double prev_j = 0.0, prev_slack = 0.0;
    for (std::size_t i = 0; i < rf.log.rows.size() && i < a_snaps.size(); ++i) {
      const LogRow& row = rf.log.rows[i];
      const double j = lyapunov_J(a_snaps[i], a_min, row.train_risk, risk_min, row.t);
      if (i > 0 && j > prev_j + (row.lyap_slack - prev_slack) + 1e-12) ++violations;
      prev_j = j;
      prev_slack = row.lyap_slack;
    }
    CheckReport c;
    c.claim_id = "lyapunov-monotone";
    c.statement = "J(t) = t(risk - risk*) + 0.5||a - a*||^2 is non-increasing along the "
                  "frozen-layer flow up to Euler slack";
    c.values = {{"violations", violations},
                {"points", rf.log.rows.size()},
                {"risk_star", risk_min}};
    c.threshold = 0.0;
    c.pass = violations == 0;
    out.push_back(c);
  }
  return out;
}

struct EmitReport {
  std::vector<std::string> files;   // written, relative to the artifact dir
  std::vector<std::string> errors;  // one line per missing/unreadable series
  bool ok() const { return errors.empty(); }
};

/// Reads an artifact directory produced by run_experiment and writes one tidy
/// long-format CSV (`series,x,y`) per plot family into <dir>/plots,
/// appending the new files to the MANIFEST. Missing run files are reported
/// per series; everything that can be written is still written.
inline EmitReport emit_plot_data(const std::string& artifact_dir) {
  namespace fs = std::filesystem;
  EmitReport rep;
  const fs::path dir(artifact_dir);
  const fs::path summary_path = dir / "summary.json";
  if (!fs::exists(summary_path)) {
    rep.errors.push_back("no summary.json under " + artifact_dir + ": zero runs found");
    return rep;
  }
  nlohmann::json summary;
  try {
    summary = nlohmann::json::parse(read_text_file(summary_path.string()));
  } catch (const std::exception& ex) {
    rep.errors.push_back(std::string("unreadable summary.json: ") + ex.what());
    return rep;
  }
  const std::string experiment = summary.value("experiment", "");
  const std::string hash = summary.value("config_hash", "");
  fs::create_directories(dir / "plots");

  struct SeriesPoint {
    std::string series;
    double x, y;
  };
  std::vector<SeriesPoint> points;

  // Column indices of TrajectoryLog::csv_header().
  constexpr int kT = 1, kTrain = 2, kTest = 3, kGap = 8;
  auto read_curve = [&](const std::string& file, int col,
                        std::vector<std::pair<double, double>>& out) -> bool {
    const fs::path p = dir / file;
    if (!fs::exists(p)) return false;
    const std::string text = read_text_file(p.string());
    std::size_t pos = text.find('\n');
    if (pos == std::string::npos) return false;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos + 1);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(pos + 1, end - pos - 1);
      pos = end;
      if (line.empty()) continue;
      const std::vector<std::string> f = split_csv_line(line);
      if (static_cast<int>(f.size()) <= col || f[static_cast<std::size_t>(col)].empty()) continue;
      out.emplace_back(std::stod(f[kT]), std::stod(f[static_cast<std::size_t>(col)]));
    }
    return true;
  };

  for (const auto& run : summary.value("runs", nlohmann::json::array())) {
    const std::string id = run.value("id", "");
    const std::string file = run.value("file", "");
    const std::string kind = run.value("kind", "");
    const double m = run.value("m", 0.0);
    if (experiment == "fit_random_labels" || experiment == "bound_audit") {
      std::vector<std::pair<double, double>> curve;
      if (!read_curve(file, kTrain, curve)) {
        rep.errors.push_back("series " + id + ": missing run file " + file);
        continue;
      }
      const std::string series = "beta=" + detail::number_text(run.value("beta", 0.0));
      for (auto& [x, y] : curve) points.push_back({series, x, y});
    } else if (experiment == "one_neuron") {
      std::vector<std::pair<double, double>> train, test;
      if (!read_curve(file, kTrain, train)) {
        rep.errors.push_back("series " + id + ": missing run file " + file);
        continue;
      }
      read_curve(file, kTest, test);
      const std::string tag = kind + "-m" + detail::number_text(m);
      for (auto& [x, y] : train) points.push_back({tag + "-train", x, y});
      for (auto& [x, y] : test) points.push_back({tag + "-test", x, y});
    } else if (experiment == "width_sweep") {
      if (!run.contains("final_test_risk") || run["final_test_risk"].is_null()) {
        rep.errors.push_back("series " + id + ": no terminal test risk recorded");
        continue;
      }
      points.push_back({kind == "reg" ? "regularized" : "unregularized", m,
                        run["final_test_risk"].get<double>()});
    } else if (experiment == "coupling_sweep") {
      if (kind != "nn") continue;  // the sup-gap column is shared within a pair
      std::vector<std::pair<double, double>> gaps;
      if (!read_curve(file, kGap, gaps) || gaps.empty()) {
        rep.errors.push_back("series " + id + ": missing run file " + file);
        continue;
      }
      points.push_back({"seed" + std::to_string(run.value("seed", std::uint64_t{0})), m,
                        gaps.back().second});
    }
  }

  std::stable_sort(points.begin(), points.end(), [](const SeriesPoint& a, const SeriesPoint& b) {
    if (a.series != b.series) return a.series < b.series;
    return a.x < b.x;
  });
  std::string csv = "series,x,y\n";
  for (const auto& p : points)
    csv += p.series + "," + format_double(p.x) + "," + format_double(p.y) + "\n";
  const std::string rel = "plots/" + experiment + ".csv";
  write_text_file((dir / rel).string(), csv);
  rep.files.push_back(rel);

  // Keep the MANIFEST exhaustive: append plot files it does not list yet.
  const fs::path manifest = dir / "MANIFEST";
  if (fs::exists(manifest)) {
    std::string text = read_text_file(manifest.string());
    for (const auto& f : rep.files) {
      const std::string line = hash + "  " + f;
      if (text.find(line + "\n") == std::string::npos) text += line + "\n";
    }
    write_text_file(manifest.string(), text);
  }
  return rep;
}

/// Runs a preset and writes the full artifact tree under cfg.out_dir:
///   runs/<id>.csv    one TrajectoryLog per run
///   summary.json     config, per-run records, audit reports, notes
///   MANIFEST         "<config-hash>  <relative-path>" per emitted file
///   plots/*.csv      tidy series,x,y data (emit_plot_data)
/// Exit code: 0 nominal; 3 if any run diverged; 4 if a run exhausted its step
/// budget while a stop_risk was configured (partial artifacts remain).
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  ExperimentResult result;
  result.dir = cfg.out_dir;
  const nlohmann::json cfg_json = config_json(cfg);
  const std::string hash = config_hash(cfg_json);
  fs::create_directories(fs::path(cfg.out_dir) / "runs");

  // One dataset (and test set / probe set) per seed; shared across widths so
  // sweeps compare models on identical data. The one-neuron target direction
  // is the first basis vector.
  Eigen::VectorXd w_star = Eigen::VectorXd::Zero(cfg.d);
  w_star[0] = 1.0;
  const bool random_labels = cfg.experiment == Experiment::fit_random_labels ||
                             cfg.experiment == Experiment::bound_audit;
  const TargetFunction target =
      random_labels ? TargetFunction::random_labels() : TargetFunction::one_neuron(w_star);

  struct SeedContext {
    Dataset train;
    Dataset test;  // zero rows when test_samples == 0
    Eigen::MatrixXd probes;
  };
  std::map<std::uint64_t, SeedContext> contexts;
  for (std::uint64_t s : cfg.seed_list) {
    SeedContext ctx;
    ctx.train = make_dataset(target, cfg.n, cfg.d, derive_seed(s, 0x4441u /*'DA'*/));
    if (cfg.test_samples > 0)
      ctx.test = make_dataset(target, cfg.test_samples, cfg.d, derive_seed(s, 0x5445u /*'TE'*/));
    if (cfg.probe_count > 0)
      ctx.probes = sample_sphere(cfg.probe_count, cfg.d, derive_seed(s, 0x5042u /*'PB'*/));
    contexts.emplace(s, std::move(ctx));
  }

  auto beta_values = [&cfg](int m) -> std::vector<double> {
    if (!cfg.beta_list.empty()) return cfg.beta_list;
    switch (cfg.experiment) {
      case Experiment::fit_random_labels: return detail::beta_ladder(m);
      case Experiment::coupling_sweep: return {1.0 / std::sqrt(static_cast<double>(m))};
      default: return {0.0};
    }
  };
  auto write_log = [&cfg](const std::string& rel, const TrajectoryLog& log) {
    write_text_file((fs::path(cfg.out_dir) / rel).string(), log.to_csv());
  };

  struct Plan {
    RunRecord rec;
    std::function<void(RunRecord&)> task;
    bool deferred = false;  // bookkeeping half of a paired run
  };
  std::vector<Plan> plan;
  auto audit_capture = std::make_shared<TrainResult>();

  for (std::uint64_t seed : cfg.seed_list) {
    const SeedContext& ctx = contexts.at(seed);
    for (std::size_t mi = 0; mi < cfg.m_list.size(); ++mi) {
      const int m = cfg.m_list[mi];
      for (double beta : beta_values(m)) {
        const std::string base = "m" + std::to_string(m) + "_beta" +
                                 detail::number_label(beta) + "_s" + std::to_string(seed);
        const std::uint64_t init_seed = derive_seed(seed, 0x4942u /*'IB'*/);

        if (cfg.experiment == Experiment::fit_random_labels ||
            cfg.experiment == Experiment::bound_audit) {
          const bool audit_this = cfg.experiment == Experiment::bound_audit && plan.empty();
          Plan p;
          p.rec.id = base;
          p.rec.kind = "nn";
          p.rec.m = m;
          p.rec.beta = beta;
          p.rec.seed = seed;
          p.rec.file = "runs/" + base + ".csv";
          p.task = [&cfg, &ctx, &write_log, m, beta, init_seed, audit_this,
                    audit_capture](RunRecord& rec) {
            const NetParams params0 = init_params({m, cfg.d, beta, init_seed});
            RunConfig rc = detail::base_run_config(cfg);
            rc.eta = cfg.eta > 0.0 ? cfg.eta : auto_eta(params0, ctx.train);
            rec.eta = rc.eta;
            LogHooks hooks;
            long drift_count = 0;
            Eigen::MatrixXd G0;
            if (cfg.gram_every > 0) {
              G0 = gram_matrices(params0, ctx.train.X).G;
              hooks.gram_drift = [&cfg, &ctx, &drift_count,
                                  &G0](long, const NetParams& p) -> std::optional<double> {
                if (drift_count++ % cfg.gram_every != 0) return std::nullopt;
                return (gram_matrices(p, ctx.train.X).G - G0).norm();
              };
            }
            const auto t0 = std::chrono::steady_clock::now();
            TrainResult res = train_nn(params0, ctx.train, rc, hooks);
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            write_log(rec.file, res.log);
            detail::fill_record_tail(rec, res.log, res.reason, res.steps);
            if (audit_this) *audit_capture = std::move(res);
          };
          plan.push_back(std::move(p));
        } else if (cfg.experiment == Experiment::one_neuron ||
                   cfg.experiment == Experiment::coupling_sweep) {
          // One coupled integration, two trajectory files and two records.
          Plan pn, pr;
          pn.rec.id = base + "_nn";
          pr.rec.id = base + "_rf";
          for (Plan* p : {&pn, &pr}) {
            p->rec.m = m;
            p->rec.beta = beta;
            p->rec.seed = seed;
            p->rec.file = "runs/" + p->rec.id + ".csv";
          }
          pn.rec.kind = "nn";
          pr.rec.kind = "rf";
          pr.deferred = true;
          const std::string rf_file = pr.rec.file;
          auto rf_slot = std::make_shared<std::optional<RunRecord>>();
          pn.task = [&cfg, &ctx, &write_log, m, beta, init_seed, rf_file,
                     rf_slot](RunRecord& rec) {
            const NetParams params0 = init_params({m, cfg.d, beta, init_seed});
            RunConfig rc = detail::base_run_config(cfg);
            rc.eta = cfg.eta > 0.0 ? cfg.eta : auto_eta(params0, ctx.train);
            if (cfg.experiment == Experiment::coupling_sweep)
              rc.log_every = std::max<long>(1, std::lround(2.0 / rc.eta));
            rec.eta = rc.eta;
            LogHooks hooks;
            detail::TestEval eval;
            eval.test = ctx.test.X.rows() > 0 ? &ctx.test : nullptr;
            eval.attach(hooks, params0.B);
            const Eigen::MatrixXd probes =
                ctx.probes.rows() > 0 ? ctx.probes : Eigen::MatrixXd(0, cfg.d);
            const auto t0 = std::chrono::steady_clock::now();
            CoupledResult res = coupled_run(params0, ctx.train, rc, probes, hooks);
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            write_log(rec.file, res.nn.log);
            write_log(rf_file, res.rf.log);
            detail::fill_record_tail(rec, res.nn.log, res.nn.reason, res.nn.steps);
            RunRecord rf_rec;
            rf_rec.eta = rc.eta;
            rf_rec.wall_seconds = rec.wall_seconds;
            detail::fill_record_tail(rf_rec, res.rf.log, res.rf.reason, res.rf.steps);
            *rf_slot = rf_rec;
          };
          pr.task = [rf_slot](RunRecord& rec) {
            if (!rf_slot->has_value())
              throw std::logic_error("paired frozen-layer run did not execute");
            const RunRecord& src = **rf_slot;
            rec.eta = src.eta;
            rec.steps = src.steps;
            rec.stop_reason = src.stop_reason;
            rec.final_train_risk = src.final_train_risk;
            rec.final_test_risk = src.final_test_risk;
            rec.final_path_norm = src.final_path_norm;
            rec.terminal_sup_gap = src.terminal_sup_gap;
            rec.wall_seconds = src.wall_seconds;
          };
          plan.push_back(std::move(pn));
          plan.push_back(std::move(pr));
        } else if (cfg.experiment == Experiment::width_sweep) {
          Plan pu;
          pu.rec.id = base + "_unreg";
          pu.rec.kind = "nn";
          pu.rec.m = m;
          pu.rec.beta = beta;
          pu.rec.seed = seed;
          pu.rec.file = "runs/" + pu.rec.id + ".csv";
          pu.task = [&cfg, &ctx, &write_log, m, beta, init_seed](RunRecord& rec) {
            const NetParams params0 = init_params({m, cfg.d, beta, init_seed});
            RunConfig rc = detail::base_run_config(cfg);
            rc.eta = cfg.eta > 0.0 ? cfg.eta : auto_eta(params0, ctx.train);
            rec.eta = rc.eta;
            const auto t0 = std::chrono::steady_clock::now();
            TrainResult res = train_nn(params0, ctx.train, rc);
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            write_log(rec.file, res.log);
            detail::fill_record_tail(rec, res.log, res.reason, res.steps);
            if (ctx.test.X.rows() > 0)
              rec.final_test_risk = empirical_risk(res.params, ctx.test);
          };
          plan.push_back(std::move(pu));

          Plan pg;
          pg.rec.id = base + "_reg";
          pg.rec.kind = "reg";
          pg.rec.m = m;
          pg.rec.beta = beta;
          pg.rec.seed = seed;
          pg.rec.file = "runs/" + pg.rec.id + ".csv";
          const double reg_budget =
              cfg.reg_stop_time.empty() ? cfg.stop_time : cfg.reg_stop_time[mi];
          pg.task = [&cfg, &ctx, &write_log, m, beta, init_seed, reg_budget](RunRecord& rec) {
            const NetParams params0 = init_params({m, cfg.d, beta, init_seed});
            RunConfig rc = detail::base_run_config(cfg);
            rc.eta = cfg.eta > 0.0 ? cfg.eta : auto_eta(params0, ctx.train);
            rc.stop_risk.reset();  // the penalized objective never reaches it
            if (reg_budget > 0.0) {
              rc.stop_time = reg_budget;
              rc.max_steps = std::max<long>(cfg.max_steps,
                                            static_cast<long>(reg_budget / rc.eta) + 2);
            }
            rec.eta = rc.eta;
            const auto t0 = std::chrono::steady_clock::now();
            TrainResult res = train_regularized(params0, ctx.train, cfg.lambda, rc);
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            write_log(rec.file, res.log);
            detail::fill_record_tail(rec, res.log, res.reason, res.steps);
            if (ctx.test.X.rows() > 0)
              rec.final_test_risk = empirical_risk(res.params, ctx.test);
          };
          plan.push_back(std::move(pg));
        }
      }
    }
  }

  // Execute the compute tasks on the pool; bookkeeping halves of paired runs
  // execute afterwards (their data is published by the pool join).
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < plan.size(); ++i)
    if (!plan[i].deferred) tasks.push_back([&plan, i] { plan[i].task(plan[i].rec); });
  detail::run_pool(cfg.workers, tasks);
  for (auto& p : plan)
    if (p.deferred) p.task(p.rec);

  for (auto& p : plan) result.runs.push_back(p.rec);

  if (cfg.experiment == Experiment::bound_audit && !result.runs.empty()) {
    const std::uint64_t s = cfg.seed_list.front();
    const int m = cfg.m_list.front();
    const double b = beta_values(m).front();
    result.checks = audit_checks(cfg, contexts.at(s).train, m, b, derive_seed(s, 0x4942u),
                                 *audit_capture, result.runs.front().eta, s);
  }

  result.notes = {
      "beta ladder (fit_random_labels): {1/m, 1/sqrt(m), m^-1/4, 1, sqrt(m), m} - tool "
      "default spanning small to large initializations",
      "width grid (width_sweep): {4, 16, 64, 256, 1024} - tool default; the smallest width "
      "has fewer parameters than samples and must move its features to interpolate, the "
      "largest trains in the frozen-feature regime",
      "regularized time budgets (width_sweep): uniform horizon by which the penalized flow "
      "has plateaued at every width in the grid; see reg_stop_time in the config",
      "one-neuron target: f*(x) = relu(e1 . x)",
      "step size: eta = min(0.01, 1/(m lmax(G(0)))) when not configured"};

  for (const auto& rec : result.runs)
    if (rec.stop_reason == stop_reason_name(StopReason::diverged))
      result.exit_code = ExitCode::diverged;
  if (result.exit_code == ExitCode::ok && cfg.stop_risk > 0.0) {
    for (const auto& rec : result.runs)
      if (rec.kind != "reg" &&
          rec.stop_reason == stop_reason_name(StopReason::budget_exhausted))
        result.exit_code = ExitCode::budget_exhausted;
  }

  nlohmann::json summary;
  summary["experiment"] = experiment_name(cfg.experiment);
  summary["config"] = cfg_json;
  summary["config_hash"] = hash;
  summary["notes"] = result.notes;
  summary["exit_code"] = result.exit_code;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& rec : result.runs) {
    nlohmann::json r = {{"id", rec.id},
                        {"file", rec.file},
                        {"kind", rec.kind},
                        {"m", rec.m},
                        {"beta", rec.beta},
                        {"seed", rec.seed},
                        {"eta", rec.eta},
                        {"steps", rec.steps},
                        {"stop_reason", rec.stop_reason},
                        {"final_train_risk", rec.final_train_risk},
                        {"final_path_norm", rec.final_path_norm}};
    if (rec.final_test_risk) r["final_test_risk"] = *rec.final_test_risk;
    if (rec.terminal_sup_gap) r["terminal_sup_gap"] = *rec.terminal_sup_gap;
    if (!cfg.reproducible) r["wall_seconds"] = rec.wall_seconds;
    runs.push_back(std::move(r));
  }
  summary["runs"] = std::move(runs);
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : result.checks) checks.push_back(c.to_json());
  summary["checks"] = std::move(checks);
  write_text_file((fs::path(cfg.out_dir) / "summary.json").string(), summary.dump(2) + "\n");

  std::string manifest;
  manifest += "# lazylab artifact manifest\n";
  manifest += "# config-hash " + hash + "\n";
  for (const auto& note : result.notes) manifest += "# note: " + note + "\n";
  std::vector<std::string> files;
  for (const auto& rec : result.runs) files.push_back(rec.file);
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  for (const auto& f : files) manifest += hash + "  " + f + "\n";
  manifest += hash + "  summary.json\n";
  write_text_file((fs::path(cfg.out_dir) / "MANIFEST").string(), manifest);

  emit_plot_data(cfg.out_dir);
  return result;
}

}  // namespace lazylab
