#pragma once

// The two limiting kernels attached to a ReLU feature drawn uniformly from the
// sphere: the feature kernel E_b[relu(b.x) relu(b.x')] and the derivative
// kernel E_b[relu'(b.x) relu'(b.x') <x,x'>], their n x n matrices normalized
// by 1/n, and symmetric-eigenvalue helpers. Closed forms are implementer
// derivations from the degree-0/1 arc-cosine kernels; the Monte-Carlo mode is
// the ground truth they are certified against (see tests).

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "lazylab/dataset.hpp"
#include "lazylab/rng.hpp"

namespace lazylab {

inline void require_unit(const Eigen::VectorXd& x, const char* who) {
  if (std::abs(x.norm() - 1.0) > 1e-9)
    throw std::invalid_argument(std::string(who) + ": input must be unit norm");
}

/// Angle between two unit vectors, clamped against rounding.
inline double angle_between(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) {
  const double c = std::min(1.0, std::max(-1.0, x.dot(xp)));
  return std::acos(c);
}

/// Closed form of E_b[relu(b.x) relu(b.x')] for b uniform on S^{d-1}:
/// (sin t + (pi - t) cos t) / (2 pi d) with t the angle between x and x'.
inline double kernel_a_closed(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) {
  require_unit(x, "kernel_a");
  require_unit(xp, "kernel_a");
  const double t = angle_between(x, xp);
  const double d = static_cast<double>(x.size());
  return (std::sin(t) + (std::numbers::pi - t) * std::cos(t)) / (2.0 * std::numbers::pi * d);
}

/// Closed form of E_b[relu'(b.x) relu'(b.x') <x,x'>]: cos t (pi - t) / (2 pi).
inline double kernel_b_closed(const Eigen::VectorXd& x, const Eigen::VectorXd& xp) {
  require_unit(x, "kernel_b");
  require_unit(xp, "kernel_b");
  const double t = angle_between(x, xp);
  return std::cos(t) * (std::numbers::pi - t) / (2.0 * std::numbers::pi);
}

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;  // sample standard error of the mean
};

namespace detail {
template <class F>
McEstimate mc_over_sphere(int d, long M, std::uint64_t seed, F&& integrand) {
  if (M < 1) throw std::invalid_argument("monte carlo: M must be >= 1");
  Rng rng(seed);
  double mean = 0.0, m2 = 0.0;  // Welford accumulation
  for (long i = 1; i <= M; ++i) {
    const double v = integrand(rng.sphere(d));
    const double delta = v - mean;
    mean += delta / static_cast<double>(i);
    m2 += delta * (v - mean);
  }
  McEstimate est;
  est.mean = mean;
  est.stderr_ = M > 1 ? std::sqrt(m2 / (static_cast<double>(M) - 1.0) / static_cast<double>(M)) : 0.0;
  return est;
}
}  // namespace detail

inline McEstimate kernel_a_mc(const Eigen::VectorXd& x, const Eigen::VectorXd& xp, long M,
                              std::uint64_t seed) {
  require_unit(x, "kernel_a");
  require_unit(xp, "kernel_a");
  return detail::mc_over_sphere(static_cast<int>(x.size()), M, seed, [&](const Eigen::VectorXd& b) {
    return relu(b.dot(x)) * relu(b.dot(xp));
  });
}

inline McEstimate kernel_b_mc(const Eigen::VectorXd& x, const Eigen::VectorXd& xp, long M,
                              std::uint64_t seed) {
  require_unit(x, "kernel_b");
  require_unit(xp, "kernel_b");
  const double dot = x.dot(xp);
  return detail::mc_over_sphere(static_cast<int>(x.size()), M, seed, [&](const Eigen::VectorXd& b) {
    return relu_prime(b.dot(x)) * relu_prime(b.dot(xp)) * dot;
  });
}

struct KernelMode {
  bool monte_carlo = false;
  long M = 0;
  std::uint64_t seed = 0;

  static KernelMode closed_form() { return {false, 0, 0}; }
  static KernelMode mc(long M, std::uint64_t seed) { return {true, M, seed}; }
};

struct KernelPair {
  Eigen::MatrixXd Ka;  // entries k_a(x_i,x_j)/n
  Eigen::MatrixXd Kb;  // entries k_b(x_i,x_j)/n
  int n = 0;
};

/// Normalized kernel matrices. In Monte-Carlo mode every unordered pair (i,j)
/// owns its own substream keyed by (seed,i,j), so assembly order (and any
/// parallel schedule over pairs) cannot change the result.
inline KernelPair kernel_matrices(const Eigen::MatrixXd& inputs, const KernelMode& mode) {
  const int n = static_cast<int>(inputs.rows());
  if (n < 1) throw std::invalid_argument("kernel_matrices: empty input");
  KernelPair kp;
  kp.n = n;
  kp.Ka.resize(n, n);
  kp.Kb.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = inputs.row(i).transpose();
    for (int j = i; j < n; ++j) {
      const Eigen::VectorXd xj = inputs.row(j).transpose();
      double ka, kb;
      if (mode.monte_carlo) {
        const std::uint64_t s = derive_seed(mode.seed, 0x4b4du /*'KM'*/, i, j);
        ka = kernel_a_mc(xi, xj, mode.M, derive_seed(s, 0u)).mean;
        kb = kernel_b_mc(xi, xj, mode.M, derive_seed(s, 1u)).mean;
      } else {
        ka = kernel_a_closed(xi, xj);
        kb = kernel_b_closed(xi, xj);
      }
      kp.Ka(i, j) = kp.Ka(j, i) = ka / n;
      kp.Kb(i, j) = kp.Kb(j, i) = kb / n;
    }
  }
  return kp;
}

/// Smallest eigenvalue of a symmetric matrix (symmetrized internally; inputs
/// asymmetric beyond 1e-9 are rejected). Backed by a dense symmetric
/// eigensolver; the contract is method-agnostic and `tol` states the accuracy
/// the caller relies on.
inline double min_eigenvalue(const Eigen::MatrixXd& A, double tol = 1e-12) {
  (void)tol;
  if (A.rows() != A.cols()) throw std::invalid_argument("min_eigenvalue: matrix not square");
  const double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9) throw std::invalid_argument("min_eigenvalue: matrix not symmetric");
  const Eigen::MatrixXd S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("min_eigenvalue: solver failed");
  return es.eigenvalues()(0);
}

/// Largest eigenvalue, same contract as min_eigenvalue.
inline double max_eigenvalue(const Eigen::MatrixXd& A, double tol = 1e-12) {
  (void)tol;
  if (A.rows() != A.cols()) throw std::invalid_argument("max_eigenvalue: matrix not square");
  const double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9) throw std::invalid_argument("max_eigenvalue: matrix not symmetric");
  const Eigen::MatrixXd S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("max_eigenvalue: solver failed");
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

struct SpectralSummary {
  double lambda_a = 0.0;  // min eigenvalue of Ka
  double lambda_b = 0.0;  // min eigenvalue of Kb
  double lambda_n = 0.0;  // min of the two

  /// A non-positive value signals a spectral-gap assumption violation; callers
  /// inspect rather than throw (it is a finding, not an error).
  bool assumption_holds() const { return lambda_a > 0.0 && lambda_b > 0.0; }
};

inline SpectralSummary spectral_summary(const KernelPair& kp) {
  SpectralSummary s;
  s.lambda_a = min_eigenvalue(kp.Ka);
  s.lambda_b = min_eigenvalue(kp.Kb);
  s.lambda_n = std::min(s.lambda_a, s.lambda_b);
  return s;
}

inline nlohmann::json spectral_summary_json(const SpectralSummary& s, int n, int d,
                                            const std::string& mode) {
  return {{"lambda_a", s.lambda_a}, {"lambda_b", s.lambda_b}, {"lambda_n", s.lambda_n},
          {"n", n},                 {"d", d},                 {"mode", mode}};
}

/// Row-major CSV of a matrix at 17 significant digits.
inline std::string matrix_to_csv(const Eigen::MatrixXd& A) {
  std::string out;
  for (int i = 0; i < A.rows(); ++i) {
    for (int j = 0; j < A.cols(); ++j) {
      out += format_double(A(i, j));
      out += (j + 1 < A.cols()) ? "," : "\n";
    }
  }
  return out;
}

}  // namespace lazylab
