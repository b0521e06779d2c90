#pragma once

// Input sampling on the unit sphere and the three label families used by the
// experiments: uniform random labels, a single ReLU neuron, and targets given
// by an integral representation over sphere directions (evaluated by plain
// Monte-Carlo quadrature).

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "lazylab/io.hpp"
#include "lazylab/rng.hpp"

namespace lazylab {

inline double relu(double z) { return z > 0.0 ? z : 0.0; }
/// Subgradient convention: relu_prime(0) = 0.
inline double relu_prime(double z) { return z > 0.0 ? 1.0 : 0.0; }

struct Dataset {
  Eigen::MatrixXd X;  // n x d, rows on the unit sphere
  Eigen::VectorXd y;  // n, |y_i| <= 1

  int n() const { return static_cast<int>(X.rows()); }
  int d() const { return static_cast<int>(X.cols()); }

  void validate() const {
    if (X.rows() != y.size()) throw std::invalid_argument("dataset: row/label count mismatch");
    for (int i = 0; i < X.rows(); ++i) {
      if (std::abs(X.row(i).norm() - 1.0) > 1e-12)
        throw std::invalid_argument("dataset: input row " + std::to_string(i) + " not unit norm");
      if (std::abs(y[i]) > 1.0 + 1e-12)
        throw std::invalid_argument("dataset: |y| > 1 at row " + std::to_string(i));
    }
  }
};

struct TargetFunction {
  enum class Kind { RandomLabels, OneNeuron, BarronDensity } kind;

  Eigen::VectorXd w_star;                                  // OneNeuron direction
  std::function<double(const Eigen::VectorXd&)> coef;      // BarronDensity a*(b)
  double gamma = 1.0;                                      // BarronDensity sup bound

  static TargetFunction random_labels() { return {Kind::RandomLabels, {}, nullptr, 1.0}; }

  static TargetFunction one_neuron(Eigen::VectorXd w) {
    if (std::abs(w.norm() - 1.0) > 1e-12)
      throw std::invalid_argument("one_neuron: direction must be unit norm");
    return {Kind::OneNeuron, std::move(w), nullptr, 1.0};
  }

  static TargetFunction barron_density(std::function<double(const Eigen::VectorXd&)> a,
                                       double gamma) {
    if (gamma < 1.0) throw std::invalid_argument("barron_density: gamma must be >= 1");
    return {Kind::BarronDensity, {}, std::move(a), gamma};
  }

  /// Exact value for OneNeuron; Monte-Carlo quadrature for BarronDensity.
  double value(const Eigen::VectorXd& x, Rng& quad_rng, int quadrature_size) const {
    switch (kind) {
      case Kind::OneNeuron:
        return relu(w_star.dot(x));
      case Kind::BarronDensity: {
        double acc = 0.0;
        const int d = static_cast<int>(x.size());
        for (int q = 0; q < quadrature_size; ++q) {
          const Eigen::VectorXd b = quad_rng.sphere(d);
          const double c = coef(b);
          if (std::abs(c) > gamma + 1e-12)
            throw std::invalid_argument("barron_density: |a*(b)| exceeds gamma");
          acc += c * relu(b.dot(x));
        }
        return acc / quadrature_size;
      }
      case Kind::RandomLabels:
        throw std::invalid_argument("random labels have no pointwise target value");
    }
    return 0.0;  // unreachable
  }
};

/// n uniform points on S^{d-1}; rows are unit norm, deterministic given seed.
inline Eigen::MatrixXd sample_sphere(int n, int d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("sample_sphere: n and d must be >= 1");
  Rng rng(derive_seed(seed, 0x5350u /*'SP'*/));
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i) X.row(i) = rng.sphere(d).transpose();
  return X;
}

struct LabelReport {
  Eigen::VectorXd y;
  int clamped = 0;  // BarronDensity entries that exceeded |1| and were clamped
};

/// Labels for the given inputs. RandomLabels ~ U[-1,1]; OneNeuron is exact;
/// BarronDensity averages quadrature_size sphere draws of a*(b) relu(b.x) and
/// clamps (with a report) in the rare event |y| > 1.
inline LabelReport make_labels(const TargetFunction& target, const Eigen::MatrixXd& inputs,
                               std::uint64_t seed, int quadrature_size = 1) {
  if (quadrature_size < 1) throw std::invalid_argument("make_labels: quadrature_size >= 1");
  const int n = static_cast<int>(inputs.rows());
  LabelReport rep;
  rep.y.resize(n);
  Rng rng(derive_seed(seed, 0x4c42u /*'LB'*/));
  for (int i = 0; i < n; ++i) {
    switch (target.kind) {
      case TargetFunction::Kind::RandomLabels:
        rep.y[i] = rng.uniform(-1.0, 1.0);
        break;
      case TargetFunction::Kind::OneNeuron:
        rep.y[i] = relu(target.w_star.dot(inputs.row(i).transpose()));
        break;
      case TargetFunction::Kind::BarronDensity: {
        double v = target.value(inputs.row(i).transpose(), rng, quadrature_size);
        if (std::abs(v) > 1.0) {
          v = v > 0 ? 1.0 : -1.0;
          ++rep.clamped;
        }
        rep.y[i] = v;
        break;
      }
    }
  }
  return rep;
}

inline Dataset make_dataset(const TargetFunction& target, int n, int d, std::uint64_t seed,
                            int quadrature_size = 1) {
  Dataset ds;
  ds.X = sample_sphere(n, d, seed);
  ds.y = make_labels(target, ds.X, derive_seed(seed, 1u), quadrature_size).y;
  ds.validate();
  return ds;
}

/// CSV round-trip: header `x0,...,x{d-1},y`, 17 significant digits.
inline std::string dataset_to_csv(const Dataset& ds) {
  std::string out;
  for (int j = 0; j < ds.d(); ++j) out += "x" + std::to_string(j) + ",";
  out += "y\n";
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < ds.d(); ++j) out += format_double(ds.X(i, j)) + ",";
    out += format_double(ds.y[i]) + "\n";
  }
  return out;
}

inline Dataset dataset_from_csv(const std::string& csv) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::istringstream in(csv);
  if (!std::getline(in, line)) throw std::invalid_argument("dataset csv: empty");
  const auto header = split_csv_line(line);
  const int d = static_cast<int>(header.size()) - 1;
  if (d < 1 || header.back() != "y") throw std::invalid_argument("dataset csv: bad header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != d + 1)
      throw std::invalid_argument("dataset csv: bad row width");
    std::vector<double> row(d + 1);
    for (int j = 0; j <= d; ++j) row[j] = std::stod(fields[j]);
    rows.push_back(std::move(row));
  }
  Dataset ds;
  ds.X.resize(static_cast<int>(rows.size()), d);
  ds.y.resize(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < d; ++j) ds.X(static_cast<int>(i), j) = rows[i][j];
    ds.y[static_cast<int>(i)] = rows[i][d];
  }
  return ds;
}

}  // namespace lazylab
