#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lazylab/dataset.hpp"
#include "oracles.hpp"

using namespace lazylab;

TEST_CASE("relu and its subgradient pin the kink convention") {
  CHECK(relu(-1.5) == 0.0);
  CHECK(relu(0.0) == 0.0);
  CHECK(relu(2.5) == 2.5);
  CHECK(relu_prime(-1e-300) == 0.0);
  CHECK(relu_prime(0.0) == 0.0);  // subgradient choice at the kink: 0
  CHECK(relu_prime(1e-300) == 1.0);
  CHECK(relu_prime(3.0) == 1.0);
}

TEST_CASE("sample_sphere rows are unit and seed-deterministic") {
  const Eigen::MatrixXd X = sample_sphere(40, 7, 11u);
  REQUIRE(X.rows() == 40);
  REQUIRE(X.cols() == 7);
  for (int i = 0; i < X.rows(); ++i) REQUIRE(std::abs(X.row(i).norm() - 1.0) <= 1e-12);
  CHECK(X == sample_sphere(40, 7, 11u));
  CHECK(X != sample_sphere(40, 7, 12u));
  CHECK_THROWS_AS(sample_sphere(0, 3, 1u), std::invalid_argument);
  CHECK_THROWS_AS(sample_sphere(3, 0, 1u), std::invalid_argument);
}

TEST_CASE("random labels are uniform on [-1,1] and deterministic") {
  const TargetFunction t = TargetFunction::random_labels();
  const Eigen::MatrixXd X = sample_sphere(5000, 3, 2u);
  const LabelReport rep = make_labels(t, X, 77u);
  REQUIRE(rep.y.size() == 5000);
  CHECK(rep.clamped == 0);
  double mean = 0.0, var = 0.0;
  for (int i = 0; i < rep.y.size(); ++i) {
    REQUIRE(std::abs(rep.y[i]) <= 1.0);
    mean += rep.y[i];
  }
  mean /= rep.y.size();
  for (int i = 0; i < rep.y.size(); ++i) var += (rep.y[i] - mean) * (rep.y[i] - mean);
  var /= rep.y.size();
  CHECK(std::abs(mean) < 4.0 / std::sqrt(3.0 * 5000));  // sd of mean = 1/sqrt(3n)
  CHECK(std::abs(var - 1.0 / 3.0) < 0.02);
  CHECK(rep.y == make_labels(t, X, 77u).y);
  CHECK(rep.y != make_labels(t, X, 78u).y);

  Rng dummy(0);
  CHECK_THROWS_AS(t.value(X.row(0).transpose(), dummy, 1), std::invalid_argument);
}

TEST_CASE("one-neuron labels equal relu(w.x) exactly") {
  Eigen::VectorXd w(4);
  w << 0.5, -0.5, 0.5, 0.5;
  const TargetFunction t = TargetFunction::one_neuron(w);
  const Eigen::MatrixXd X = sample_sphere(100, 4, 3u);
  const Eigen::VectorXd y = make_labels(t, X, 1u).y;
  for (int i = 0; i < 100; ++i)
    REQUIRE(y[i] == relu(w.dot(X.row(i).transpose())));

  Eigen::VectorXd bad(2);
  bad << 1.0, 1.0;
  CHECK_THROWS_AS(TargetFunction::one_neuron(bad), std::invalid_argument);
}

TEST_CASE("integral-representation target converges to its sphere average") {
  // For a*(b) = b_1 and x = e1, E_b[a*(b) relu(b.x)] = E[b_1^2 | b_1>0]/2 = 1/(2d).
  const int d = 4;
  const TargetFunction t =
      TargetFunction::barron_density([](const Eigen::VectorXd& b) { return b[0]; }, 1.0);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(d);
  e1[0] = 1.0;
  Rng quad(202u);
  const int M = 400000;
  // Welford pass for a standard error alongside the same stream.
  Rng quad2(202u);
  double mean = 0.0, m2 = 0.0;
  for (int i = 1; i <= M; ++i) {
    const Eigen::VectorXd b = quad2.sphere(d);
    const double v = b[0] * relu(b.dot(e1));
    const double delta = v - mean;
    mean += delta / i;
    m2 += delta * (v - mean);
  }
  const double se = std::sqrt(m2 / (M - 1.0) / M);
  const double got = t.value(e1, quad, M);
  CHECK(got == Catch::Approx(mean).margin(1e-9));  // same stream, same average
  CHECK(std::abs(got - 1.0 / (2.0 * d)) <= 3.0 * se);

  CHECK_THROWS_AS(TargetFunction::barron_density(nullptr, 0.5), std::invalid_argument);
  const TargetFunction over =
      TargetFunction::barron_density([](const Eigen::VectorXd&) { return 3.0; }, 2.0);
  Rng q3(1u);
  CHECK_THROWS_AS(over.value(e1, q3, 10), std::invalid_argument);  // |a*| > gamma
}

TEST_CASE("labels from wide coefficients are clamped and reported") {
  const TargetFunction t = TargetFunction::barron_density(
      [](const Eigen::VectorXd& b) { return b[0] >= 0.0 ? 2.0 : -2.0; }, 2.0);
  const Eigen::MatrixXd X = sample_sphere(200, 2, 5u);
  const LabelReport rep = make_labels(t, X, 9u, 1);  // single-draw quadrature
  CHECK(rep.clamped > 0);
  for (int i = 0; i < rep.y.size(); ++i) REQUIRE(std::abs(rep.y[i]) <= 1.0);
  CHECK_THROWS_AS(make_labels(t, X, 9u, 0), std::invalid_argument);
}

TEST_CASE("make_dataset validates and derives label seed from the input seed") {
  const Dataset ds = make_dataset(TargetFunction::random_labels(), 30, 6, 123u);
  REQUIRE_NOTHROW(ds.validate());
  CHECK(ds.n() == 30);
  CHECK(ds.d() == 6);
  // Labels use a derived stream, not the raw seed stream.
  CHECK(ds.y != make_labels(TargetFunction::random_labels(), ds.X, 123u).y);
  CHECK(ds.y == make_labels(TargetFunction::random_labels(), ds.X, derive_seed(123u, 1u)).y);
}

TEST_CASE("dataset validation rejects bad rows") {
  Dataset ds = make_dataset(TargetFunction::random_labels(), 5, 3, 1u);
  Dataset bad = ds;
  bad.X(2, 0) += 1e-6;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ds;
  bad.y[1] = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ds;
  bad.y.conservativeResize(4);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("dataset csv round-trips bit-exactly") {
  const Dataset ds = make_dataset(TargetFunction::random_labels(), 17, 4, 99u);
  const Dataset back = dataset_from_csv(dataset_to_csv(ds));
  REQUIRE(back.n() == ds.n());
  REQUIRE(back.d() == ds.d());
  CHECK(back.X == ds.X);
  CHECK(back.y == ds.y);

  CHECK_THROWS_AS(dataset_from_csv(""), std::invalid_argument);
  CHECK_THROWS_AS(dataset_from_csv("x0,x1\n"), std::invalid_argument);       // no y column
  CHECK_THROWS_AS(dataset_from_csv("x0,y\n0.1\n"), std::invalid_argument);   // bad width
}
