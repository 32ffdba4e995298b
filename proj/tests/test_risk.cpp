#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "mgmpc/error.hpp"
#include "mgmpc/risk.hpp"

using namespace mgmpc;

namespace {

DiscreteRandomVariable random_variable(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd;
  DiscreteRandomVariable X;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    X.values.push_back(std::round(nd(rng) * 4.0) / 2.0);  // ties are likely
    X.probs.push_back(u(rng) < 0.15 ? 0.0 : u(rng));
    total += X.probs.back();
  }
  if (total == 0.0) {
    X.probs[0] = 1.0;
    total = 1.0;
  }
  for (double& p : X.probs) p /= total;
  return X;
}

Eigen::VectorXd as_vector(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

const double kAlphas[] = {0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0};

}  // namespace

TEST_CASE("V@R on a three-point distribution") {
  const DiscreteRandomVariable X{{1, 2, 3}, {0.3, 0.3, 0.4}};
  CHECK(var_value(X, 0.4) == 2.0);
  CHECK(var_value(X, 0.35) == 3.0);
  CHECK(var_value(X, 1.0) == 1.0);
  CHECK(var_value(X, 0.0) == 3.0);
}

TEST_CASE("V@R at alpha = 1 is the smallest supported value") {
  const DiscreteRandomVariable X{{-5, 2, 3}, {0.0, 0.5, 0.5}};
  CHECK(var_value(X, 1.0) == 2.0);
}

TEST_CASE("AV@R examples") {
  const DiscreteRandomVariable uniform4{{1, 2, 3, 4}, {0.25, 0.25, 0.25, 0.25}};
  CHECK(avar_rockafellar(uniform4, 0.5) == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(avar_primal_sup(uniform4, 0.5) == doctest::Approx(3.5).epsilon(1e-12));

  const DiscreteRandomVariable rare{{0, 10}, {0.99, 0.01}};
  CHECK(avar_rockafellar(rare, 0.02) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(avar_primal_sup(rare, 0.02) == doctest::Approx(5.0).epsilon(1e-12));

  const DiscreteRandomVariable two{{5, 1}, {0.5, 0.5}};
  CHECK(avar_primal_sup(two, 0.0) == 5.0);
  CHECK_THROWS_AS(avar_rockafellar(two, 0.0), InputError);

  // alpha = 1 is the expectation.
  CHECK(avar_primal_sup(two, 1.0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("invalid distributions are rejected") {
  CHECK_THROWS_AS(var_value({{1, 2}, {0.5}}, 0.5), InputError);
  CHECK_THROWS_AS(var_value({{1, 2}, {0.7, 0.7}}, 0.5), InputError);
  CHECK_THROWS_AS(var_value({{1, 2}, {1.5, -0.5}}, 0.5), InputError);
  CHECK_THROWS_AS(var_value({{1}, {1.0}}, 1.5), InputError);
}

TEST_CASE("conic representation of the AV@R set") {
  const auto rep = avar_conic_rep({0.5, 0.5}, 0.5);
  REQUIRE(rep.rows() == 5);
  REQUIRE(rep.outcomes() == 2);
  CHECK(rep.extra() == 0);
  const std::vector<double> b(rep.b.data(), rep.b.data() + rep.b.size());
  CHECK(b == std::vector<double>{1, 1, 0, 0, 1});
  REQUIRE(rep.cones.size() == 2);
  CHECK(rep.cones[0].kind == ConeKind::nonnegative);
  CHECK(rep.cones[0].dim == 4);
  CHECK(rep.cones[1].kind == ConeKind::zero);
  CHECK(rep.cones[1].dim == 1);
  CHECK_THROWS_AS(avar_conic_rep({0.5, 0.5}, 0.0), InputError);
  CHECK(dual_cone(ConeKind::zero) == ConeKind::free);
  CHECK(dual_cone(ConeKind::free) == ConeKind::zero);
  CHECK(dual_cone(ConeKind::nonnegative) == ConeKind::nonnegative);
}

TEST_CASE("ambiguity-set membership") {
  const std::vector<double> pi{0.2, 0.3, 0.5};
  const double alpha = 0.6;
  const auto rep = avar_conic_rep(pi, alpha);
  CHECK(in_ambiguity_set(rep, as_vector(pi)));
  CHECK_FALSE(in_ambiguity_set(rep, Eigen::Vector3d(1.0, 0.0, 0.0)));  // 1 > 0.2/0.6
  CHECK(in_ambiguity_set(rep, Eigen::Vector3d(1.0 / 3.0, 0.0, 2.0 / 3.0)));
  CHECK_FALSE(in_ambiguity_set(rep, Eigen::Vector3d(0.2, 0.3, 0.4)));  // mass 0.9

  // Random densities: membership agrees with the explicit polytope.
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Vector3d mu(u(rng), u(rng), u(rng));
    mu /= mu.sum();
    bool inside = true;
    for (int i = 0; i < 3; ++i) inside = inside && alpha * mu[i] <= pi[i] + 1e-12;
    CHECK(in_ambiguity_set(rep, mu, 1e-9) == inside);
  }
}

TEST_CASE("three AV@R evaluations agree on random instances") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> size(1, 8);
  for (int trial = 0; trial < 60; ++trial) {
    const auto X = random_variable(rng, size(rng));
    for (double alpha : kAlphas) {
      const double sup = avar_primal_sup(X, alpha);
      CHECK(std::abs(avar_rockafellar(X, alpha) - sup) <= 1e-9);
      const double dual = risk_value_dual(avar_conic_rep(X.probs, alpha), as_vector(X.values));
      CHECK(std::abs(dual - sup) <= 1e-6);
    }
  }
}

TEST_CASE("AV@R bounds V@R and is monotone in alpha") {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> size(1, 8);
  bool strict = false;
  for (int trial = 0; trial < 100; ++trial) {
    const auto X = random_variable(rng, size(rng));
    double previous = std::numeric_limits<double>::infinity();
    for (double alpha : kAlphas) {
      const double avar = avar_primal_sup(X, alpha);
      const double var = var_value(X, alpha);
      CHECK(avar >= var - 1e-12);
      strict = strict || avar > var + 1e-9;
      CHECK(avar <= previous + 1e-12);
      previous = avar;
    }
  }
  CHECK(strict);
}

TEST_CASE("AV@R is coherent on random instances") {
  std::mt19937 rng(9);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> size(2, 6);
  for (int trial = 0; trial < 50; ++trial) {
    auto X = random_variable(rng, size(rng));
    auto Y = X;
    for (double& v : Y.values) v = nd(rng);
    const double alpha = kAlphas[trial % 8];
    const double rx = avar_primal_sup(X, alpha);
    const double ry = avar_primal_sup(Y, alpha);

    auto sum = X;
    auto shifted = X;
    auto scaled = X;
    auto dominating = X;
    for (std::size_t i = 0; i < X.values.size(); ++i) {
      sum.values[i] += Y.values[i];
      shifted.values[i] += 1.25;
      scaled.values[i] *= 3.0;
      dominating.values[i] = std::max(X.values[i], Y.values[i]);
    }
    CHECK(avar_primal_sup(sum, alpha) <= rx + ry + 1e-9);
    CHECK(avar_primal_sup(shifted, alpha) == doctest::Approx(rx + 1.25).epsilon(1e-12));
    CHECK(avar_primal_sup(scaled, alpha) == doctest::Approx(3.0 * rx).epsilon(1e-12));
    CHECK(avar_primal_sup(dominating, alpha) >= rx - 1e-12);
  }
}
