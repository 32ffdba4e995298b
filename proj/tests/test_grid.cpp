#include <random>

#include "doctest.h"
#include "mgmpc/error.hpp"
#include "mgmpc/grid.hpp"

using namespace mgmpc;

namespace {

// Case-study units all placed on bus 0 of an arbitrary network.
GridSpec network(int n_bus, std::vector<Line> lines) {
  GridSpec g = case_study_grid();
  g.n_bus = n_bus;
  g.topology = std::move(lines);
  g.n_e = static_cast<int>(g.topology.size());
  g.p_e_min.assign(g.topology.size(), -1.3);
  g.p_e_max.assign(g.topology.size(), 1.3);
  g.bus_of = {{0}, {0}, {0}, {0}};
  return g;
}

bool has_key(const std::vector<GridViolation>& v, const std::string& key) {
  for (const auto& e : v)
    if (e.key == key) return true;
  return false;
}

}  // namespace

TEST_CASE("two-bus radial network carries the whole transfer") {
  GridSpec g = case_study_grid();
  g.n_bus = 2;
  g.topology = {{0, 1, -20.0}};
  g.n_e = 1;
  g.p_e_min = {-1.3};
  g.p_e_max = {1.3};
  g.n_s = 0;
  g.n_r = 0;
  g.bus_of = {{0}, {}, {}, {1}};
  const auto F = ptdf_matrix(g);
  REQUIRE(F.rows() == 1);
  REQUIRE(F.cols() == 2);
  Eigen::Vector2d inj(0.7, -0.7);
  CHECK((F * inj)(0) == doctest::Approx(0.7));
}

TEST_CASE("three-bus ring splits 2/3 over the direct line and 1/3 around") {
  // Reduced susceptance system for buses 1,2 with unit susceptances:
  // [2 -1; -1 2] theta = [1; -1]  ->  theta = [1/3; -1/3].
  const auto g = network(3, {{0, 1, -1.0}, {1, 2, -1.0}, {2, 0, -1.0}});
  const auto F = bus_ptdf(g);
  Eigen::Vector3d inj(0.0, 1.0, -1.0);
  const Eigen::VectorXd f = F * inj;
  CHECK(f(0) == doctest::Approx(-1.0 / 3.0));
  CHECK(f(1) == doctest::Approx(2.0 / 3.0));
  CHECK(f(2) == doctest::Approx(-1.0 / 3.0));
}

TEST_CASE("zero net injection at one bus gives zero flows") {
  const auto g = network(3, {{0, 1, -1.0}, {1, 2, -2.0}, {2, 0, -3.0}});
  GridSpec at_bus2 = g;
  at_bus2.bus_of = {{2}, {2}, {2}, {2}};
  const auto F = ptdf_matrix(at_bus2);
  Eigen::Vector4d inj(0.5, 0.3, 0.8, -1.6);
  CHECK((F * inj).norm() == doctest::Approx(0.0));
}

TEST_CASE("validate_grid") {
  CHECK(validate_grid(case_study_grid()).empty());

  auto g = case_study_grid();
  g.x_soft_min = {3.5};
  CHECK(has_key(validate_grid(g), "x_soft_max"));

  g = case_study_grid();
  g.gamma = 1.2;
  CHECK(has_key(validate_grid(g), "gamma"));

  g = case_study_grid();
  g.p_s_min = {0.5};
  CHECK(has_key(validate_grid(g), "p_s_min"));

  g = case_study_grid();
  g.c_r = {0.0};
  CHECK(has_key(validate_grid(g), "c_r"));

  g = case_study_grid();
  g.K_t = {1.0, 2.0};
  CHECK(has_key(validate_grid(g), "K_t"));
  CHECK_THROWS_AS(require_valid(g), InputError);
}

TEST_CASE("disconnected networks are rejected") {
  auto g = network(4, {{0, 1, -1.0}, {2, 3, -1.0}});
  CHECK(has_key(validate_grid(g), "topology"));
  CHECK_THROWS_AS(ptdf_matrix(g), ModelError);
}

TEST_CASE("property: superposition, slack independence and flow conservation") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n_bus = 3 + static_cast<int>(rng() % 5);
    std::vector<Line> lines;
    for (int b = 1; b < n_bus; ++b) lines.push_back({static_cast<int>(rng() % b), b, -(0.5 + (u(rng) + 1.0) * 10.0)});
    for (int extra = 0; extra < 3; ++extra) {
      const int a = static_cast<int>(rng() % n_bus), b = static_cast<int>(rng() % n_bus);
      if (a != b) lines.push_back({a, b, -(1.0 + (u(rng) + 1.0))});
    }
    const auto g = network(n_bus, lines);
    REQUIRE(validate_grid(g).empty());
    const auto F = bus_ptdf(g);

    auto balanced = [&] {
      Eigen::VectorXd p(n_bus);
      for (int i = 0; i < n_bus; ++i) p(i) = u(rng);
      p(n_bus - 1) -= p.sum();
      return p;
    };
    const Eigen::VectorXd p1 = balanced(), p2 = balanced();
    const double a = u(rng), b = u(rng);
    CHECK((F * (a * p1 + b * p2) - (a * F * p1 + b * F * p2)).norm() < 1e-9);

    // Conservation: oriented flows leaving each bus equal its injection.
    const Eigen::VectorXd f = F * p1;
    Eigen::VectorXd net = Eigen::VectorXd::Zero(n_bus);
    for (std::size_t e = 0; e < lines.size(); ++e) {
      net(lines[e].from_bus) += f(static_cast<Eigen::Index>(e));
      net(lines[e].to_bus) -= f(static_cast<Eigen::Index>(e));
    }
    CHECK((net - p1).lpNorm<Eigen::Infinity>() < 1e-9);

    // Another reference bus: re-index so that bus n_bus-1 becomes bus 0.
    auto relabel = [&](int x) { return x == 0 ? n_bus - 1 : (x == n_bus - 1 ? 0 : x); };
    std::vector<Line> swapped = lines;
    for (auto& l : swapped) {
      l.from_bus = relabel(l.from_bus);
      l.to_bus = relabel(l.to_bus);
    }
    const auto F2 = bus_ptdf(network(n_bus, swapped));
    Eigen::VectorXd p1_swapped(n_bus);
    for (int i = 0; i < n_bus; ++i) p1_swapped(relabel(i)) = p1(i);
    CHECK((F2 * p1_swapped - f).norm() < 1e-9);
  }
}

TEST_CASE("json round trip") {
  const auto g = case_study_grid();
  CHECK(grid_from_json(grid_to_json(g)) == g);
  auto doc = grid_to_json(g);
  doc.erase("x_max");
  CHECK_THROWS_AS(grid_from_json(doc), InputError);
}
