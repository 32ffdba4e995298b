#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "mgmpc/formulation.hpp"
#include "mgmpc/grid.hpp"
#include "mgmpc/scenario_tree.hpp"

namespace testsupport {

using namespace mgmpc;

/// Breadth-first tree with `branching[j]` children per stage-j node. Child c
/// of b sees w_r = base_r[j] + spread * (c - (b - 1) / 2), clipped to
/// [0, r_max], and load w_d[j] - 0.5 * spread * (c - (b - 1) / 2). With an
/// rng the branch probabilities are random, otherwise equal.
inline ScenarioTree fan_tree(const std::vector<int>& branching, const std::vector<double>& base_r,
                             const std::vector<double>& base_d, double spread, double r_max = 2.0,
                             std::mt19937* rng = nullptr) {
  std::vector<ScenarioTree::Node> nodes(1);
  std::vector<int> frontier{0};
  for (std::size_t j = 0; j < branching.size(); ++j) {
    std::vector<int> next;
    for (int parent : frontier) {
      const int b = branching[j];
      std::vector<double> share(b, 1.0);
      if (rng) {
        std::uniform_real_distribution<double> u(0.2, 1.0);
        for (double& s : share) s = u(*rng);
      }
      double total = 0.0;
      for (double s : share) total += s;
      for (int c = 0; c < b; ++c) {
        ScenarioTree::Node n;
        n.stage = static_cast<int>(j) + 1;
        n.ancestor = parent;
        n.probability = nodes[parent].probability * share[c] / total;
        const double off = c - (b - 1) / 2.0;
        n.disturbance.w_r = {std::clamp(base_r[j] + spread * off, 0.0, r_max)};
        n.disturbance.w_d = {std::min(0.0, base_d[j] - 0.5 * spread * off)};
        next.push_back(static_cast<int>(nodes.size()));
        nodes.push_back(std::move(n));
      }
    }
    frontier = std::move(next);
  }
  return ScenarioTree::from_nodes(std::move(nodes));
}

/// Node values implied by a control policy through the droop equations;
/// an independent reference for the equality rows of the formulation.
inline DecodedSolution simulate_policy(const ScenarioTree& tree, const GridSpec& s, const std::vector<double>& x0,
                                       const std::function<ControlInput(int)>& policy) {
  DecodedSolution sol;
  sol.nodes.resize(tree.node_count());
  sol.nodes[0].x = x0;
  for (int i = 0; i < tree.node_count(); ++i) {
    if (!tree.is_leaf(i)) sol.nodes[i].v = policy(i);
    if (i == 0) continue;
    const int a = tree.ancestor_of(i);
    const ControlInput& v = sol.nodes[a].v;
    const auto& w = tree.disturbance(i);
    NodeSolution& n = sol.nodes[i];
    double imbalance = 0.0, denom = 0.0;
    for (int k = 0; k < s.n_r; ++k) {
      n.p_r.push_back(std::min(v.u_r[k], w.w_r[k]));
      // Ties follow the presolved binaries of the formulation.
      const double beta = v.u_r[k] < w.w_r[k] ? 1.0 : v.u_r[k] > w.w_r[k] ? 0.0 : w.w_r[k] >= s.p_r_max[k] ? 1.0 : 0.0;
      n.beta.push_back(beta);
      imbalance += n.p_r[k];
    }
    for (double d : w.w_d) imbalance += d;
    for (int k = 0; k < s.n_t; ++k) {
      imbalance += v.u_t[k];
      denom += v.delta[k] / s.K_t[k];
    }
    for (int k = 0; k < s.n_s; ++k) {
      imbalance += v.u_s[k];
      denom += 1.0 / s.K_s[k];
    }
    n.mu = -imbalance / denom;
    for (int k = 0; k < s.n_t; ++k) {
      n.phi.push_back(n.mu * v.delta[k]);
      n.p_t.push_back(v.u_t[k] + n.phi[k] / s.K_t[k]);
    }
    for (int k = 0; k < s.n_s; ++k) {
      n.p_s.push_back(v.u_s[k] + n.mu / s.K_s[k]);
      n.x.push_back(sol.nodes[a].x[k] - s.T_s * n.p_s[k]);
    }
  }
  return sol;
}

}  // namespace testsupport
