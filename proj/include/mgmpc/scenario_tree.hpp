#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace mgmpc {

/// Uncertain input at one node: available renewable power per renewable
/// unit and (nonpositive) load per load, both in pu.
struct Disturbance {
  std::vector<double> w_r;
  std::vector<double> w_d;

  bool operator==(const Disturbance&) const = default;
};

/// Forecast scenario tree. Node ids are assigned breadth-first so that the
/// nodes of every stage form a contiguous id range; node 0 is the root.
///
/// The disturbance of the root is undefined and kept empty.
class ScenarioTree {
 public:
  struct Node {
    int stage = 0;
    int ancestor = -1;
    std::vector<int> children;
    double probability = 1.0;
    Disturbance disturbance;

    bool operator==(const Node&) const = default;
  };

  ScenarioTree() = default;

  /// Builds a tree from nodes given in breadth-first order. Children lists
  /// are derived from the ancestor links. Does not validate.
  static ScenarioTree from_nodes(std::vector<Node> nodes);

  /// A single root node with probability one (horizon 0).
  static ScenarioTree root_only();

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int horizon() const { return horizon_; }

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  const std::vector<Node>& nodes() const { return nodes_; }

  int stage_of(int id) const { return node(id).stage; }
  int ancestor_of(int id) const { return node(id).ancestor; }
  const std::vector<int>& children_of(int id) const { return node(id).children; }
  double probability(int id) const { return node(id).probability; }
  const Disturbance& disturbance(int id) const;

  /// First node id of stage j and number of nodes at stage j.
  int stage_begin(int j) const;
  int stage_size(int j) const;
  std::vector<int> nodes_at(int j) const;

  bool is_leaf(int id) const { return node(id).children.empty(); }

  bool operator==(const ScenarioTree&) const = default;

 private:
  std::vector<Node> nodes_;
  std::vector<int> stage_offsets_;  // size horizon_+2
  int horizon_ = 0;
};

/// One broken law found by validate().
struct TreeViolation {
  int node = -1;   // -1 when the violation concerns a whole stage
  int stage = -1;
  std::string law;
  std::string message;
};

std::vector<TreeViolation> validate(const ScenarioTree& tree, double tol = 1e-9);

/// Probabilities of the nodes at stage j, in node-id order.
std::vector<double> stage_probability_vector(const ScenarioTree& tree, int j);

/// A sampled disturbance-error sequence. steps[k] is the error at stage k+1.
struct ErrorPath {
  std::vector<Disturbance> steps;
  double weight = 0.0;
};

/// Clusters weighted error paths into a tree.
///
/// branching[k] is the number of children of every stage-k node (so the
/// horizon is branching.size()). nominal_forecast[k] is the nominal
/// disturbance at stage k+1; node disturbances are the nominal value plus
/// the probability-weighted mean error of the paths assigned to the node.
///
/// Per node and stage the member paths are split by 1-D k-means on the sum
/// of the error components, seeded at evenly spaced weighted quantiles and
/// capped at the number of distinct projected values. Children are ordered by
/// ascending cluster centre.
ScenarioTree build_tree(const std::vector<ErrorPath>& error_paths,
                        const std::vector<int>& branching,
                        const std::vector<Disturbance>& nominal_forecast);

/// Deterministic forecast: one path with zero error.
ScenarioTree chain_tree(const std::vector<Disturbance>& forecast);

nlohmann::json tree_to_json(const ScenarioTree& tree);
ScenarioTree tree_from_json(const nlohmann::json& doc);

}  // namespace mgmpc
