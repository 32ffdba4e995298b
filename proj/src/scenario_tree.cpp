#include "mgmpc/scenario_tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mgmpc/error.hpp"

namespace mgmpc {

ScenarioTree ScenarioTree::from_nodes(std::vector<Node> nodes) {
  if (nodes.empty()) throw InputError("scenario tree needs at least a root node");
  ScenarioTree tree;
  for (auto& n : nodes) n.children.clear();
  int horizon = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const int a = nodes[i].ancestor;
    if (i == 0) continue;
    if (a < 0 || a >= static_cast<int>(i))
      throw InputError("node " + std::to_string(i) + " has invalid ancestor " + std::to_string(a));
    nodes[static_cast<std::size_t>(a)].children.push_back(static_cast<int>(i));
    horizon = std::max(horizon, nodes[i].stage);
  }
  tree.nodes_ = std::move(nodes);
  tree.horizon_ = horizon;

  tree.stage_offsets_.assign(static_cast<std::size_t>(horizon) + 2, 0);
  for (const auto& n : tree.nodes_) {
    if (n.stage < 0 || n.stage > horizon) throw InputError("node stage out of range");
    ++tree.stage_offsets_[static_cast<std::size_t>(n.stage) + 1];
  }
  std::partial_sum(tree.stage_offsets_.begin(), tree.stage_offsets_.end(),
                   tree.stage_offsets_.begin());
  return tree;
}

ScenarioTree ScenarioTree::root_only() {
  Node root;
  return from_nodes({root});
}

const Disturbance& ScenarioTree::disturbance(int id) const {
  if (id == 0) throw InputError("the root node carries no disturbance");
  return node(id).disturbance;
}

int ScenarioTree::stage_begin(int j) const {
  if (j < 0 || j > horizon_) throw std::out_of_range("stage " + std::to_string(j) + " out of range");
  return stage_offsets_[static_cast<std::size_t>(j)];
}

int ScenarioTree::stage_size(int j) const {
  if (j < 0 || j > horizon_) throw std::out_of_range("stage " + std::to_string(j) + " out of range");
  return stage_offsets_[static_cast<std::size_t>(j) + 1] - stage_offsets_[static_cast<std::size_t>(j)];
}

std::vector<int> ScenarioTree::nodes_at(int j) const {
  std::vector<int> ids(static_cast<std::size_t>(stage_size(j)));
  std::iota(ids.begin(), ids.end(), stage_begin(j));
  return ids;
}

std::vector<TreeViolation> validate(const ScenarioTree& tree, double tol) {
  std::vector<TreeViolation> out;
  auto add = [&](int node, int stage, std::string law, std::string msg) {
    out.push_back({node, stage, std::move(law), std::move(msg)});
  };
  const int n = tree.node_count();
  if (n == 0) {
    add(-1, -1, "root", "tree has no nodes");
    return out;
  }
  const auto& root = tree.node(0);
  if (root.stage != 0) add(0, root.stage, "root", "root node is not at stage 0");
  if (root.ancestor != -1) add(0, 0, "root", "root node has an ancestor");
  if (!root.disturbance.w_r.empty() || !root.disturbance.w_d.empty())
    add(0, 0, "root disturbance", "root node carries a disturbance");

  std::size_t n_r = 0, n_d = 0;
  bool dims_set = false;
  int prev_stage = 0;
  for (int i = 0; i < n; ++i) {
    const auto& nd = tree.node(i);
    if (nd.stage < prev_stage) add(i, nd.stage, "breadth-first order", "node ids are not ordered by stage");
    prev_stage = std::max(prev_stage, nd.stage);
    if (!(nd.probability > 0.0 && nd.probability <= 1.0 + tol)) {
      std::ostringstream os;
      os << "node " << i << " probability " << nd.probability << " outside (0,1]";
      add(i, nd.stage, "probability range", os.str());
    }
    if (i > 0) {
      if (nd.stage == 0) add(i, 0, "root", "more than one stage-0 node");
      const int a = nd.ancestor;
      if (a < 0 || a >= n) {
        add(i, nd.stage, "ancestor", "node " + std::to_string(i) + " has no valid ancestor");
        continue;
      }
      if (tree.stage_of(a) + 1 != nd.stage)
        add(i, nd.stage, "stage succession",
            "node " + std::to_string(i) + " stage is not ancestor stage + 1");
      const auto& siblings = tree.children_of(a);
      if (std::find(siblings.begin(), siblings.end(), i) == siblings.end())
        add(i, nd.stage, "children/ancestor consistency",
            "node " + std::to_string(i) + " missing from children of " + std::to_string(a));
      if (!dims_set) {
        n_r = nd.disturbance.w_r.size();
        n_d = nd.disturbance.w_d.size();
        dims_set = true;
      } else if (nd.disturbance.w_r.size() != n_r || nd.disturbance.w_d.size() != n_d) {
        add(i, nd.stage, "disturbance dimension", "node " + std::to_string(i) + " disturbance size differs");
      }
      for (double wd : nd.disturbance.w_d)
        if (wd > tol) {
          std::ostringstream os;
          os << "node " << i << " load " << wd << " is positive (loads must be <= 0)";
          add(i, nd.stage, "load sign", os.str());
        }
    }
    for (int c : nd.children)
      if (c <= 0 || c >= n || tree.ancestor_of(c) != i)
        add(i, nd.stage, "children/ancestor consistency",
            "child " + std::to_string(c) + " of node " + std::to_string(i) + " does not point back");
    if (!nd.children.empty()) {
      double s = 0.0;
      for (int c : nd.children)
        if (c > 0 && c < n) s += tree.probability(c);
      if (std::abs(s - nd.probability) > tol) {
        std::ostringstream os;
        os << "node " << i << " probability " << nd.probability << " differs from children sum " << s;
        add(i, nd.stage, "probability conservation", os.str());
      }
    }
  }
  for (int j = 0; j <= tree.horizon(); ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      if (tree.stage_of(i) == j) s += tree.probability(i);
    if (std::abs(s - 1.0) > tol) {
      std::ostringstream os;
      os << "stage " << j << " probability sum " << s;
      add(-1, j, "stage probability sum", os.str());
    }
  }
  return out;
}

std::vector<double> stage_probability_vector(const ScenarioTree& tree, int j) {
  if (j < 0 || j > tree.horizon())
    throw std::out_of_range("stage " + std::to_string(j) + " outside [0, " +
                            std::to_string(tree.horizon()) + "]");
  std::vector<double> pi;
  for (int id : tree.nodes_at(j)) pi.push_back(tree.probability(id));
  return pi;
}

namespace {

double projection(const Disturbance& e) {
  return std::accumulate(e.w_r.begin(), e.w_r.end(), 0.0) +
         std::accumulate(e.w_d.begin(), e.w_d.end(), 0.0);
}

// Weighted 1-D k-means. Returns the cluster label of every point; labels are
// ordered by ascending centre and contiguous from 0.
std::vector<int> kmeans_1d(const std::vector<double>& v, const std::vector<double>& w, int k) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

  std::vector<double> distinct;
  for (std::size_t idx : order)
    if (distinct.empty() || v[idx] != distinct.back()) distinct.push_back(v[idx]);
  k = std::min<int>(k, static_cast<int>(distinct.size()));
  if (k <= 1) return std::vector<int>(n, 0);

  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> centre(static_cast<std::size_t>(k));
  for (int m = 0; m < k; ++m) {
    const double level = (m + 0.5) / k * total;
    double acc = 0.0;
    std::size_t pick = order.back();
    for (std::size_t idx : order) {
      acc += w[idx];
      if (acc >= level) {
        pick = idx;
        break;
      }
    }
    centre[static_cast<std::size_t>(m)] = v[pick];
  }

  std::vector<int> label(n, -1);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (std::size_t p = 0; p < n; ++p) {
      int best = 0;
      double best_d = std::abs(v[p] - centre[0]);
      for (int m = 1; m < k; ++m) {
        const double d = std::abs(v[p] - centre[static_cast<std::size_t>(m)]);
        if (d < best_d) {
          best = m;
          best_d = d;
        }
      }
      if (label[p] != best) {
        label[p] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sw(static_cast<std::size_t>(k), 0.0), sv(static_cast<std::size_t>(k), 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      sw[static_cast<std::size_t>(label[p])] += w[p];
      sv[static_cast<std::size_t>(label[p])] += w[p] * v[p];
    }
    for (int m = 0; m < k; ++m)
      if (sw[static_cast<std::size_t>(m)] > 0.0)
        centre[static_cast<std::size_t>(m)] = sv[static_cast<std::size_t>(m)] / sw[static_cast<std::size_t>(m)];
  }

  // Drop empty clusters and relabel by ascending centre (stable on index).
  std::vector<int> used;
  for (int m = 0; m < k; ++m)
    if (std::find(label.begin(), label.end(), m) != label.end()) used.push_back(m);
  std::stable_sort(used.begin(), used.end(), [&](int a, int b) {
    return centre[static_cast<std::size_t>(a)] < centre[static_cast<std::size_t>(b)];
  });
  std::vector<int> remap(static_cast<std::size_t>(k), -1);
  for (std::size_t r = 0; r < used.size(); ++r) remap[static_cast<std::size_t>(used[r])] = static_cast<int>(r);
  for (auto& l : label) l = remap[static_cast<std::size_t>(l)];
  return label;
}

}  // namespace

ScenarioTree build_tree(const std::vector<ErrorPath>& error_paths, const std::vector<int>& branching,
                        const std::vector<Disturbance>& nominal_forecast) {
  const int horizon = static_cast<int>(branching.size());
  if (error_paths.empty()) throw InputError("build_tree: no error paths");
  if (horizon > 0 && branching[0] < 1) throw InputError("build_tree: branching[0] must be >= 1");
  long long leaves = 1;
  for (int b : branching) {
    if (b < 1) throw InputError("build_tree: branching factors must be >= 1");
    leaves *= b;
  }
  if (static_cast<long long>(error_paths.size()) < leaves)
    throw InputError("build_tree: branching infeasible for path count (" +
                     std::to_string(error_paths.size()) + " paths, " + std::to_string(leaves) +
                     " leaves requested)");
  if (static_cast<int>(nominal_forecast.size()) < horizon)
    throw InputError("build_tree: nominal forecast shorter than horizon");

  double wsum = 0.0;
  for (const auto& p : error_paths) {
    if (static_cast<int>(p.steps.size()) < horizon) throw InputError("build_tree: error path shorter than horizon");
    if (!(p.weight >= 0.0)) throw InputError("build_tree: negative path weight");
    wsum += p.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw InputError("build_tree: path weights must sum to 1");

  for (int j = 0; j < horizon; ++j) {
    const auto& nom = nominal_forecast[static_cast<std::size_t>(j)];
    for (const auto& p : error_paths) {
      const auto& e = p.steps[static_cast<std::size_t>(j)];
      if (e.w_r.size() != nom.w_r.size() || e.w_d.size() != nom.w_d.size())
        throw InputError("build_tree: error and nominal disturbance dimensions differ");
    }
  }

  std::vector<ScenarioTree::Node> nodes(1);
  std::vector<std::vector<std::size_t>> members(1);
  members[0].resize(error_paths.size());
  std::iota(members[0].begin(), members[0].end(), 0);

  std::vector<int> level{0};
  for (int j = 0; j < horizon; ++j) {
    std::vector<int> next;
    const auto& nom = nominal_forecast[static_cast<std::size_t>(j)];
    for (int parent : level) {
      const auto mem = members[static_cast<std::size_t>(parent)];
      std::vector<double> v, w;
      for (std::size_t p : mem) {
        v.push_back(projection(error_paths[p].steps[static_cast<std::size_t>(j)]));
        w.push_back(error_paths[p].weight);
      }
      const auto label = kmeans_1d(v, w, branching[static_cast<std::size_t>(j)]);
      const int k = label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
      for (int c = 0; c < k; ++c) {
        ScenarioTree::Node child;
        child.stage = j + 1;
        child.ancestor = parent;
        std::vector<std::size_t> cm;
        double prob = 0.0;
        Disturbance mean{std::vector<double>(nom.w_r.size(), 0.0), std::vector<double>(nom.w_d.size(), 0.0)};
        for (std::size_t q = 0; q < mem.size(); ++q) {
          if (label[q] != c) continue;
          const auto& path = error_paths[mem[q]];
          const auto& e = path.steps[static_cast<std::size_t>(j)];
          cm.push_back(mem[q]);
          prob += path.weight;
          for (std::size_t r = 0; r < e.w_r.size(); ++r) mean.w_r[r] += path.weight * e.w_r[r];
          for (std::size_t r = 0; r < e.w_d.size(); ++r) mean.w_d[r] += path.weight * e.w_d[r];
        }
        child.disturbance = nom;
        if (prob > 0.0) {
          for (std::size_t r = 0; r < nom.w_r.size(); ++r) child.disturbance.w_r[r] += mean.w_r[r] / prob;
          for (std::size_t r = 0; r < nom.w_d.size(); ++r) child.disturbance.w_d[r] += mean.w_d[r] / prob;
        }
        child.probability = prob;
        next.push_back(static_cast<int>(nodes.size()));
        nodes.push_back(std::move(child));
        members.push_back(std::move(cm));
      }
    }
    level = std::move(next);
  }
  return ScenarioTree::from_nodes(std::move(nodes));
}

ScenarioTree chain_tree(const std::vector<Disturbance>& forecast) {
  std::vector<ScenarioTree::Node> nodes(1);
  for (std::size_t j = 0; j < forecast.size(); ++j) {
    ScenarioTree::Node n;
    n.stage = static_cast<int>(j) + 1;
    n.ancestor = static_cast<int>(j);
    n.disturbance = forecast[j];
    nodes.push_back(std::move(n));
  }
  return ScenarioTree::from_nodes(std::move(nodes));
}

nlohmann::json tree_to_json(const ScenarioTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (int i = 0; i < tree.node_count(); ++i) {
    const auto& n = tree.node(i);
    nlohmann::json jn;
    jn["id"] = i;
    jn["stage"] = n.stage;
    jn["ancestor"] = i == 0 ? nlohmann::json(nullptr) : nlohmann::json(n.ancestor);
    jn["prob"] = n.probability;
    jn["w_r"] = n.disturbance.w_r;
    jn["w_d"] = n.disturbance.w_d;
    nodes.push_back(std::move(jn));
  }
  return {{"nodes", std::move(nodes)}, {"horizon", tree.horizon()}};
}

ScenarioTree tree_from_json(const nlohmann::json& doc) {
  std::vector<ScenarioTree::Node> nodes;
  const auto& jn = doc.at("nodes");
  nodes.resize(jn.size());
  for (const auto& item : jn) {
    const auto id = item.at("id").get<std::size_t>();
    if (id >= nodes.size()) throw InputError("tree json: node id out of range");
    auto& n = nodes[id];
    n.stage = item.at("stage").get<int>();
    n.ancestor = item.at("ancestor").is_null() ? -1 : item.at("ancestor").get<int>();
    n.probability = item.at("prob").get<double>();
    if (item.contains("w_r")) n.disturbance.w_r = item.at("w_r").get<std::vector<double>>();
    if (item.contains("w_d")) n.disturbance.w_d = item.at("w_d").get<std::vector<double>>();
  }
  auto tree = ScenarioTree::from_nodes(std::move(nodes));
  if (doc.contains("horizon") && doc.at("horizon").get<int>() != tree.horizon())
    throw InputError("tree json: horizon does not match node stages");
  return tree;
}

}  // namespace mgmpc
