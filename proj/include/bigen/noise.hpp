#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "bigen/dag.hpp"
#include "bigen/errors.hpp"
#include "bigen/mechanism.hpp"

namespace bigen {

/// Link of a linear mechanism, X_j = f(W' X_pa) + eps with f = identity.
struct IdentityLink {
  double operator()(double v) const noexcept { return v; }
  double derivative(double) const noexcept { return 1.0; }
};

/// One value per node noise and per edge noise of an ancestor subgraph.
/// `nodes` and `edges` are the keys; the value vectors are aligned with them.
struct NoiseAssignment {
  std::vector<NodeId> nodes;
  std::vector<double> node_noise;
  std::vector<EdgeId> edges;
  std::vector<double> edge_noise;
};

struct ForwardResult {
  std::vector<NodeId> nodes;
  std::vector<double> values;
  double leaf_value = 0.0;
};

struct GradientBundle {
  double leaf_value = 0.0;
  std::vector<NodeId> nodes;
  std::vector<double> d_leaf_d_node_noise;
  std::vector<EdgeId> edges;
  std::vector<double> d_leaf_d_edge_noise;
};

/// Scratch buffers for allocation-free forward / reverse sweeps.
struct LeafWorkspace {
  std::vector<double> values;
  std::vector<double> pre;
  std::vector<double> adjoint;
};

/// The target's ancestor subgraph compiled into flat arrays, representing the
/// leaf as a function of its noises: X_target = g(eps, xi).
///
/// Local nodes follow the graph's topological order (the target is last, as
/// the unique sink). Edge slots are grouped by child in that order, each
/// group in the child's parent-list order. A node's weight in the sweep is
/// base_weight + xi.
template <class Link = IdentityLink>
class BasicLeafModel {
 public:
  BasicLeafModel(const Dag& dag, const WeightTable& weights, NodeId target, Link link = {})
      : target_(target), link_(link) {
    if (!dag.contains(target)) throw UnknownNode(target);
    if (weights.size() != dag.size()) throw InputError("weight table size mismatch");
    std::vector<char> member(dag.size(), 0);
    for (NodeId a : dag.ancestors(target)) member[a] = 1;
    member[target] = 1;

    std::vector<std::size_t> local(dag.size(), 0);
    for (NodeId v : dag.topological_order()) {
      if (!member[v]) continue;
      local[v] = nodes_.size();
      nodes_.push_back(v);
    }
    offset_.push_back(0);
    for (NodeId v : nodes_) {
      const auto parents = dag.parents(v);
      if (weights[v].size() != static_cast<Eigen::Index>(parents.size()))
        throw InputError("weight vector length mismatch at node " + std::to_string(v));
      for (std::size_t k = 0; k < parents.size(); ++k) {
        parent_.push_back(local[parents[k]]);
        weight_.push_back(weights[v][static_cast<Eigen::Index>(k)]);
        edges_.push_back({parents[k], v});
        global_edge_.push_back(dag.edge_offset(v) + k);
      }
      offset_.push_back(parent_.size());
    }
  }

  BasicLeafModel(const MechanismModel& model, NodeId target, Link link = {})
      : BasicLeafModel(model.dag, map_weights(model), target, link) {}

  NodeId target() const noexcept { return target_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<NodeId>& nodes() const noexcept { return nodes_; }
  const std::vector<EdgeId>& edges() const noexcept { return edges_; }
  std::span<const double> base_weights() const noexcept { return weight_; }
  /// Global edge index of each slot.
  std::span<const std::size_t> global_edges() const noexcept { return global_edge_; }

  LeafWorkspace workspace() const {
    return {std::vector<double>(nodes_.size()), std::vector<double>(nodes_.size()),
            std::vector<double>(nodes_.size())};
  }

  NoiseAssignment zero_noise() const {
    return {nodes_, std::vector<double>(nodes_.size(), 0.0), edges_,
            std::vector<double>(edges_.size(), 0.0)};
  }

  /// Restricts graph-wide noise vectors (node ids / global edge indices) to
  /// this subgraph.
  NoiseAssignment restrict(std::span<const double> node_noise,
                           std::span<const double> edge_noise) const {
    NoiseAssignment a = zero_noise();
    for (std::size_t k = 0; k < nodes_.size(); ++k) a.node_noise[k] = node_noise[nodes_[k]];
    if (!edge_noise.empty())
      for (std::size_t s = 0; s < edges_.size(); ++s) a.edge_noise[s] = edge_noise[global_edge_[s]];
    return a;
  }

  /// Reorders `a` into local slot order; throws KeyMismatch if its key sets
  /// differ from this subgraph's.
  NoiseAssignment aligned(const NoiseAssignment& a) const {
    if (a.nodes.size() != a.node_noise.size() || a.edges.size() != a.edge_noise.size())
      throw KeyMismatch("noise assignment keys and values differ in length");
    if (a.nodes == nodes_ && a.edges == edges_) return a;
    if (a.nodes.size() != nodes_.size() || a.edges.size() != edges_.size())
      throw KeyMismatch("noise assignment does not cover the ancestor subgraph");
    std::map<NodeId, double> nv;
    for (std::size_t k = 0; k < a.nodes.size(); ++k) nv[a.nodes[k]] = a.node_noise[k];
    std::map<EdgeId, double> ev;
    for (std::size_t k = 0; k < a.edges.size(); ++k) ev[a.edges[k]] = a.edge_noise[k];
    NoiseAssignment out = zero_noise();
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      auto it = nv.find(nodes_[k]);
      if (it == nv.end()) throw KeyMismatch("missing node noise for node " + std::to_string(nodes_[k]));
      out.node_noise[k] = it->second;
    }
    for (std::size_t s = 0; s < edges_.size(); ++s) {
      auto it = ev.find(edges_[s]);
      if (it == ev.end())
        throw KeyMismatch("missing edge noise for edge " + std::to_string(edges_[s].src) + "->" +
                          std::to_string(edges_[s].dst));
      out.edge_noise[s] = it->second;
    }
    return out;
  }

  /// Forward sweep; writes every node value and returns the leaf value.
  double forward(std::span<const double> eps, std::span<const double> xi,
                 LeafWorkspace& ws) const {
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const std::size_t b = offset_[k], e = offset_[k + 1];
      if (b == e) {
        ws.pre[k] = 0.0;
        ws.values[k] = eps[k];
        continue;
      }
      double acc = 0.0;
      for (std::size_t s = b; s < e; ++s) acc += (weight_[s] + xi[s]) * ws.values[parent_[s]];
      ws.pre[k] = acc;
      ws.values[k] = link_(acc) + eps[k];
    }
    return ws.values.back();
  }

  /// Exact reverse sweep: adjoints a_target = 1, a_i += a_j f'(pre_j) (mu_ij + xi_ij);
  /// dX/deps_j = a_j and dX/dxi_ij = a_j f'(pre_j) X_i.
  double gradient(std::span<const double> eps, std::span<const double> xi, LeafWorkspace& ws,
                  std::span<double> d_eps, std::span<double> d_xi) const {
    const double leaf = forward(eps, xi, ws);
    std::fill(ws.adjoint.begin(), ws.adjoint.end(), 0.0);
    ws.adjoint.back() = 1.0;
    for (std::size_t k = nodes_.size(); k-- > 0;) {
      const double a = ws.adjoint[k];
      d_eps[k] = a;
      const std::size_t b = offset_[k], e = offset_[k + 1];
      if (b == e) continue;
      const double g = a * link_.derivative(ws.pre[k]);
      for (std::size_t s = b; s < e; ++s) {
        d_xi[s] = g * ws.values[parent_[s]];
        ws.adjoint[parent_[s]] += g * (weight_[s] + xi[s]);
      }
    }
    return leaf;
  }

 private:
  NodeId target_;
  Link link_;
  std::vector<NodeId> nodes_;
  std::vector<std::size_t> offset_;
  std::vector<std::size_t> parent_;
  std::vector<double> weight_;
  std::vector<EdgeId> edges_;
  std::vector<std::size_t> global_edge_;
};

using LeafModel = BasicLeafModel<>;

/// X_target and all intermediate values of the ancestor subgraph for the given
/// noises, with trained MAP weights as the base.
inline ForwardResult forward_g(const MechanismModel& model, NodeId target,
                               const NoiseAssignment& noise) {
  const LeafModel leaf(model, target);
  const auto a = leaf.aligned(noise);
  auto ws = leaf.workspace();
  ForwardResult r;
  r.leaf_value = leaf.forward(a.node_noise, a.edge_noise, ws);
  r.nodes = leaf.nodes();
  r.values = ws.values;
  return r;
}

inline GradientBundle gradient_g(const MechanismModel& model, NodeId target,
                                 const NoiseAssignment& noise) {
  const LeafModel leaf(model, target);
  const auto a = leaf.aligned(noise);
  auto ws = leaf.workspace();
  GradientBundle g;
  g.nodes = leaf.nodes();
  g.edges = leaf.edges();
  g.d_leaf_d_node_noise.resize(leaf.node_count());
  g.d_leaf_d_edge_noise.resize(leaf.edge_count());
  g.leaf_value = leaf.gradient(a.node_noise, a.edge_noise, ws, g.d_leaf_d_node_noise,
                               g.d_leaf_d_edge_noise);
  return g;
}

/// Inferred edge noise xi'_j = W'_j - W_j per global edge index, where W' is
/// the MAP of a refit on the abnormal batch with the trained posterior as
/// prior. One value per edge per batch.
inline std::vector<double> infer_edge_noise(const MechanismModel& model, const Dataset& abnormal,
                                            PriorCarry carry = PriorCarry::full_precision) {
  if (abnormal.rows() == 0) throw InputError("abnormal batch is empty");
  const auto refit = update_posterior(model, abnormal, carry);
  std::vector<double> xi(model.dag.edge_count(), 0.0);
  for (NodeId j = 0; j < model.size(); ++j) {
    const auto diff = refit.nodes[j].posterior_mean - model.nodes[j].posterior_mean;
    const std::size_t off = model.dag.edge_offset(j);
    for (Eigen::Index k = 0; k < diff.size(); ++k) xi[off + static_cast<std::size_t>(k)] = diff[k];
  }
  return xi;
}

/// W + xi per node.
inline WeightTable shifted_weights(const MechanismModel& model, std::span<const double> edge_noise) {
  WeightTable w = map_weights(model);
  for (NodeId j = 0; j < model.size(); ++j) {
    const std::size_t off = model.dag.edge_offset(j);
    for (Eigen::Index k = 0; k < w[j].size(); ++k) w[j][k] += edge_noise[off + static_cast<std::size_t>(k)];
  }
  return w;
}

/// eps_j = X_j - f(W_j' X_pa) for every node of one observation.
template <class Link = IdentityLink>
std::vector<double> infer_node_noise(const Dag& dag, std::span<const double> row,
                                     const WeightTable& weights, Link link = {}) {
  if (row.size() != dag.size())
    throw InputError("row has " + std::to_string(row.size()) + " values, graph has " +
                     std::to_string(dag.size()) + " nodes");
  std::vector<double> eps(dag.size());
  for (NodeId j = 0; j < dag.size(); ++j) {
    const auto parents = dag.parents(j);
    if (parents.empty()) {
      eps[j] = row[j];
      continue;
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < parents.size(); ++k)
      acc += weights[j][static_cast<Eigen::Index>(k)] * row[parents[k]];
    eps[j] = row[j] - link(acc);
  }
  return eps;
}

inline std::vector<double> infer_node_noise(const MechanismModel& model, std::span<const double> row,
                                            const WeightTable& weights) {
  return infer_node_noise(model.dag, row, weights);
}

inline std::vector<double> row_of(const Dataset& data, std::size_t r) {
  std::vector<double> out(data.cols());
  for (std::size_t j = 0; j < data.cols(); ++j)
    out[j] = data.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
  return out;
}

}  // namespace bigen
