#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <functional>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bigen/errors.hpp"

namespace bigen {

using NodeId = std::size_t;

struct EdgeId {
  NodeId src = 0;
  NodeId dst = 0;

  friend auto operator<=>(const EdgeId&, const EdgeId&) = default;
};

/// Immutable directed acyclic graph over dense node ids 0..n-1.
///
/// The order of each parent list is fixed at construction and is the single
/// source of truth for weight-vector coordinates: the k-th entry of a node's
/// weight vector (and of its edge-noise vector) belongs to the k-th parent.
/// Edges are enumerated globally in (child id, parent-list position) order;
/// `edge_index` maps an EdgeId to that position.
class Dag {
 public:
  Dag() = default;

  explicit Dag(std::vector<std::vector<NodeId>> parents,
               std::vector<std::string> names = {})
      : parents_(std::move(parents)), names_(std::move(names)) {
    const std::size_t n = parents_.size();
    if (names_.empty()) {
      names_.reserve(n);
      for (std::size_t i = 0; i < n; ++i) names_.push_back("X" + std::to_string(i));
    }
    if (names_.size() != n) throw InputError("node name count does not match node count");

    children_.assign(n, {});
    edge_offset_.assign(n + 1, 0);
    for (NodeId j = 0; j < n; ++j) {
      auto& pa = parents_[j];
      for (NodeId p : pa) {
        if (p >= n) throw UnknownNode(p);
        if (p == j) throw CycleDetected();
      }
      auto sorted = pa;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw InputError("duplicate parent in parent list of node " + std::to_string(j));
      edge_offset_[j + 1] = edge_offset_[j] + pa.size();
      for (NodeId p : pa) {
        children_[p].push_back(j);
        edges_.push_back({p, j});
      }
    }
    order_ = kahn_order();
  }

  /// Builds a graph from an edge list; parent order follows edge order.
  static Dag from_edges(std::size_t node_count, std::span<const EdgeId> edges,
                        std::vector<std::string> names = {}) {
    std::vector<std::vector<NodeId>> parents(node_count);
    for (const auto& e : edges) {
      if (e.src >= node_count) throw UnknownNode(e.src);
      if (e.dst >= node_count) throw UnknownNode(e.dst);
      parents[e.dst].push_back(e.src);
    }
    return Dag(std::move(parents), std::move(names));
  }

  std::size_t size() const noexcept { return parents_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  bool contains(NodeId id) const noexcept { return id < size(); }

  std::span<const NodeId> parents(NodeId j) const { return parents_.at(j); }
  std::span<const NodeId> children(NodeId j) const { return children_.at(j); }
  const std::string& name(NodeId j) const { return names_.at(j); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<EdgeId>& edges() const noexcept { return edges_; }

  /// Position of node j's first incoming edge in the global edge order.
  std::size_t edge_offset(NodeId j) const { return edge_offset_.at(j); }

  std::optional<std::size_t> edge_index(EdgeId e) const {
    if (e.dst >= size()) return std::nullopt;
    const auto& pa = parents_[e.dst];
    auto it = std::find(pa.begin(), pa.end(), e.src);
    if (it == pa.end()) return std::nullopt;
    return edge_offset_[e.dst] + static_cast<std::size_t>(it - pa.begin());
  }

  /// Parents before children; ties broken by ascending id.
  const std::vector<NodeId>& topological_order() const noexcept { return order_; }

  /// Ancestors of `target` (excluding target), ascending.
  std::vector<NodeId> ancestors(NodeId target) const {
    if (!contains(target)) throw UnknownNode(target);
    std::vector<char> seen(size(), 0);
    std::vector<NodeId> stack{target};
    while (!stack.empty()) {
      NodeId v = stack.back();
      stack.pop_back();
      for (NodeId p : parents_[v]) {
        if (!seen[p]) {
          seen[p] = 1;
          stack.push_back(p);
        }
      }
    }
    std::vector<NodeId> out;
    for (NodeId i = 0; i < size(); ++i)
      if (seen[i] && i != target) out.push_back(i);
    return out;
  }

  bool operator==(const Dag& o) const {
    return parents_ == o.parents_ && names_ == o.names_;
  }

 private:
  std::vector<NodeId> kahn_order() const {
    const std::size_t n = size();
    std::vector<std::size_t> indeg(n);
    for (NodeId j = 0; j < n; ++j) indeg[j] = parents_[j].size();
    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for (NodeId j = 0; j < n; ++j)
      if (indeg[j] == 0) ready.push(j);
    std::vector<NodeId> order;
    order.reserve(n);
    while (!ready.empty()) {
      NodeId v = ready.top();
      ready.pop();
      order.push_back(v);
      for (NodeId c : children_[v])
        if (--indeg[c] == 0) ready.push(c);
    }
    if (order.size() != n) throw CycleDetected();
    return order;
  }

  std::vector<std::vector<NodeId>> parents_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<std::string> names_;
  std::vector<EdgeId> edges_;
  std::vector<std::size_t> edge_offset_{0};
  std::vector<NodeId> order_;
};

inline std::vector<NodeId> topological_order(const Dag& dag) { return dag.topological_order(); }

/// Ancestor-closed subgraph of a target together with the index mapping back
/// to the original graph. Sub-ids are assigned in ascending original-id order.
struct AncestorSubgraph {
  Dag dag;
  std::vector<NodeId> to_original;
  NodeId target = 0;  // sub-id of the target

  NodeId original(NodeId sub) const { return to_original.at(sub); }
};

inline AncestorSubgraph ancestor_subgraph(const Dag& dag, NodeId target) {
  auto members = dag.ancestors(target);
  members.insert(std::upper_bound(members.begin(), members.end(), target), target);
  std::vector<NodeId> to_sub(dag.size(), dag.size());
  for (std::size_t k = 0; k < members.size(); ++k) to_sub[members[k]] = k;

  std::vector<std::vector<NodeId>> parents(members.size());
  std::vector<std::string> names;
  names.reserve(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) {
    for (NodeId p : dag.parents(members[k])) parents[k].push_back(to_sub[p]);
    names.push_back(dag.name(members[k]));
  }
  AncestorSubgraph out{Dag(std::move(parents), std::move(names)), members, to_sub[target]};
  return out;
}

}  // namespace bigen
