#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "bigen/bigen.hpp"

namespace bigen::testing {

/// Dense random DAG: node j takes each upstream node as a parent with
/// probability p.
using Parents = std::vector<std::vector<NodeId>>;

inline Dag dense_dag(std::size_t n, double p, std::mt19937_64& rng) {
  std::vector<std::vector<NodeId>> parents(n);
  std::bernoulli_distribution coin(p);
  for (NodeId j = 1; j < n; ++j)
    for (NodeId i = 0; i < j; ++i)
      if (coin(rng)) parents[j].push_back(i);
  return Dag(std::move(parents));
}

inline WeightTable random_weights(const Dag& dag, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  WeightTable w(dag.size());
  for (NodeId j = 0; j < dag.size(); ++j) {
    w[j].resize(static_cast<Eigen::Index>(dag.parents(j).size()));
    for (Eigen::Index k = 0; k < w[j].size(); ++k) w[j][k] = u(rng);
  }
  return w;
}

/// The last node of `dag` made the unique sink by wiring every other sink to it.
inline Dag with_single_leaf(const Dag& dag) {
  std::vector<std::vector<NodeId>> parents(dag.size());
  const NodeId leaf = dag.size() - 1;
  for (NodeId j = 0; j < dag.size(); ++j)
    parents[j].assign(dag.parents(j).begin(), dag.parents(j).end());
  for (NodeId j = 0; j + 1 < dag.size(); ++j)
    if (dag.children(j).empty() &&
        std::find(parents[leaf].begin(), parents[leaf].end(), j) == parents[leaf].end())
      parents[leaf].push_back(j);
  return Dag(std::move(parents));
}

inline std::vector<double> normal_vector(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

inline NoiseAssignment random_noise(const LeafModel& leaf, std::mt19937_64& rng, double node_sd = 1.0,
                                    double edge_sd = 0.1) {
  auto a = leaf.zero_noise();
  a.node_noise = normal_vector(a.node_noise.size(), rng, node_sd);
  a.edge_noise = normal_vector(a.edge_noise.size(), rng, edge_sd);
  return a;
}

/// Diamond 0->1, 0->2, 1->3, 2->3.
inline Dag diamond() { return Dag(Parents{{}, {0}, {0}, {1, 2}}); }

inline Dag chain(std::size_t n) {
  std::vector<std::vector<NodeId>> parents(n);
  for (NodeId j = 1; j < n; ++j) parents[j] = {j - 1};
  return Dag(std::move(parents));
}

inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-12) {
  return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), abs_floor});
}

}  // namespace bigen::testing
