#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "support.hpp"

using namespace bigen;
using bigen::testing::Parents;
using bigen::testing::diamond;

namespace {

std::size_t position(const std::vector<NodeId>& order, NodeId v) {
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), v) - order.begin());
}

// Brute-force ancestor oracle: transitive closure by repeated relaxation.
std::vector<NodeId> closure_ancestors(const Dag& dag, NodeId target) {
  const std::size_t n = dag.size();
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (const auto& e : dag.edges()) reach[e.src][e.dst] = 1;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = 1;
  std::vector<NodeId> out;
  for (NodeId i = 0; i < n; ++i)
    if (reach[i][target]) out.push_back(i);
  return out;
}

}  // namespace

TEST(Dag, ChainOrder) {
  EXPECT_EQ(bigen::testing::chain(3).topological_order(), (std::vector<NodeId>{0, 1, 2}));
}

TEST(Dag, EmptyGraph) {
  Dag g(std::vector<std::vector<NodeId>>{});
  EXPECT_EQ(g.size(), 0u);
  EXPECT_TRUE(topological_order(g).empty());
}

TEST(Dag, DiamondOrderIsValidAndSmallestFirst) {
  const Dag g = diamond();
  const auto order = g.topological_order();
  // Enumerate all permutations; keep the valid ones; the tie-break picks the
  // lexicographically smallest.
  std::vector<NodeId> perm{0, 1, 2, 3};
  std::vector<std::vector<NodeId>> valid;
  do {
    bool ok = true;
    for (const auto& e : g.edges()) ok = ok && position(perm, e.src) < position(perm, e.dst);
    if (ok) valid.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_NE(std::find(valid.begin(), valid.end(), order), valid.end());
  EXPECT_EQ(order, *std::min_element(valid.begin(), valid.end()));
  EXPECT_EQ(order, (std::vector<NodeId>{0, 1, 2, 3}));
}

TEST(Dag, TieBreakByAscendingId) {
  // 2 -> 0, and 1 independent: ready set starts {1, 2}; 1 goes first.
  Dag g(Parents{{2}, {}, {}});
  EXPECT_EQ(g.topological_order(), (std::vector<NodeId>{1, 2, 0}));
}

TEST(Dag, CycleDetected) {
  EXPECT_THROW(Dag(Parents{{1}, {0}}), CycleDetected);
  EXPECT_THROW(Dag(Parents{{0}}), CycleDetected);
  EXPECT_THROW(Dag(Parents{{2}, {0}, {1}}), CycleDetected);
}

TEST(Dag, RejectsBadParents) {
  EXPECT_THROW(Dag(Parents{{}, {5}}), UnknownNode);
  EXPECT_THROW(Dag(Parents{{}, {0, 0}}), InputError);
  EXPECT_THROW(Dag(Parents{{}, {}}, {"only-one-name"}), InputError);
}

TEST(Dag, EdgeIndexFollowsChildThenParentOrder) {
  Dag g(Parents{{}, {}, {1, 0}, {2}});
  ASSERT_EQ(g.edge_count(), 3u);
  EXPECT_EQ(*g.edge_index({1, 2}), 0u);
  EXPECT_EQ(*g.edge_index({0, 2}), 1u);
  EXPECT_EQ(*g.edge_index({2, 3}), 2u);
  EXPECT_FALSE(g.edge_index({0, 3}).has_value());
  EXPECT_EQ(g.edges()[1], (EdgeId{0, 2}));
}

TEST(Dag, FromEdgesKeepsParentOrder) {
  const EdgeId edges[] = {{2, 3}, {0, 3}, {0, 1}};
  const Dag g = Dag::from_edges(4, edges);
  EXPECT_EQ(std::vector<NodeId>(g.parents(3).begin(), g.parents(3).end()), (std::vector<NodeId>{2, 0}));
  EXPECT_THROW(Dag::from_edges(2, std::vector<EdgeId>{{0, 4}}), UnknownNode);
}

TEST(AncestorSubgraph, DiamondLeafIsWholeGraph) {
  const auto sub = ancestor_subgraph(diamond(), 3);
  EXPECT_EQ(sub.dag, diamond());
  EXPECT_EQ(sub.to_original, (std::vector<NodeId>{0, 1, 2, 3}));
  EXPECT_EQ(sub.target, 3u);
}

TEST(AncestorSubgraph, DiamondMiddleNode) {
  const auto sub = ancestor_subgraph(diamond(), 1);
  EXPECT_EQ(sub.dag.size(), 2u);
  ASSERT_EQ(sub.dag.edge_count(), 1u);
  EXPECT_EQ(sub.original(sub.dag.edges()[0].src), 0u);
  EXPECT_EQ(sub.original(sub.dag.edges()[0].dst), 1u);
}

TEST(AncestorSubgraph, UnknownTarget) {
  EXPECT_THROW(ancestor_subgraph(diamond(), 9), UnknownNode);
}

TEST(AncestorSubgraph, MatchesReachabilityOracleOnRandomGraphs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Dag g = bigen::testing::dense_dag(50, 0.08, rng);
    const NodeId target = std::uniform_int_distribution<NodeId>(0, 49)(rng);
    const auto oracle = closure_ancestors(g, target);
    EXPECT_EQ(g.ancestors(target), oracle);

    const auto sub = ancestor_subgraph(g, target);
    auto expected_nodes = oracle;
    expected_nodes.push_back(target);
    std::sort(expected_nodes.begin(), expected_nodes.end());
    EXPECT_EQ(sub.to_original, expected_nodes);
    // Exactly the edges among the members survive.
    std::size_t among = 0;
    for (const auto& e : g.edges())
      if (std::binary_search(expected_nodes.begin(), expected_nodes.end(), e.src) &&
          std::binary_search(expected_nodes.begin(), expected_nodes.end(), e.dst))
        ++among;
    EXPECT_EQ(sub.dag.edge_count(), among);
    EXPECT_LE(sub.dag.edge_count(), g.edge_count());
    for (const auto& e : sub.dag.edges())
      EXPECT_TRUE(g.edge_index({sub.original(e.src), sub.original(e.dst)}).has_value());

    // Idempotent up to relabeling (here the labels coincide).
    const auto twice = ancestor_subgraph(sub.dag, sub.target);
    EXPECT_EQ(twice.dag, sub.dag);
  }
}

TEST(Dag, TopologicalOrderRespectsEveryEdge) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Dag g = random_dag(60, rng);
    const auto order = g.topological_order();
    ASSERT_EQ(order.size(), g.size());
    for (const auto& e : g.edges()) EXPECT_LT(position(order, e.src), position(order, e.dst));
  }
}
