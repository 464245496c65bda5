#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bigen/attribution.hpp"
#include "bigen/dag.hpp"
#include "bigen/mechanism.hpp"

namespace bigen {

/// Which kinds of root cause a case injects.
enum class Mix { nodes, edges, both };

inline std::string_view to_string(Mix m) {
  switch (m) {
    case Mix::nodes: return "nodes";
    case Mix::edges: return "edges";
    case Mix::both: return "both";
  }
  return "?";
}

inline Mix parse_mix(std::string_view s) {
  if (s == "nodes") return Mix::nodes;
  if (s == "edges") return Mix::edges;
  if (s == "both") return Mix::both;
  throw InputError("unknown mix '" + std::string(s) + "'");
}

/// Injected root causes and their graded relevance (strongest injection gets
/// the highest grade; non-causes have relevance 0 and are absent).
struct GroundTruth {
  std::vector<NodeId> root_cause_nodes;
  std::vector<EdgeId> root_cause_edges;
  std::map<Candidate, double> relevance;
};

/// Hyperparameters every scenario is fitted with: a weak prior on the
/// weights (alpha = 1) and node precision beta = 100. MAP weights depend only
/// on alpha / beta, so a small ratio lets the abnormal-batch refit follow
/// shifted weights instead of shrinking them back to the trained ones.
inline Hyperparams default_fit_hyper() { return {1.0, 100.0}; }

struct ScenarioCase {
  std::string scenario;
  Mix mix = Mix::both;
  std::uint64_t seed = 0;
  Dag dag;
  MechanismModel generator;  // generating parameters; empty for cases read from disk
  NoiseInjection injection;  // abnormal-batch noise overrides; empty for cases read from disk
  Hyperparams fit_hyper;
  Dataset normal;
  Dataset abnormal;
  NodeId target = 0;
  GroundTruth truth;
};

namespace detail {

struct Cause {
  Candidate key;
  double severity = 0.0;
};

/// Grades m, m-1, ..., 1 by descending severity; ties by candidate order.
inline GroundTruth grade_causes(std::vector<Cause> causes) {
  std::sort(causes.begin(), causes.end(), [](const Cause& a, const Cause& b) {
    if (a.severity != b.severity) return a.severity > b.severity;
    return a.key < b.key;
  });
  GroundTruth t;
  const auto m = static_cast<double>(causes.size());
  for (std::size_t i = 0; i < causes.size(); ++i) {
    const auto& c = causes[i];
    t.relevance[c.key] = m - static_cast<double>(i);
    if (c.key.is_node())
      t.root_cause_nodes.push_back(c.key.node);
    else
      t.root_cause_edges.push_back(c.key.edge);
  }
  std::sort(t.root_cause_nodes.begin(), t.root_cause_nodes.end());
  std::sort(t.root_cause_edges.begin(), t.root_cause_edges.end());
  return t;
}

template <class T>
std::vector<T> choose(std::vector<T> pool, std::size_t count, std::mt19937_64& rng) {
  count = std::min(count, pool.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

inline std::size_t uniform_count(std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double random_sign(std::mt19937_64& rng) {
  return std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
}

/// Edges whose child lies in the target's ancestor subgraph (target included).
inline std::vector<EdgeId> subgraph_edges(const Dag& dag, NodeId target) {
  std::vector<EdgeId> out;
  auto members = dag.ancestors(target);
  members.push_back(target);
  std::sort(members.begin(), members.end());
  for (NodeId v : members)
    for (NodeId p : dag.parents(v)) out.push_back({p, v});
  return out;
}

inline NodeId find_node(const Dag& dag, std::string_view name) {
  for (NodeId i = 0; i < dag.size(); ++i)
    if (dag.name(i) == name) return i;
  throw InputError("topology has no node named '" + std::string(name) + "'");
}

/// Mean of |injected value| / scale over the abnormal rows.
inline double realized_severity(const Eigen::MatrixXd& noise, std::size_t column, double scale) {
  return noise.col(static_cast<Eigen::Index>(column)).cwiseAbs().mean() / scale;
}

}  // namespace detail

/// Random DAG over nodes 0..n-1 (already a topological order): node j takes
/// each earlier node as a parent independently with probability
/// min(1, 2 / j), giving an expected in-degree of about two.
/// Random DAG over nodes 0..n-1 in topological order. Each node j >= 1 draws
/// its parent count uniformly from {0, 1, 2} (capped at j) and that many
/// distinct parents uniformly among the upstream nodes 0..j-1.
inline Dag random_dag(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::vector<NodeId>> parents(n);
  std::vector<NodeId> pool;
  for (NodeId j = 1; j < n; ++j) {
    const std::size_t k = std::min<std::size_t>(std::uniform_int_distribution<std::size_t>(0, 2)(rng), j);
    pool.resize(j);
    for (NodeId i = 0; i < j; ++i) pool[i] = i;
    for (std::size_t t = 0; t < k; ++t) {
      std::swap(pool[t], pool[std::uniform_int_distribution<std::size_t>(t, j - 1)(rng)]);
      parents[j].push_back(pool[t]);
    }
    std::sort(parents[j].begin(), parents[j].end());
  }
  return Dag(std::move(parents));
}

struct RandomGraphParams {
  std::size_t num_nodes = 20;
  std::size_t normal_rows = 2000;
  std::size_t abnormal_rows = 10;
  Mix mix = Mix::both;
  double node_noise_var = 1.0;
  double edge_noise_var = 0.01;
};

/// Random-graph case. Weight means |N(0,1)|; node noise variance 1 and edge
/// noise variance 0.01 under normal operation. The target is uniform among
/// nodes with ancestors; with m = max(1, floor(0.1 * subgraph size)), k in
/// [1, m] ancestor nodes and/or l in [1, m] subgraph edges are injected:
///   node: eps ~ N(a, b),                    a ~ +-U(3,5), b ~ U(3,5)
///   edge: xi  ~ N(a * max|w_.j|, b * s_j),  s_j = edge-noise std
/// The second argument of N is a standard deviation. Relevance is graded by |a|.
inline ScenarioCase gen_random_graph_case(const RandomGraphParams& p, std::uint64_t seed) {
  if (p.num_nodes < 3) throw InputError("random graph cases need at least 3 nodes");
  std::mt19937_64 rng(seed);
  ScenarioCase c;
  c.scenario = "random";
  c.mix = p.mix;
  c.seed = seed;
  c.dag = random_dag(p.num_nodes, rng);
  c.fit_hyper = default_fit_hyper();
  const Hyperparams gen_hyper{1.0 / p.edge_noise_var, 1.0 / p.node_noise_var};

  std::normal_distribution<double> std_normal(0.0, 1.0);
  WeightTable w(p.num_nodes);
  for (NodeId j = 0; j < p.num_nodes; ++j) {
    w[j].resize(static_cast<Eigen::Index>(c.dag.parents(j).size()));
    for (Eigen::Index k = 0; k < w[j].size(); ++k) w[j][k] = std::abs(std_normal(rng));
  }
  c.generator = make_generative_model(c.dag, w, gen_hyper);

  std::vector<NodeId> candidates;
  for (NodeId j = 0; j < p.num_nodes; ++j)
    if (!c.dag.parents(j).empty()) candidates.push_back(j);
  c.target = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];

  const auto ancestors = c.dag.ancestors(c.target);
  const auto edges = detail::subgraph_edges(c.dag, c.target);
  const std::size_t m = std::max<std::size_t>(1, (ancestors.size() + 1) / 10);

  NoiseInjection inject;
  inject.node.assign(p.num_nodes, std::nullopt);
  inject.edge.assign(c.dag.edge_count(), std::nullopt);
  std::uniform_real_distribution<double> band(3.0, 5.0);
  std::vector<detail::Cause> causes;

  if (p.mix != Mix::edges) {
    const auto k = detail::uniform_count(1, std::min(m, ancestors.size()), rng);
    for (NodeId n : detail::choose(ancestors, k, rng)) {
      const double a = detail::random_sign(rng) * band(rng);
      const double b = band(rng);
      inject.node[n] = NoiseDist::gaussian(a, b);
      causes.push_back({Candidate::of(n), std::abs(a)});
    }
  }
  if (p.mix != Mix::nodes) {
    const auto l = detail::uniform_count(1, std::min(m, edges.size()), rng);
    const double s_j = std::sqrt(p.edge_noise_var);
    for (const EdgeId& e : detail::choose(edges, l, rng)) {
      const double m_j = w[e.dst].cwiseAbs().maxCoeff();
      const double a = detail::random_sign(rng) * band(rng);
      const double b = band(rng);
      inject.edge[*c.dag.edge_index(e)] = NoiseDist::gaussian(a * m_j, b * s_j);
      causes.push_back({Candidate::of(e), std::abs(a)});
    }
  }
  c.truth = detail::grade_causes(std::move(causes));

  c.normal = sample_traced(c.generator, p.normal_rows, rng,
                           SampleMode::resample_edge_noise_per_row).data;
  c.injection = inject;
  c.abnormal = sample_traced(c.generator, p.abnormal_rows, rng,
                             SampleMode::resample_edge_noise_per_row, inject).data;
  return c;
}

inline std::string default_data_dir() {
#ifdef BIGEN_DATA_DIR
  return BIGEN_DATA_DIR;
#else
  return "data";
#endif
}

struct FixedTopologyParams {
  std::size_t normal_rows = 2000;
  std::size_t abnormal_rows = 10;
  Mix mix = Mix::both;
};

/// Online-shop latency graph: Website is the leaf fed by ten upstream
/// services. Latency weights mu ~ U(0.5, 1.5); node noise N(0, s_j^2) with
/// s_j ~ U(0.5, 1.5); edge noise std 0.1. Between 1 and 3 node and/or edge
/// causes are injected with values drawn uniformly from the (3s, 5s] band of
/// their normal distribution (random sign on node noise, positive on edges).
inline ScenarioCase gen_microservice_case(const Dag& topology, const FixedTopologyParams& p,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ScenarioCase c;
  c.scenario = "microservice";
  c.mix = p.mix;
  c.seed = seed;
  c.dag = topology;
  c.target = detail::find_node(c.dag, "Website");
  const double edge_std = 0.1;
  c.fit_hyper = default_fit_hyper();
  const Hyperparams gen_hyper{1.0 / (edge_std * edge_std), 1.0};

  std::uniform_real_distribution<double> weight(0.5, 1.5);
  std::uniform_real_distribution<double> node_std(0.5, 1.5);
  WeightTable w(c.dag.size());
  std::vector<NoiseDist> node_noise;
  for (NodeId j = 0; j < c.dag.size(); ++j) {
    w[j].resize(static_cast<Eigen::Index>(c.dag.parents(j).size()));
    for (Eigen::Index k = 0; k < w[j].size(); ++k) w[j][k] = weight(rng);
    node_noise.push_back(NoiseDist::gaussian(0.0, node_std(rng)));
  }
  c.generator = make_generative_model(c.dag, w, gen_hyper, node_noise);

  const auto ancestors = c.dag.ancestors(c.target);
  const auto edges = detail::subgraph_edges(c.dag, c.target);
  NoiseInjection inject;
  inject.node.assign(c.dag.size(), std::nullopt);
  inject.edge.assign(c.dag.edge_count(), std::nullopt);
  std::vector<std::pair<Candidate, double>> scales;

  if (p.mix != Mix::edges) {
    for (NodeId n : detail::choose(ancestors, detail::uniform_count(1, 3, rng), rng)) {
      const double s = node_noise[n].stddev();
      const double sign = detail::random_sign(rng);
      inject.node[n] = sign > 0 ? NoiseDist::uniform(3.0 * s, 5.0 * s)
                                : NoiseDist::uniform(-5.0 * s, -3.0 * s);
      scales.push_back({Candidate::of(n), s});
    }
  }
  if (p.mix != Mix::nodes) {
    for (const EdgeId& e : detail::choose(edges, detail::uniform_count(1, 3, rng), rng)) {
      inject.edge[*c.dag.edge_index(e)] = NoiseDist::uniform(3.0 * edge_std, 5.0 * edge_std);
      scales.push_back({Candidate::of(e), edge_std});
    }
  }

  c.normal = sample_traced(c.generator, p.normal_rows, rng,
                           SampleMode::resample_edge_noise_per_row).data;
  c.injection = inject;
  const auto trace = sample_traced(c.generator, p.abnormal_rows, rng,
                                   SampleMode::resample_edge_noise_per_row, inject);
  c.abnormal = trace.data;

  std::vector<detail::Cause> causes;
  for (const auto& [key, s] : scales) {
    const double sev = key.is_node()
                           ? detail::realized_severity(trace.node_noise, key.node, s)
                           : detail::realized_severity(trace.edge_noise, *c.dag.edge_index(key.edge), s);
    causes.push_back({key, sev});
  }
  c.truth = detail::grade_causes(std::move(causes));
  return c;
}

/// Retail supply chain ending in the `received` node. Node noise is
/// Gamma(2, 0.5); edge noise Gaussian with std 0.1; weights mu ~ U(0.5, 1.5).
/// Injects k in {1,2} nodes (mix=nodes), l in {1,2} edges (mix=edges) or one
/// of each (mix=both); injected eps and xi are drawn from U(3, 5).
inline ScenarioCase gen_supply_chain_case(const Dag& topology, const FixedTopologyParams& p,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ScenarioCase c;
  c.scenario = "supplychain";
  c.mix = p.mix;
  c.seed = seed;
  c.dag = topology;
  c.target = detail::find_node(c.dag, "received");
  const double edge_std = 0.1;
  const auto gamma = NoiseDist::gamma(2.0, 0.5);
  c.fit_hyper = default_fit_hyper();
  const Hyperparams gen_hyper{1.0 / (edge_std * edge_std), 1.0 / (gamma.stddev() * gamma.stddev())};

  std::uniform_real_distribution<double> weight(0.5, 1.5);
  WeightTable w(c.dag.size());
  for (NodeId j = 0; j < c.dag.size(); ++j) {
    w[j].resize(static_cast<Eigen::Index>(c.dag.parents(j).size()));
    for (Eigen::Index k = 0; k < w[j].size(); ++k) w[j][k] = weight(rng);
  }
  c.generator = make_generative_model(c.dag, w, gen_hyper,
                                      std::vector<NoiseDist>(c.dag.size(), gamma));

  const auto ancestors = c.dag.ancestors(c.target);
  const auto edges = detail::subgraph_edges(c.dag, c.target);
  const std::size_t k = p.mix == Mix::nodes ? detail::uniform_count(1, 2, rng) : p.mix == Mix::both ? 1 : 0;
  const std::size_t l = p.mix == Mix::edges ? detail::uniform_count(1, 2, rng) : p.mix == Mix::both ? 1 : 0;

  NoiseInjection inject;
  inject.node.assign(c.dag.size(), std::nullopt);
  inject.edge.assign(c.dag.edge_count(), std::nullopt);
  const auto band = NoiseDist::uniform(3.0, 5.0);
  std::vector<Candidate> keys;
  for (NodeId n : detail::choose(ancestors, k, rng)) {
    inject.node[n] = band;
    keys.push_back(Candidate::of(n));
  }
  for (const EdgeId& e : detail::choose(edges, l, rng)) {
    inject.edge[*c.dag.edge_index(e)] = band;
    keys.push_back(Candidate::of(e));
  }

  c.normal = sample_traced(c.generator, p.normal_rows, rng,
                           SampleMode::resample_edge_noise_per_row).data;
  c.injection = inject;
  const auto trace = sample_traced(c.generator, p.abnormal_rows, rng,
                                   SampleMode::resample_edge_noise_per_row, inject);
  c.abnormal = trace.data;

  std::vector<detail::Cause> causes;
  for (const auto& key : keys) {
    const double sev = key.is_node()
                           ? detail::realized_severity(trace.node_noise, key.node, 1.0)
                           : detail::realized_severity(trace.edge_noise, *c.dag.edge_index(key.edge), 1.0);
    causes.push_back({key, sev});
  }
  c.truth = detail::grade_causes(std::move(causes));
  return c;
}

}  // namespace bigen
