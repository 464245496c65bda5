#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bigen/attribution.hpp"
#include "bigen/mechanism.hpp"
#include "bigen/scenarios.hpp"

namespace bigen {

struct NdcgResult {
  double value = 1.0;
  bool no_relevant = false;  // every relevance was zero; value is 1 by convention
};

/// NDCG@k = DCG@k / IDCG@k with DCG@k = sum_{i<=k} rel(r_i) / log2(i + 1).
/// IDCG uses the same truncation over the ideal ordering of all relevances.
template <class Key>
NdcgResult ndcg_at_k(std::span<const Key> ranking, const std::map<Key, double>& relevance,
                     std::size_t k) {
  if (k < 1) throw InputError("NDCG cutoff k must be >= 1");
  double dcg = 0.0;
  const std::size_t n = std::min(k, ranking.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto it = relevance.find(ranking[i]);
    if (it != relevance.end()) dcg += it->second / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<double> ideal;
  for (const auto& [key, rel] : relevance) {
    if (rel < 0.0) throw InputError("relevance grades must be non-negative");
    if (rel > 0.0) ideal.push_back(rel);
  }
  if (ideal.empty()) return {1.0, true};
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i)
    idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  return {dcg / idcg, false};
}

using View = AttributionReport::View;

inline std::string_view to_string(View v) {
  switch (v) {
    case View::combined: return "combined";
    case View::nodes: return "nodes";
    case View::edges: return "edges";
    case View::node_edge_mean: return "nodes+edges";
  }
  return "?";
}

struct RankingMetricResult {
  Method method = Method::bigen;
  View view = View::combined;
  std::size_t k = 5;
  std::vector<double> per_case;
  double mean = 0.0;
  double std = 0.0;

  double ndcg() const { return mean; }
  std::size_t n_cases() const { return per_case.size(); }
};

/// Relevance restricted to one candidate kind (all of it for `combined`).
inline std::map<Candidate, double> view_relevance(const GroundTruth& truth, View view) {
  std::map<Candidate, double> out;
  for (const auto& [key, rel] : truth.relevance) {
    if (view == View::nodes && !key.is_node()) continue;
    if (view == View::edges && key.is_node()) continue;
    out.emplace(key, rel);
  }
  return out;
}

inline constexpr View kAllViews[] = {View::combined, View::nodes, View::edges, View::node_edge_mean};

/// NDCG of one report under one view. Returns nullopt when the view holds no
/// injected cause (e.g. the edge view of a node-only case). The nodes+edges
/// view averages the node and edge views, or takes whichever is defined.
inline std::optional<double> case_ndcg(const AttributionReport& report, const GroundTruth& truth,
                                       View view, std::size_t k) {
  if (view == View::node_edge_mean) {
    const auto n = case_ndcg(report, truth, View::nodes, k), e = case_ndcg(report, truth, View::edges, k);
    if (n && e) return (*n + *e) / 2.0;
    return n ? n : e;
  }
  const auto rel = view_relevance(truth, view);
  if (rel.empty()) return std::nullopt;
  const auto keys = report.ranked_keys(view);
  return ndcg_at_k<Candidate>(keys, rel, k).value;
}

inline void finalize(RankingMetricResult& r) {
  if (r.per_case.empty()) return;
  double s = 0.0;
  for (double v : r.per_case) s += v;
  r.mean = s / static_cast<double>(r.per_case.size());
  double ss = 0.0;
  for (double v : r.per_case) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(r.per_case.size()));
}

struct EvalConfig {
  MethodConfig method;
  std::uint64_t seed = 0;
};

/// Fits, infers and attributes one case with each method.
inline std::vector<AttributionReport> attribute_case(const ScenarioCase& c,
                                                     std::span<const Method> methods,
                                                     const EvalConfig& cfg) {
  if (c.abnormal.rows() == 0) throw InputError("case has an empty abnormal batch");
  const auto model = fit_posterior(c.dag, c.normal, c.fit_hyper);
  const auto ctx = make_context(model, c.target, c.normal, c.abnormal, cfg.method.carry);
  std::vector<AttributionReport> out;
  for (Method m : methods)
    out.push_back(attribute_batch(ctx, c.abnormal, m, cfg.method, cfg.seed ^ (c.seed * 0x9E3779B97F4A7C15ULL)));
  return out;
}

/// Aggregates per-case NDCG for every (method, view, k). `reports[i][m]` is
/// case i's report for methods[m].
inline std::vector<RankingMetricResult> score_reports(
    std::span<const ScenarioCase> cases, std::span<const Method> methods,
    const std::vector<std::vector<AttributionReport>>& reports, std::span<const std::size_t> k_values) {
  std::vector<RankingMetricResult> out;
  for (std::size_t m = 0; m < methods.size(); ++m)
    for (View view : kAllViews)
      for (std::size_t k : k_values) {
        RankingMetricResult r;
        r.method = methods[m];
        r.view = view;
        r.k = k;
        for (std::size_t i = 0; i < cases.size(); ++i)
          if (auto v = case_ndcg(reports[i][m], cases[i].truth, view, k)) r.per_case.push_back(*v);
        finalize(r);
        if (!r.per_case.empty()) out.push_back(std::move(r));
      }
  return out;
}

inline std::vector<RankingMetricResult> evaluate_methods(std::span<const ScenarioCase> cases,
                                                         std::span<const Method> methods,
                                                         const EvalConfig& cfg,
                                                         std::span<const std::size_t> k_values) {
  std::vector<std::vector<AttributionReport>> reports;
  reports.reserve(cases.size());
  for (const auto& c : cases) reports.push_back(attribute_case(c, methods, cfg));
  return score_reports(cases, methods, reports, k_values);
}

inline std::vector<RankingMetricResult> evaluate_method(std::span<const ScenarioCase> cases,
                                                        Method method, const EvalConfig& cfg,
                                                        std::span<const std::size_t> k_values) {
  const Method one[] = {method};
  return evaluate_methods(cases, one, cfg, k_values);
}

inline const RankingMetricResult* find_result(std::span<const RankingMetricResult> results,
                                              Method method, View view, std::size_t k) {
  for (const auto& r : results)
    if (r.method == method && r.view == view && r.k == k) return &r;
  return nullptr;
}

// ---- runtime scaling -------------------------------------------------------------

struct BenchRecord {
  Method method = Method::bigen;
  std::size_t num_nodes = 0;  // subgraph nodes including the target (= players)
  std::size_t num_edges = 0;
  double wall_time = 0.0;     // seconds per attribution of one row
  std::size_t evaluation_count = 0;
  bool skipped = false;
};

struct BenchConfig {
  std::vector<std::size_t> sizes;  // ancestor counts, ascending
  std::vector<Method> methods;
  double budget = 5.0;        // seconds allowed per (method, size) cell
  double min_time = 0.02;     // repeat a measurement until this much time accrues
  std::uint64_t seed = 0;
  MethodConfig method;
};

/// Random DAG over `ancestors` nodes plus a target fed by every sink, so the
/// target's ancestor subgraph is the whole graph.
inline ScenarioCase bench_case(std::size_t ancestors, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dag base = random_dag(ancestors, rng);
  std::vector<std::vector<NodeId>> parents(ancestors + 1);
  for (NodeId j = 0; j < ancestors; ++j)
    parents[j].assign(base.parents(j).begin(), base.parents(j).end());
  for (NodeId j = 0; j < ancestors; ++j)
    if (base.children(j).empty()) parents[ancestors].push_back(j);
  ScenarioCase c;
  c.scenario = "bench";
  c.seed = seed;
  c.dag = Dag(std::move(parents));
  c.target = ancestors;
  c.fit_hyper = default_fit_hyper();
  WeightTable w(c.dag.size());
  std::normal_distribution<double> nd(0.0, 1.0);
  for (NodeId j = 0; j < c.dag.size(); ++j) {
    w[j].resize(static_cast<Eigen::Index>(c.dag.parents(j).size()));
    // Keep the leaf scale moderate on large graphs.
    const double scale = 1.0 / std::sqrt(std::max<double>(1.0, static_cast<double>(w[j].size())));
    for (Eigen::Index k = 0; k < w[j].size(); ++k) w[j][k] = scale * std::abs(nd(rng));
  }
  c.generator = make_generative_model(c.dag, w, Hyperparams{100.0, 1.0});
  NoiseInjection inject;
  inject.node.assign(c.dag.size(), std::nullopt);
  inject.node[0] = NoiseDist::gaussian(4.0, 0.5);
  c.normal = sample_traced(c.generator, 200, rng, SampleMode::resample_edge_noise_per_row).data;
  c.abnormal = sample_traced(c.generator, 1, rng, SampleMode::resample_edge_noise_per_row, inject).data;
  return c;
}

/// Wall time and evaluation counts of single-row attribution per method and
/// graph size. A cell is skipped when its projected time (extrapolated from
/// the previous size: 2^d growth for classic Shapley, cubic otherwise)
/// exceeds the budget, or when exact classic Shapley would exceed its cap.
inline std::vector<BenchRecord> bench_runtime(const BenchConfig& cfg) {
  if (!(cfg.budget > 0.0)) throw InputError("bench budget must be positive");
  if (!std::is_sorted(cfg.sizes.begin(), cfg.sizes.end())) throw InputError("bench sizes must ascend");
  std::vector<BenchRecord> out;
  std::map<Method, std::pair<std::size_t, double>> last;  // players, seconds
  std::map<Method, bool> stopped;
  for (std::size_t size : cfg.sizes) {
    const auto c = bench_case(size, cfg.seed + size);
    const auto model = fit_posterior(c.dag, c.normal, c.fit_hyper);
    const auto ctx = make_context(model, c.target, c.normal, c.abnormal, cfg.method.carry);
    const auto row = row_of(c.abnormal, 0);
    for (Method m : cfg.methods) {
      BenchRecord rec;
      rec.method = m;
      rec.num_nodes = c.dag.size();
      rec.num_edges = c.dag.edge_count();
      bool skip = stopped[m];
      if (!skip && m == Method::shapley && !cfg.method.game.early_stop &&
          rec.num_nodes > cfg.method.game.max_exact_players)
        skip = true;
      if (!skip && last.count(m)) {
        const auto [prev_d, prev_t] = last[m];
        const double ratio = static_cast<double>(rec.num_nodes) / static_cast<double>(prev_d);
        const double projected = m == Method::shapley && !cfg.method.game.early_stop
                                     ? prev_t * std::pow(2.0, static_cast<double>(rec.num_nodes) - static_cast<double>(prev_d)) * ratio
                                     : prev_t * ratio * ratio * ratio;
        if (projected > cfg.budget) skip = true;
      }
      if (skip) {
        stopped[m] = true;
        rec.skipped = true;
        out.push_back(rec);
        continue;
      }
      std::size_t reps = 0;
      double total = 0.0;
      AttributionReport rep;
      const auto start = std::chrono::steady_clock::now();
      do {
        rep = attribute_row(ctx, row, m, cfg.method, cfg.seed);
        ++reps;
        total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      } while (total < cfg.min_time && reps < 10000);
      rec.wall_time = total / static_cast<double>(reps);
      rec.evaluation_count = rep.meta.evaluations;
      last[m] = {rec.num_nodes, rec.wall_time};
      out.push_back(rec);
    }
  }
  return out;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("slope needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace bigen
