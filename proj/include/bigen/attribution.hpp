#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bigen/dag.hpp"
#include "bigen/errors.hpp"
#include "bigen/mechanism.hpp"
#include "bigen/noise.hpp"
#include "bigen/scoring.hpp"
#include "bigen/shapley.hpp"

namespace bigen {

enum class Method { bigen, shapley, sampling, permutation, naive };

inline constexpr Method kAllMethods[] = {Method::shapley, Method::sampling, Method::permutation,
                                         Method::naive, Method::bigen};

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::bigen: return "bigen";
    case Method::shapley: return "shapley";
    case Method::sampling: return "sampling";
    case Method::permutation: return "permutation";
    case Method::naive: return "naive";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : kAllMethods)
    if (to_string(m) == s) return m;
  throw InputError("unknown method '" + std::string(s) + "'");
}

/// A node or an edge competing in a root-cause ranking. Ordering puts nodes
/// before edges, then ascending ids.
struct Candidate {
  enum class Kind : int { node = 0, edge = 1 };

  Kind kind = Kind::node;
  NodeId node = 0;
  EdgeId edge{};

  static Candidate of(NodeId n) { return {Kind::node, n, {}}; }
  static Candidate of(EdgeId e) { return {Kind::edge, 0, e}; }
  bool is_node() const { return kind == Kind::node; }

  friend auto operator<=>(const Candidate&, const Candidate&) = default;
};

struct RankedEntry {
  Candidate key;
  double score = 0.0;
};

struct AttributionMeta {
  std::size_t steps = 0;
  std::size_t references = 0;
  std::size_t evaluations = 0;  // gradient sweeps (bigen) or coalition evaluations (games)
  std::size_t samples = 0;
  std::size_t rows = 1;
  double seconds = 0.0;  // wall time; never serialized
};

struct AttributionReport {
  NodeId target = 0;
  Method method = Method::bigen;
  std::vector<std::pair<NodeId, double>> node_scores;
  std::vector<std::pair<EdgeId, double>> edge_scores;
  std::vector<RankedEntry> ranking;
  AttributionMeta meta;

  /// Rebuilds `ranking`: descending score, ties by (node before edge, id).
  void rank() {
    ranking.clear();
    ranking.reserve(node_scores.size() + edge_scores.size());
    for (const auto& [n, s] : node_scores) ranking.push_back({Candidate::of(n), s});
    for (const auto& [e, s] : edge_scores) ranking.push_back({Candidate::of(e), s});
    std::sort(ranking.begin(), ranking.end(), [](const RankedEntry& a, const RankedEntry& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.key < b.key;
    });
  }

  /// `node_edge_mean` is a metric-only view (mean of the node and edge view
  /// scores); it has no ranking of its own.
  enum class View { combined, nodes, edges, node_edge_mean };

  std::vector<Candidate> ranked_keys(View view = View::combined) const {
    if (view == View::node_edge_mean) throw InputError("the nodes+edges view has no ranking of its own");
    std::vector<Candidate> out;
    for (const auto& e : ranking) {
      if (view == View::nodes && !e.key.is_node()) continue;
      if (view == View::edges && e.key.is_node()) continue;
      out.push_back(e.key);
    }
    return out;
  }
};

/// Entry-wise mean of reports with identical keys (one per abnormal row).
inline AttributionReport average_reports(std::span<const AttributionReport> reports) {
  if (reports.empty()) throw InputError("no reports to average");
  AttributionReport out = reports.front();
  for (std::size_t r = 1; r < reports.size(); ++r) {
    const auto& rep = reports[r];
    if (rep.node_scores.size() != out.node_scores.size() ||
        rep.edge_scores.size() != out.edge_scores.size())
      throw InputError("reports cover different subgraphs");
    for (std::size_t i = 0; i < out.node_scores.size(); ++i)
      out.node_scores[i].second += rep.node_scores[i].second;
    for (std::size_t i = 0; i < out.edge_scores.size(); ++i)
      out.edge_scores[i].second += rep.edge_scores[i].second;
    out.meta.evaluations += rep.meta.evaluations;
    out.meta.samples += rep.meta.samples;
    out.meta.seconds += rep.meta.seconds;
  }
  const double n = static_cast<double>(reports.size());
  for (auto& p : out.node_scores) p.second /= n;
  for (auto& p : out.edge_scores) p.second /= n;
  out.meta.rows = reports.size();
  out.rank();
  return out;
}

/// Node noises of normal-operation rows, inferred with the trained MAP
/// weights. Serves as the reference distribution for every method.
struct ReferencePool {
  Eigen::MatrixXd node_noise;  // rows x nodes

  std::size_t size() const { return static_cast<std::size_t>(node_noise.rows()); }
  bool empty() const { return node_noise.rows() == 0; }
  std::vector<double> row(std::size_t r) const {
    std::vector<double> out(static_cast<std::size_t>(node_noise.cols()));
    for (std::size_t j = 0; j < out.size(); ++j)
      out[j] = node_noise(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
    return out;
  }
};

inline ReferencePool make_reference_pool(const MechanismModel& model, const Dataset& normal) {
  const auto w = map_weights(model);
  ReferencePool pool{Eigen::MatrixXd(normal.values.rows(), normal.values.cols())};
  for (std::size_t r = 0; r < normal.rows(); ++r) {
    const auto eps = infer_node_noise(model.dag, row_of(normal, r), w);
    for (std::size_t j = 0; j < eps.size(); ++j)
      pool.node_noise(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = eps[j];
  }
  return pool;
}

namespace detail {

/// `count` distinct pool rows when possible, drawn uniformly.
inline std::vector<std::size_t> pick_references(std::size_t pool_size, std::size_t count,
                                                std::mt19937_64& rng) {
  if (pool_size == 0) throw EmptyReferencePool();
  std::vector<std::size_t> out;
  if (count <= pool_size) {
    std::vector<std::size_t> idx(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) idx[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool_size - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.push_back(idx[i]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool_size - 1);
    for (std::size_t i = 0; i < count; ++i) out.push_back(pick(rng));
  }
  return out;
}

template <class Link>
AttributionReport empty_report(const BasicLeafModel<Link>& leaf, Method method) {
  AttributionReport rep;
  rep.target = leaf.target();
  rep.method = method;
  for (NodeId n : leaf.nodes()) rep.node_scores.push_back({n, 0.0});
  for (const EdgeId& e : leaf.edges()) rep.edge_scores.push_back({e, 0.0});
  return rep;
}

}  // namespace detail

/// Leaf outlier score as a differentiable function of the leaf value.
struct OutlierScoreFn {
  MarginalStats stats;
  double operator()(double x) const { return outlier_score(stats, x); }
  double derivative(double x) const { return outlier_score_derivative(stats, x); }
};

/// Score that is the leaf value itself; turns IG completeness into an exact
/// statement about g.
struct IdentityScoreFn {
  double operator()(double x) const { return x; }
  double derivative(double) const { return 1.0; }
};

template <class Inner>
struct ScaledScoreFn {
  Inner inner;
  double scale = 1.0;
  double operator()(double x) const { return scale * inner(x); }
  double derivative(double x) const { return scale * inner.derivative(x); }
};

struct IgConfig {
  std::size_t steps = 50;
  std::size_t references = 5;

  void validate() const {
    if (steps < 1 || references < 1) throw InputError("IG steps and references must be >= 1");
  }
};

struct IgResult {
  std::vector<double> node;  // aligned with leaf.nodes()
  std::vector<double> edge;  // aligned with leaf.edges()
  std::size_t gradient_evaluations = 0;
};

/// Integrated gradients in the joint (eps, xi) noise space. For each
/// reference the straight path ref + t (x - ref) is integrated by the midpoint
/// rule, t_k = (k + 1/2) / steps, and each coordinate's attribution is
/// (x_i - ref_i) times the mean path gradient of score(g). Attributions are
/// averaged over the references.
template <class Link, class Score>
IgResult integrated_gradients(const BasicLeafModel<Link>& leaf, const Score& score,
                              const NoiseAssignment& x, std::span<const NoiseAssignment> refs,
                              std::size_t steps) {
  if (refs.empty()) throw EmptyReferencePool();
  if (steps < 1) throw InputError("IG steps must be >= 1");
  const auto xa = leaf.aligned(x);
  const std::size_t nn = leaf.node_count(), ne = leaf.edge_count();
  IgResult out{std::vector<double>(nn, 0.0), std::vector<double>(ne, 0.0), 0};
  auto ws = leaf.workspace();
  std::vector<double> eps(nn), xi(ne), d_eps(nn), d_xi(ne), sum_eps(nn), sum_xi(ne);
  for (const auto& ref_raw : refs) {
    const auto ref = leaf.aligned(ref_raw);
    std::fill(sum_eps.begin(), sum_eps.end(), 0.0);
    std::fill(sum_xi.begin(), sum_xi.end(), 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
      const double t = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
      for (std::size_t i = 0; i < nn; ++i)
        eps[i] = ref.node_noise[i] + t * (xa.node_noise[i] - ref.node_noise[i]);
      for (std::size_t i = 0; i < ne; ++i)
        xi[i] = ref.edge_noise[i] + t * (xa.edge_noise[i] - ref.edge_noise[i]);
      const double leaf_value = leaf.gradient(eps, xi, ws, d_eps, d_xi);
      ++out.gradient_evaluations;
      const double ds = score.derivative(leaf_value);
      for (std::size_t i = 0; i < nn; ++i) sum_eps[i] += ds * d_eps[i];
      for (std::size_t i = 0; i < ne; ++i) sum_xi[i] += ds * d_xi[i];
    }
    for (std::size_t i = 0; i < nn; ++i)
      out.node[i] += (xa.node_noise[i] - ref.node_noise[i]) * sum_eps[i] / static_cast<double>(steps);
    for (std::size_t i = 0; i < ne; ++i)
      out.edge[i] += (xa.edge_noise[i] - ref.edge_noise[i]) * sum_xi[i] / static_cast<double>(steps);
  }
  for (double& v : out.node) v /= static_cast<double>(refs.size());
  for (double& v : out.edge) v /= static_cast<double>(refs.size());
  return out;
}

/// Reference noise points: node noises of K pool rows, edge noise zero (the
/// reference weights are the trained MAP weights).
template <class Link>
std::vector<NoiseAssignment> draw_references(const BasicLeafModel<Link>& leaf,
                                             const ReferencePool& pool, std::size_t count,
                                             std::mt19937_64& rng) {
  if (pool.empty()) throw EmptyReferencePool();
  std::vector<NoiseAssignment> refs;
  for (std::size_t r : detail::pick_references(pool.size(), count, rng)) {
    const auto eps = pool.row(r);
    refs.push_back(leaf.restrict(eps, {}));
  }
  return refs;
}

/// Node noise of one abnormal row inferred with W' = W + xi', paired with xi',
/// so that g(eps', xi') reproduces the observed target value.
template <class Link = IdentityLink>
NoiseAssignment infer_noise_assignment(const MechanismModel& model, const BasicLeafModel<Link>& leaf,
                                       std::span<const double> abnormal_row,
                                       std::span<const double> edge_noise) {
  if (edge_noise.empty()) {
    const auto eps = infer_node_noise(model.dag, abnormal_row, map_weights(model));
    return leaf.restrict(eps, {});
  }
  const auto eps = infer_node_noise(model.dag, abnormal_row, shifted_weights(model, edge_noise));
  return leaf.restrict(eps, edge_noise);
}

/// BIGEN attribution of one abnormal row given its inferred noises, on a
/// prebuilt leaf model of `model`.
inline AttributionReport ig_attribute(const MechanismModel& model, const LeafModel& leaf,
                                      const NoiseAssignment& inferred, const IgConfig& cfg,
                                      const ReferencePool& pool, std::uint64_t seed) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const NodeId target = leaf.target();
  std::mt19937_64 rng(seed);
  const auto refs = draw_references(leaf, pool, cfg.references, rng);
  const auto ig = integrated_gradients(leaf, OutlierScoreFn{model.marginal(target)}, inferred,
                                       std::span<const NoiseAssignment>(refs), cfg.steps);
  auto rep = detail::empty_report(leaf, Method::bigen);
  for (std::size_t i = 0; i < ig.node.size(); ++i) rep.node_scores[i].second = ig.node[i];
  for (std::size_t i = 0; i < ig.edge.size(); ++i) rep.edge_scores[i].second = ig.edge[i];
  rep.meta.steps = cfg.steps;
  rep.meta.references = cfg.references;
  rep.meta.evaluations = ig.gradient_evaluations;
  rep.rank();
  rep.meta.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

inline AttributionReport ig_attribute(const MechanismModel& model, NodeId target,
                                      const NoiseAssignment& inferred, const IgConfig& cfg,
                                      const ReferencePool& pool, std::uint64_t seed) {
  return ig_attribute(model, LeafModel(model, target), inferred, cfg, pool, seed);
}

/// Edge score s_i * s_j for every edge of the given list.
inline std::vector<std::pair<EdgeId, double>> baseline_edge_scores(
    std::span<const std::pair<NodeId, double>> node_scores, std::span<const EdgeId> edges) {
  std::map<NodeId, double> s(node_scores.begin(), node_scores.end());
  std::vector<std::pair<EdgeId, double>> out;
  out.reserve(edges.size());
  for (const auto& e : edges) {
    auto a = s.find(e.src), b = s.find(e.dst);
    if (a == s.end() || b == s.end()) throw InputError("node scores do not cover edge endpoints");
    out.push_back({e, a->second * b->second});
  }
  return out;
}

/// Marginal-distribution baseline: each subgraph node is scored by the outlier
/// score of its own observed value.
inline AttributionReport naive_attribute(const MechanismModel& model, NodeId target,
                                         std::span<const double> abnormal_row) {
  if (abnormal_row.size() != model.size()) throw InputError("abnormal row has wrong width");
  const auto start = std::chrono::steady_clock::now();
  const LeafModel leaf(model, target);
  auto rep = detail::empty_report(leaf, Method::naive);
  for (auto& [n, s] : rep.node_scores) s = outlier_score(model.marginal(n), abnormal_row[n]);
  rep.edge_scores = baseline_edge_scores(rep.node_scores, leaf.edges());
  rep.meta.evaluations = rep.node_scores.size();
  rep.rank();
  rep.meta.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

/// Coalition game over node noises: members keep their anomalous value, the
/// rest take reference r's value, edge noise is held at zero, and the payoff
/// is the leaf outlier score.
template <class Link, class Score>
class LeafNoiseGame {
 public:
  LeafNoiseGame(const BasicLeafModel<Link>& leaf, Score score, std::vector<double> anomalous,
                std::vector<std::vector<double>> references)
      : leaf_(&leaf),
        score_(std::move(score)),
        anomalous_(std::move(anomalous)),
        refs_(std::move(references)),
        ws_(leaf.workspace()),
        eps_(leaf.node_count()),
        xi_(leaf.edge_count(), 0.0) {}

  std::size_t player_count() const { return leaf_->node_count(); }
  std::size_t reference_count() const { return refs_.size(); }

  double value(std::span<const char> members, std::size_t r) {
    const auto& ref = refs_[r];
    for (std::size_t i = 0; i < eps_.size(); ++i) eps_[i] = members[i] ? anomalous_[i] : ref[i];
    ++calls_;
    return score_(leaf_->forward(eps_, xi_, ws_));
  }

  std::size_t calls() const { return calls_; }

 private:
  const BasicLeafModel<Link>* leaf_;
  Score score_;
  std::vector<double> anomalous_;
  std::vector<std::vector<double>> refs_;
  LeafWorkspace ws_;
  std::vector<double> eps_;
  std::vector<double> xi_;
  std::size_t calls_ = 0;
};

struct GameConfig {
  std::size_t references = 5;        // reference draws averaged by classic / sampling
  std::size_t max_exact_players = 20;
  std::optional<double> early_stop;  // relative tolerance for classic above the cap
  std::size_t early_stop_window = 25;
  std::size_t max_subsets_per_player = 2000;
  std::size_t sampling_subsets = 0;  // 0: max(players + 2, 20 * players)
  std::size_t permutations = 100;

  std::size_t subsets_for(std::size_t players) const {
    if (sampling_subsets) return sampling_subsets;
    return std::max(players + 2, 20 * players);
  }
};

/// Shapley-family baseline over node-noise players. Only the node noises of
/// `inferred` are used (edge noise stays at zero); edges are scored by the
/// outer product of node scores.
inline AttributionReport game_attribute(const MechanismModel& model, NodeId target,
                                        const NoiseAssignment& inferred, Method method,
                                        const GameConfig& cfg, const ReferencePool& pool,
                                        std::uint64_t seed) {
  if (method != Method::shapley && method != Method::sampling && method != Method::permutation)
    throw InputError("game_attribute supports shapley, sampling and permutation");
  if (pool.empty()) throw EmptyReferencePool();
  const auto start = std::chrono::steady_clock::now();
  const LeafModel leaf(model, target);
  const auto x = leaf.aligned(inferred);
  std::mt19937_64 rng(seed);

  std::vector<std::vector<double>> refs;
  auto local = [&](std::size_t r) {
    const auto full = pool.row(r);
    std::vector<double> v(leaf.node_count());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = full[leaf.nodes()[k]];
    return v;
  };
  if (method == Method::permutation) {
    for (std::size_t r = 0; r < pool.size(); ++r) refs.push_back(local(r));
  } else {
    for (std::size_t r : detail::pick_references(pool.size(), cfg.references, rng))
      refs.push_back(local(r));
  }
  LeafNoiseGame game(leaf, OutlierScoreFn{model.marginal(target)}, x.node_noise, std::move(refs));

  const std::uint64_t engine_seed = rng();
  ShapleyResult res;
  switch (method) {
    case Method::shapley: {
      ClassicOptions opt;
      opt.max_exact_players = cfg.max_exact_players;
      opt.early_stop = cfg.early_stop;
      opt.window = cfg.early_stop_window;
      opt.max_subsets_per_player = cfg.max_subsets_per_player;
      opt.seed = engine_seed;
      res = shapley_classic(game, opt);
      break;
    }
    case Method::sampling:
      res = shapley_sampling(game, cfg.subsets_for(game.player_count()), engine_seed);
      break;
    default:
      res = shapley_permutation(game, cfg.permutations, engine_seed);
      break;
  }

  auto rep = detail::empty_report(leaf, method);
  for (std::size_t i = 0; i < res.phi.size(); ++i) rep.node_scores[i].second = res.phi[i];
  rep.edge_scores = baseline_edge_scores(rep.node_scores, leaf.edges());
  rep.meta.references = game.reference_count();
  rep.meta.evaluations = res.evaluations;
  rep.meta.samples = res.samples;
  rep.rank();
  rep.meta.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

/// Everything needed to attribute rows of one abnormal batch.
struct AnomalyContext {
  const MechanismModel* model = nullptr;
  NodeId target = 0;
  std::vector<double> edge_noise;  // inferred xi' per global edge index
  ReferencePool pool;
};

struct MethodConfig {
  IgConfig ig;
  GameConfig game;
  PriorCarry carry = PriorCarry::fresh_alpha;
};

inline AnomalyContext make_context(const MechanismModel& model, NodeId target,
                                   const Dataset& normal, const Dataset& abnormal,
                                   PriorCarry carry) {
  if (!model.dag.contains(target)) throw UnknownNode(target);
  return {&model, target, infer_edge_noise(model, abnormal, carry), make_reference_pool(model, normal)};
}

/// Attributes one abnormal row with any of the five methods.
inline AttributionReport attribute_row(const AnomalyContext& ctx, std::span<const double> row,
                                       Method method, const MethodConfig& cfg, std::uint64_t seed) {
  const MechanismModel& model = *ctx.model;
  switch (method) {
    case Method::naive:
      return naive_attribute(model, ctx.target, row);
    case Method::bigen: {
      const LeafModel leaf(model, ctx.target);
      return ig_attribute(model, leaf, infer_noise_assignment(model, leaf, row, ctx.edge_noise), cfg.ig,
                          ctx.pool, seed);
    }
    default: {
      const LeafModel leaf(model, ctx.target);
      return game_attribute(model, ctx.target, infer_noise_assignment(model, leaf, row, {}),
                            method, cfg.game, ctx.pool, seed);
    }
  }
}

/// Attributes every row of the abnormal batch and averages the scores.
inline AttributionReport attribute_batch(const AnomalyContext& ctx, const Dataset& abnormal,
                                         Method method, const MethodConfig& cfg,
                                         std::uint64_t seed) {
  if (abnormal.rows() == 0) throw InputError("abnormal batch is empty");
  std::vector<AttributionReport> reps;
  reps.reserve(abnormal.rows());
  for (std::size_t r = 0; r < abnormal.rows(); ++r)
    reps.push_back(attribute_row(ctx, row_of(abnormal, r), method, cfg, seed + r));
  return average_reports(reps);
}

}  // namespace bigen
