#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bigen/bigen.hpp"

namespace bigen::cli {

namespace fs = std::filesystem;

enum ExitCode : int { ok = 0, input_error = 2, numerical_error = 3, attribution_error = 4 };

inline NodeId resolve_node(const Dag& dag, const std::string& key) {
  for (NodeId j = 0; j < dag.size(); ++j)
    if (dag.name(j) == key) return j;
  NodeId id = 0;
  auto [end, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
  if (ec != std::errc() || end != key.data() + key.size() || !dag.contains(id))
    throw InputError("unknown target node '" + key + "'");
  return id;
}

inline std::string describe(const Dag& dag, const Candidate& c) {
  if (c.is_node()) return dag.name(c.node);
  return dag.name(c.edge.src) + " -> " + dag.name(c.edge.dst);
}

inline std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  if (names.empty()) return {std::begin(kAllMethods), std::end(kAllMethods)};
  for (const auto& n : names) out.push_back(parse_method(n));
  return out;
}

struct EngineFlags {
  std::size_t steps = 50;
  std::size_t references = 5;
  std::optional<double> early_stop;
  std::size_t max_exact = 20;
  std::size_t permutations = 100;
  std::size_t subsets = 0;
  std::string carry = "fresh";

  void add_to(CLI::App& app) {
    app.add_option("--steps", steps, "IG path steps")->check(CLI::PositiveNumber);
    app.add_option("--references", references, "reference draws")->check(CLI::PositiveNumber);
    app.add_option("--early-stop", early_stop, "relative tolerance for classic Shapley above the exact cap");
    app.add_option("--max-exact", max_exact, "largest player count enumerated exactly");
    app.add_option("--permutations", permutations, "permutation Shapley draws")->check(CLI::PositiveNumber);
    app.add_option("--subsets", subsets, "sampling Shapley subsets (0: 20 per player)");
    app.add_option("--carry", carry, "prior carried into the abnormal refit")
        ->check(CLI::IsMember({"fresh", "full"}));
  }

  MethodConfig config() const {
    MethodConfig cfg;
    cfg.ig.steps = steps;
    cfg.ig.references = references;
    cfg.game.references = references;
    cfg.game.early_stop = early_stop;
    cfg.game.max_exact_players = max_exact;
    cfg.game.permutations = permutations;
    cfg.game.sampling_subsets = subsets;
    cfg.carry = carry == "full" ? PriorCarry::full_precision : PriorCarry::fresh_alpha;
    return cfg;
  }
};

template <class T>
std::vector<T> split_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    T v{};
    auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || end != item.data() + item.size())
      throw InputError("bad list entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw InputError("empty list");
  return out;
}

// ---- generate --------------------------------------------------------------------

struct GenerateArgs {
  std::string scenario;
  std::uint64_t seed = 0;
  std::size_t nodes = 20;
  std::optional<std::size_t> nodes_max;
  std::string mix = "both";
  std::size_t count = 1;
  std::size_t normal_rows = 2000;
  std::size_t abnormal_rows = 10;
  std::string out;
};

inline ScenarioCase make_case(const GenerateArgs& a, std::uint64_t seed) {
  const Mix mix = parse_mix(a.mix);
  if (a.scenario == "random") {
    RandomGraphParams p;
    p.num_nodes = a.nodes;
    if (a.nodes_max) {
      if (*a.nodes_max < a.nodes) throw InputError("--nodes-max is below --nodes");
      std::mt19937_64 rng(seed ^ 0xA5A5A5A5A5A5A5A5ULL);
      p.num_nodes = std::uniform_int_distribution<std::size_t>(a.nodes, *a.nodes_max)(rng);
    }
    p.normal_rows = a.normal_rows;
    p.abnormal_rows = a.abnormal_rows;
    p.mix = mix;
    return gen_random_graph_case(p, seed);
  }
  FixedTopologyParams p;
  p.normal_rows = a.normal_rows;
  p.abnormal_rows = a.abnormal_rows;
  p.mix = mix;
  if (a.scenario == "microservice")
    return gen_microservice_case(io::builtin_topology("microservice"), p, seed);
  return gen_supply_chain_case(io::builtin_topology("supplychain"), p, seed);
}

inline void print_case(std::ostream& out, const fs::path& dir, const ScenarioCase& c) {
  out << dir.string() << ": " << c.scenario << " mix=" << to_string(c.mix) << " nodes=" << c.dag.size()
      << " edges=" << c.dag.edge_count() << " target=" << c.dag.name(c.target) << " causes=";
  bool first = true;
  for (const auto& [key, grade] : c.truth.relevance) {
    out << (first ? "" : ", ") << describe(c.dag, key) << " (" << grade << ")";
    first = false;
  }
  out << "\n";
}

inline int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const fs::path root(a.out);
  if (!fs::is_directory(root)) throw InputError("output directory does not exist: " + a.out);
  if (a.count == 0) throw InputError("--count must be positive");
  // Build every case before touching the filesystem so a failure leaves nothing behind.
  std::vector<std::pair<fs::path, ScenarioCase>> cases;
  for (std::size_t i = 0; i < a.count; ++i) {
    std::ostringstream name;
    name << "case_" << std::setw(4) << std::setfill('0') << i;
    cases.emplace_back(a.count == 1 ? root : root / name.str(), make_case(a, a.seed + i));
  }
  for (const auto& [dir, c] : cases) {
    fs::create_directories(dir);
    io::write_case(c, dir);
    print_case(out, dir, c);
  }
  return ok;
}

// ---- fit -------------------------------------------------------------------------

struct FitArgs {
  std::string graph, data, out;
  double alpha = 1.0;
  double beta = 100.0;
};

inline int cmd_fit(const FitArgs& a, std::ostream& out) {
  const Dag dag = io::load_graph(a.graph);
  const Dataset data = io::load_dataset(a.data, dag);
  const Hyperparams hyper{a.alpha, a.beta};
  hyper.validate();
  const auto model = fit_posterior(dag, data, hyper);
  io::write_text_atomic(a.out, io::model_to_json(model).dump(2) + "\n");
  out << "fitted " << dag.size() << " mechanisms on " << data.rows() << " rows";
  if (const auto r = model.ridge_events()) out << " (" << r << " ridge corrections)";
  out << " -> " << a.out << "\n";
  return ok;
}

// ---- attribute -------------------------------------------------------------------

struct AttributeArgs {
  std::string model, abnormal, normal, target, method = "bigen", out;
  std::uint64_t seed = 0;
  EngineFlags engine;
};

inline void print_ranking(std::ostream& out, const Dag& dag, const AttributionReport& rep,
                          std::size_t top) {
  out << "rank  score         candidate\n";
  for (std::size_t i = 0; i < std::min(top, rep.ranking.size()); ++i) {
    std::ostringstream score;
    score << std::setprecision(6) << rep.ranking[i].score;
    out << std::left << std::setw(6) << (i + 1) << std::setw(14) << score.str()
        << describe(dag, rep.ranking[i].key) << "\n";
  }
}

inline int cmd_attribute(const AttributeArgs& a, std::ostream& out) {
  const auto model = io::model_from_json(io::parse_json(io::read_text(a.model), "model"));
  if (!model.has_marginals()) throw InputError("model carries no marginal statistics");
  const NodeId target = resolve_node(model.dag, a.target);
  if (model.dag.parents(target).empty()) throw InputError("target has no ancestors");
  const Method method = parse_method(a.method);
  const Dataset abnormal = io::load_dataset(a.abnormal, model.dag);
  if (abnormal.rows() == 0) throw InputError("abnormal batch is empty");
  const auto cfg = a.engine.config();

  AttributionReport rep;
  if (method == Method::naive) {
    AnomalyContext ctx{&model, target, {}, {}};
    rep = attribute_batch(ctx, abnormal, method, cfg, a.seed);
  } else {
    if (a.normal.empty()) throw InputError("--normal is required for method " + a.method);
    const Dataset normal = io::load_dataset(a.normal, model.dag);
    const auto ctx = make_context(model, target, normal, abnormal, cfg.carry);
    rep = attribute_batch(ctx, abnormal, method, cfg, a.seed);
  }
  io::write_text_atomic(a.out, io::report_to_json(rep).dump(2) + "\n");
  out << to_string(method) << " attribution of " << model.dag.name(target) << " over "
      << abnormal.rows() << " abnormal rows\n";
  print_ranking(out, model.dag, rep, 10);
  return ok;
}

// ---- evaluate --------------------------------------------------------------------

struct EvaluateArgs {
  std::string cases, out;
  std::vector<std::string> methods;
  std::string k = "1,2,3,5,10";
  std::size_t headline_k = 5;
  std::uint64_t seed = 0;
  EngineFlags engine;
};

inline void print_grid(std::ostream& out, std::span<const io::MixResults> groups,
                       std::span<const Method> methods, std::size_t k) {
  out << "NDCG@" << k << " (mean +- std, n)\n";
  for (const auto& g : groups) {
    out << "mix=" << g.mix << "\n";
    out << "  " << std::left << std::setw(13) << "method";
    for (View v : kAllViews) out << std::setw(26) << to_string(v);
    out << "\n";
    for (Method m : methods) {
      out << "  " << std::setw(13) << to_string(m);
      for (View v : kAllViews) {
        std::ostringstream cell;
        if (const auto* r = find_result(g.results, m, v, k))
          cell << std::fixed << std::setprecision(3) << r->mean << " +- " << r->std << " (" << r->n_cases() << ")";
        else
          cell << "-";
        out << std::setw(26) << cell.str();
      }
      out << "\n";
    }
  }
}

inline int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto methods = parse_methods(a.methods);
  const auto ks = split_list<std::size_t>(a.k);
  for (auto k : ks)
    if (k == 0) throw InputError("k must be >= 1");
  const auto dirs = io::find_cases(a.cases);
  if (dirs.empty()) throw InputError("no complete case under " + a.cases);
  std::map<std::string, std::vector<ScenarioCase>> by_mix;
  for (const auto& d : dirs) {
    auto c = io::read_case(d);
    by_mix[std::string(to_string(c.mix))].push_back(std::move(c));
  }
  EvalConfig cfg;
  cfg.method = a.engine.config();
  cfg.seed = a.seed;
  std::vector<io::MixResults> groups;
  for (const char* mix : {"nodes", "edges", "both"}) {
    auto it = by_mix.find(mix);
    if (it == by_mix.end()) continue;
    groups.push_back({mix, evaluate_methods(it->second, methods, cfg, ks)});
  }
  io::write_text_atomic(a.out, io::results_to_csv(groups));
  print_grid(out, groups, methods, std::find(ks.begin(), ks.end(), a.headline_k) != ks.end() ? a.headline_k : ks.back());
  return ok;
}

// ---- bench -----------------------------------------------------------------------

struct BenchArgs {
  std::string sizes = "10,20,50,100,200";
  std::vector<std::string> methods;
  double budget = 5.0;
  std::uint64_t seed = 0;
  std::string out;
  EngineFlags engine;
};

inline int cmd_bench(const BenchArgs& a, std::ostream& out) {
  BenchConfig cfg;
  cfg.sizes = split_list<std::size_t>(a.sizes);
  cfg.methods = parse_methods(a.methods);
  cfg.budget = a.budget;
  cfg.seed = a.seed;
  cfg.method = a.engine.config();
  const auto records = bench_runtime(cfg);
  io::write_text_atomic(a.out, io::bench_to_csv(records));
  out << "method        points  slope(seconds vs d+e)  slope(evals vs d+e)\n";
  for (Method m : cfg.methods) {
    std::vector<double> x, t, ev;
    for (const auto& r : records)
      if (r.method == m && !r.skipped) {
        x.push_back(static_cast<double>(r.num_nodes + r.num_edges));
        t.push_back(std::max(r.wall_time, 1e-12));
        ev.push_back(static_cast<double>(std::max<std::size_t>(r.evaluation_count, 1)));
      }
    out << std::left << std::setw(14) << to_string(m) << std::setw(8) << x.size();
    if (x.size() >= 2) {
      std::ostringstream s1, s2;
      s1 << std::fixed << std::setprecision(2) << loglog_slope(x, t);
      s2 << std::fixed << std::setprecision(2) << loglog_slope(x, ev);
      out << std::setw(23) << s1.str() << s2.str();
    } else {
      out << std::setw(23) << "-" << "-";
    }
    out << "\n";
  }
  return ok;
}

// ---- entry point -----------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Root-cause attribution over noisy causal mechanisms", "bigen"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "generate scenario cases");
  g->add_option("scenario", gen.scenario, "random | microservice | supplychain")
      ->required()
      ->check(CLI::IsMember({"random", "microservice", "supplychain"}));
  g->add_option("--seed", gen.seed, "random seed")->required();
  g->add_option("--nodes", gen.nodes, "node count (random graphs)");
  g->add_option("--nodes-max", gen.nodes_max, "draw the node count uniformly in [--nodes, --nodes-max]");
  g->add_option("--mix", gen.mix, "injected causes")->check(CLI::IsMember({"nodes", "edges", "both"}));
  g->add_option("--count", gen.count, "number of cases (seeds seed, seed+1, ...)");
  g->add_option("--normal-rows", gen.normal_rows, "normal rows per case");
  g->add_option("--abnormal-rows", gen.abnormal_rows, "abnormal rows per case");
  g->add_option("--out", gen.out, "existing output directory")->required();

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "fit the noisy mechanism posterior");
  f->add_option("--graph", fit.graph, "graph file")->required();
  f->add_option("--data", fit.data, "training data")->required();
  f->add_option("--alpha", fit.alpha, "edge-noise precision");
  f->add_option("--beta", fit.beta, "node-noise precision");
  f->add_option("--out", fit.out, "model file to write")->required();

  AttributeArgs attr;
  auto* at = app.add_subcommand("attribute", "attribute a leaf anomaly to nodes and edges");
  at->add_option("--model", attr.model, "fitted model")->required();
  at->add_option("--abnormal", attr.abnormal, "abnormal batch")->required();
  at->add_option("--normal", attr.normal, "normal data supplying reference noises");
  at->add_option("--target", attr.target, "target node name or id")->required();
  at->add_option("--method", attr.method, "bigen | shapley | sampling | permutation | naive");
  at->add_option("--seed", attr.seed, "random seed")->required();
  at->add_option("--out", attr.out, "report file to write")->required();
  attr.engine.add_to(*at);

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "NDCG@k of methods over generated cases");
  e->add_option("--cases", ev.cases, "case directory or directory of cases")->required();
  e->add_option("--methods", ev.methods, "methods (default: all)")->delimiter(',');
  e->add_option("--k", ev.k, "comma-separated cutoffs");
  e->add_option("--headline-k", ev.headline_k, "cutoff shown in the printed grid");
  e->add_option("--seed", ev.seed, "random seed")->required();
  e->add_option("--out", ev.out, "results table to write")->required();
  ev.engine.add_to(*e);

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "runtime scaling of the methods");
  b->add_option("--sizes", bench.sizes, "comma-separated ancestor counts, ascending");
  b->add_option("--methods", bench.methods, "methods (default: all)")->delimiter(',');
  b->add_option("--budget", bench.budget, "seconds allowed per cell")->check(CLI::PositiveNumber);
  b->add_option("--seed", bench.seed, "random seed")->required();
  b->add_option("--out", bench.out, "benchmark table to write")->required();
  bench.engine.add_to(*b);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return input_error;
  }

  try {
    if (g->parsed()) return cmd_generate(gen, out);
    if (f->parsed()) return cmd_fit(fit, out);
    if (at->parsed()) return cmd_attribute(attr, out);
    if (e->parsed()) return cmd_evaluate(ev, out);
    return cmd_bench(bench, out);
  } catch (const InputError& ex) {
    err << "error: " << ex.what() << "\n";
    return input_error;
  } catch (const SingularPrecision& ex) {
    err << "error: " << ex.what() << "\n";
    return numerical_error;
  } catch (const AttributionError& ex) {
    err << "error: " << ex.what() << "\n";
    return attribution_error;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return input_error;
  }
}

}  // namespace bigen::cli
