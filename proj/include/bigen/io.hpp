#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "bigen/attribution.hpp"
#include "bigen/dag.hpp"
#include "bigen/evaluation.hpp"
#include "bigen/mechanism.hpp"
#include "bigen/scenarios.hpp"

namespace bigen::io {

using nlohmann::json;
namespace fs = std::filesystem;

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a sibling temporary file and renames it into place.
inline void write_text_atomic(const fs::path& path, const std::string& content) {
  const auto dir = path.parent_path();
  if (!dir.empty() && !fs::is_directory(dir))
    throw InputError("output directory does not exist: " + dir.string());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << content;
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw InputError("cannot move " + tmp.string() + " into place");
  }
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError("malformed " + what + ": " + e.what());
  }
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

// ---- graph: {"nodes": [names], "edges": [[src, dst], ...]} -------------------

inline json graph_to_json(const Dag& dag) {
  json edges = json::array();
  for (const auto& e : dag.edges()) edges.push_back({e.src, e.dst});
  return {{"nodes", dag.names()}, {"edges", edges}};
}

inline Dag graph_from_json(const json& j) {
  try {
    const auto names = j.at("nodes").get<std::vector<std::string>>();
    std::vector<EdgeId> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw InputError("edge entries must be [src, dst]");
      edges.push_back({e[0].get<NodeId>(), e[1].get<NodeId>()});
    }
    return Dag::from_edges(names.size(), edges, names);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed graph: ") + e.what());
  }
}

inline Dag load_graph(const fs::path& path) {
  return graph_from_json(parse_json(read_text(path), "graph file " + path.string()));
}

// ---- comma-separated tables, header = node names -------------------------------

inline std::string dataset_to_csv(const Dag& dag, const Dataset& data) {
  std::string out;
  for (std::size_t j = 0; j < dag.size(); ++j) {
    if (j) out += ',';
    out += dag.name(j);
  }
  out += '\n';
  for (Eigen::Index r = 0; r < data.values.rows(); ++r) {
    for (Eigen::Index j = 0; j < data.values.cols(); ++j) {
      if (j) out += ',';
      out += format_double(data.values(r, j));
    }
    out += '\n';
  }
  return out;
}

/// Parses a table and checks its header against the graph's node names.
inline Dataset dataset_from_csv(const std::string& text, const Dag& dag) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty data file");
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  if (header.size() != dag.size())
    throw InputError("column mismatch: data has " + std::to_string(header.size()) +
                     " columns, graph has " + std::to_string(dag.size()) + " nodes");
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] != dag.name(j))
      throw InputError("column mismatch: column " + std::to_string(j) + " is '" + header[j] +
                       "', expected '" + dag.name(j) + "'");
  std::vector<double> flat;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t cols = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(p, comma, v);
      if (ec != std::errc() || ptr != comma)
        throw InputError("bad number on data row " + std::to_string(rows + 1));
      flat.push_back(v);
      ++cols;
      p = comma + 1;
    }
    if (cols != dag.size())
      throw InputError("column mismatch on data row " + std::to_string(rows + 1));
    ++rows;
  }
  Dataset d{Eigen::MatrixXd(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dag.size()))};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < dag.size(); ++j)
      d.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = flat[r * dag.size() + j];
  return d;
}

inline Dataset load_dataset(const fs::path& path, const Dag& dag) {
  return dataset_from_csv(read_text(path), dag);
}

// ---- model --------------------------------------------------------------------

inline json noise_to_json(const NoiseDist& d) {
  const char* kind = d.kind == NoiseDist::Kind::gaussian ? "gaussian"
                     : d.kind == NoiseDist::Kind::gamma  ? "gamma"
                                                         : "uniform";
  return {{"kind", kind}, {"params", {d.first, d.second}}};
}

inline NoiseDist noise_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  const auto p = j.at("params").get<std::vector<double>>();
  if (p.size() != 2) throw InputError("noise params must have two entries");
  if (kind == "gaussian") return NoiseDist::gaussian(p[0], p[1]);
  if (kind == "gamma") return NoiseDist::gamma(p[0], p[1]);
  if (kind == "uniform") return NoiseDist::uniform(p[0], p[1]);
  throw InputError("unknown noise kind '" + kind + "'");
}

/// Per node: parents, prior mean, posterior mean, row-major posterior
/// precision, noise descriptor and marginal stats; plus hyperparameters.
inline json model_to_json(const MechanismModel& m) {
  json nodes = json::array();
  for (NodeId j = 0; j < m.size(); ++j) {
    const auto& nm = m.nodes[j];
    std::vector<double> prec;
    for (Eigen::Index r = 0; r < nm.posterior_precision.rows(); ++r)
      for (Eigen::Index c = 0; c < nm.posterior_precision.cols(); ++c)
        prec.push_back(nm.posterior_precision(r, c));
    json node = {
        {"name", m.dag.name(j)},
        {"parents", std::vector<NodeId>(m.dag.parents(j).begin(), m.dag.parents(j).end())},
        {"prior_mean", std::vector<double>(nm.prior_mean.data(), nm.prior_mean.data() + nm.prior_mean.size())},
        {"posterior_mean",
         std::vector<double>(nm.posterior_mean.data(), nm.posterior_mean.data() + nm.posterior_mean.size())},
        {"posterior_precision", prec},
        {"node_noise", noise_to_json(nm.node_noise)},
        {"ridge_applied", nm.ridge_applied},
    };
    if (m.has_marginals()) {
      node["marginal_mean"] = m.marginals[j].mean;
      node["marginal_std"] = m.marginals[j].std;
    }
    nodes.push_back(std::move(node));
  }
  return {{"alpha", m.hyper.alpha}, {"beta", m.hyper.beta}, {"nodes", nodes}};
}

inline MechanismModel model_from_json(const json& j) {
  try {
    MechanismModel m;
    m.hyper = {j.at("alpha").get<double>(), j.at("beta").get<double>()};
    m.hyper.validate();
    const auto& nodes = j.at("nodes");
    std::vector<std::vector<NodeId>> parents;
    std::vector<std::string> names;
    for (const auto& n : nodes) {
      parents.push_back(n.at("parents").get<std::vector<NodeId>>());
      names.push_back(n.at("name").get<std::string>());
    }
    m.dag = Dag(parents, names);
    bool marginals = true;
    for (std::size_t idx = 0; idx < nodes.size(); ++idx) {
      const auto& n = nodes[idx];
      const auto dim = static_cast<Eigen::Index>(parents[idx].size());
      auto vec = [&](const char* key) {
        const auto v = n.at(key).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(v.size()) != dim) throw InputError(std::string(key) + " has wrong length");
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), dim));
      };
      NodeMechanism nm;
      nm.node = idx;
      nm.prior_mean = vec("prior_mean");
      nm.posterior_mean = vec("posterior_mean");
      const auto prec = n.at("posterior_precision").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(prec.size()) != dim * dim)
        throw InputError("posterior_precision has wrong size");
      nm.posterior_precision.resize(dim, dim);
      for (Eigen::Index r = 0; r < dim; ++r)
        for (Eigen::Index c = 0; c < dim; ++c)
          nm.posterior_precision(r, c) = prec[static_cast<std::size_t>(r * dim + c)];
      nm.node_noise = noise_from_json(n.at("node_noise"));
      nm.ridge_applied = n.value("ridge_applied", false);
      m.nodes.push_back(std::move(nm));
      if (n.contains("marginal_mean") && n.contains("marginal_std"))
        m.marginals.push_back({n["marginal_mean"].get<double>(), n["marginal_std"].get<double>()});
      else
        marginals = false;
    }
    if (!marginals) m.marginals.clear();
    return m;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model: ") + e.what());
  }
}

// ---- attribution report --------------------------------------------------------

inline json candidate_to_json(const Candidate& c) {
  if (c.is_node()) return {{"kind", "node"}, {"id", c.node}};
  return {{"kind", "edge"}, {"id", {c.edge.src, c.edge.dst}}};
}

inline Candidate candidate_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "node") return Candidate::of(j.at("id").get<NodeId>());
  if (kind == "edge") {
    const auto& id = j.at("id");
    return Candidate::of(EdgeId{id.at(0).get<NodeId>(), id.at(1).get<NodeId>()});
  }
  throw InputError("unknown candidate kind '" + kind + "'");
}

/// Ranking entries plus deterministic metadata (wall time is left out).
inline json report_to_json(const AttributionReport& r) {
  json ranking = json::array();
  for (const auto& e : r.ranking) {
    json entry = candidate_to_json(e.key);
    entry["score"] = e.score;
    ranking.push_back(std::move(entry));
  }
  return {{"method", std::string(to_string(r.method))},
          {"target", r.target},
          {"ranking", ranking},
          {"metadata",
           {{"steps", r.meta.steps},
            {"references", r.meta.references},
            {"evaluations", r.meta.evaluations},
            {"samples", r.meta.samples},
            {"rows", r.meta.rows}}}};
}

inline AttributionReport report_from_json(const json& j) {
  try {
    AttributionReport r;
    r.method = parse_method(j.at("method").get<std::string>());
    r.target = j.at("target").get<NodeId>();
    for (const auto& e : j.at("ranking")) {
      const auto key = candidate_from_json(e);
      const double s = e.at("score").get<double>();
      if (key.is_node())
        r.node_scores.push_back({key.node, s});
      else
        r.edge_scores.push_back({key.edge, s});
    }
    const auto& meta = j.at("metadata");
    r.meta.steps = meta.value("steps", std::size_t{0});
    r.meta.references = meta.value("references", std::size_t{0});
    r.meta.evaluations = meta.value("evaluations", std::size_t{0});
    r.meta.samples = meta.value("samples", std::size_t{0});
    r.meta.rows = meta.value("rows", std::size_t{1});
    r.rank();
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed report: ") + e.what());
  }
}

// ---- scenario cases: graph.json, normal.csv, abnormal.csv, truth.json ------------

inline json truth_to_json(const ScenarioCase& c) {
  json nodes = c.truth.root_cause_nodes;
  json edges = json::array();
  for (const auto& e : c.truth.root_cause_edges) edges.push_back({e.src, e.dst});
  json relevance = json::array();
  for (const auto& [key, grade] : c.truth.relevance) {
    json entry = candidate_to_json(key);
    entry["grade"] = grade;
    relevance.push_back(std::move(entry));
  }
  return {{"scenario", c.scenario},
          {"mix", std::string(to_string(c.mix))},
          {"seed", c.seed},
          {"target", c.target},
          {"hyper", {{"alpha", c.fit_hyper.alpha}, {"beta", c.fit_hyper.beta}}},
          {"root_cause_nodes", nodes},
          {"root_cause_edges", edges},
          {"relevance", relevance}};
}

inline void write_case(const ScenarioCase& c, const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("output directory does not exist: " + dir.string());
  write_text_atomic(dir / "graph.json", graph_to_json(c.dag).dump(2) + "\n");
  write_text_atomic(dir / "normal.csv", dataset_to_csv(c.dag, c.normal));
  write_text_atomic(dir / "abnormal.csv", dataset_to_csv(c.dag, c.abnormal));
  write_text_atomic(dir / "truth.json", truth_to_json(c).dump(2) + "\n");
}

inline bool is_case_dir(const fs::path& dir) {
  for (const char* f : {"graph.json", "normal.csv", "abnormal.csv", "truth.json"})
    if (!fs::is_regular_file(dir / f)) return false;
  return true;
}

inline ScenarioCase read_case(const fs::path& dir) {
  if (!is_case_dir(dir)) throw InputError("incomplete case directory " + dir.string());
  ScenarioCase c;
  c.dag = load_graph(dir / "graph.json");
  c.normal = load_dataset(dir / "normal.csv", c.dag);
  c.abnormal = load_dataset(dir / "abnormal.csv", c.dag);
  const auto t = parse_json(read_text(dir / "truth.json"), "truth file");
  try {
    c.scenario = t.at("scenario").get<std::string>();
    c.mix = parse_mix(t.at("mix").get<std::string>());
    c.seed = t.at("seed").get<std::uint64_t>();
    c.target = t.at("target").get<NodeId>();
    if (!c.dag.contains(c.target)) throw UnknownNode(c.target);
    c.fit_hyper = {t.at("hyper").at("alpha").get<double>(), t.at("hyper").at("beta").get<double>()};
    c.truth.root_cause_nodes = t.at("root_cause_nodes").get<std::vector<NodeId>>();
    for (const auto& e : t.at("root_cause_edges"))
      c.truth.root_cause_edges.push_back({e.at(0).get<NodeId>(), e.at(1).get<NodeId>()});
    for (const auto& r : t.at("relevance"))
      c.truth.relevance[candidate_from_json(r)] = r.at("grade").get<double>();
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed truth file: ") + e.what());
  }
  return c;
}

/// Case directories under `root` (itself, or its immediate subdirectories), sorted.
inline std::vector<fs::path> find_cases(const fs::path& root) {
  if (!fs::is_directory(root)) throw InputError("cases directory does not exist: " + root.string());
  if (is_case_dir(root)) return {root};
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && is_case_dir(entry.path())) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---- result tables ---------------------------------------------------------------

struct MixResults {
  std::string mix;
  std::vector<RankingMetricResult> results;
};

/// Columns: method, mix, view, k, mean, std, n_cases.
inline std::string results_to_csv(std::span<const MixResults> groups) {
  std::string out = "method,mix,view,k,mean,std,n_cases\n";
  for (const auto& g : groups)
    for (const auto& r : g.results) {
      out += std::string(to_string(r.method)) + "," + g.mix + "," + std::string(to_string(r.view)) + "," +
             std::to_string(r.k) + "," + format_double(r.mean) + "," + format_double(r.std) + "," +
             std::to_string(r.n_cases()) + "\n";
    }
  return out;
}

/// Columns: method, nodes, edges, seconds, evals, skipped. `seconds` is a
/// wall-clock measurement and the only column that varies between runs.
inline std::string bench_to_csv(std::span<const BenchRecord> records) {
  std::string out = "method,nodes,edges,seconds,evals,skipped\n";
  for (const auto& r : records) {
    out += std::string(to_string(r.method)) + "," + std::to_string(r.num_nodes) + "," +
           std::to_string(r.num_edges) + "," + (r.skipped ? std::string("") : format_double(r.wall_time)) +
           "," + (r.skipped ? std::string("") : std::to_string(r.evaluation_count)) + "," +
           (r.skipped ? "1" : "0") + "\n";
  }
  return out;
}

// ---- built-in topologies ---------------------------------------------------------

inline Dag builtin_topology(const std::string& name) {
  return load_graph(fs::path(default_data_dir()) / (name + ".json"));
}

}  // namespace bigen::io

namespace bigen {

inline ScenarioCase gen_microservice_case(std::uint64_t seed, Mix mix) {
  FixedTopologyParams p;
  p.mix = mix;
  return gen_microservice_case(io::builtin_topology("microservice"), p, seed);
}

inline ScenarioCase gen_supply_chain_case(std::uint64_t seed, Mix mix) {
  FixedTopologyParams p;
  p.mix = mix;
  return gen_supply_chain_case(io::builtin_topology("supplychain"), p, seed);
}

}  // namespace bigen
