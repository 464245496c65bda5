#include <gtest/gtest.h>

#include <random>

#include "bigen/io.hpp"
#include "support.hpp"

using namespace bigen;
using bigen::testing::Parents;

namespace {

RandomGraphParams params(std::size_t nodes, Mix mix) {
  RandomGraphParams p;
  p.num_nodes = nodes;
  p.mix = mix;
  p.normal_rows = 500;
  return p;
}

bool in_subgraph(const ScenarioCase& c, NodeId v) {
  const auto anc = c.dag.ancestors(c.target);
  return std::binary_search(anc.begin(), anc.end(), v);
}

void expect_valid(const ScenarioCase& c) {
  EXPECT_FALSE(c.dag.parents(c.target).empty());
  EXPECT_FALSE(c.truth.relevance.empty());
  for (NodeId v : c.truth.root_cause_nodes) EXPECT_TRUE(in_subgraph(c, v));
  for (const EdgeId& e : c.truth.root_cause_edges) {
    EXPECT_TRUE(c.dag.edge_index(e).has_value());
    EXPECT_TRUE(e.dst == c.target || in_subgraph(c, e.dst));
  }
  // Grades are m, m-1, ..., 1 on exactly the injected causes.
  const std::size_t m = c.truth.root_cause_nodes.size() + c.truth.root_cause_edges.size();
  ASSERT_EQ(c.truth.relevance.size(), m);
  std::vector<double> grades;
  for (const auto& [k, g] : c.truth.relevance) grades.push_back(g);
  std::sort(grades.begin(), grades.end());
  for (std::size_t i = 0; i < m; ++i) EXPECT_EQ(grades[i], static_cast<double>(i + 1));
  EXPECT_EQ(c.normal.cols(), c.dag.size());
  EXPECT_EQ(c.abnormal.cols(), c.dag.size());
}

double target_score(const ScenarioCase& c, const Dataset& d, const MarginalStats& m) {
  double s = 0.0;
  for (std::size_t r = 0; r < d.rows(); ++r)
    s += outlier_score(m, d.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c.target)));
  return s / static_cast<double>(d.rows());
}

}  // namespace

TEST(RandomGraph, SameSeedSameCase) {
  const auto a = gen_random_graph_case(params(20, Mix::both), 7);
  const auto b = gen_random_graph_case(params(20, Mix::both), 7);
  EXPECT_EQ(a.dag, b.dag);
  EXPECT_EQ(a.target, b.target);
  EXPECT_EQ(a.normal.values, b.normal.values);
  EXPECT_EQ(a.abnormal.values, b.abnormal.values);
  EXPECT_EQ(a.truth.relevance, b.truth.relevance);
  const auto c = gen_random_graph_case(params(20, Mix::both), 8);
  EXPECT_NE(a.abnormal.values, c.abnormal.values);
}

TEST(RandomGraph, CasesAreValidForEveryMix) {
  for (Mix mix : {Mix::nodes, Mix::edges, Mix::both}) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto c = gen_random_graph_case(params(10 + seed % 41, mix), seed);
      expect_valid(c);
      if (mix == Mix::nodes) EXPECT_TRUE(c.truth.root_cause_edges.empty());
      if (mix == Mix::edges) EXPECT_TRUE(c.truth.root_cause_nodes.empty());
      if (mix != Mix::edges) EXPECT_FALSE(c.truth.root_cause_nodes.empty());
      if (mix != Mix::nodes) EXPECT_FALSE(c.truth.root_cause_edges.empty());
    }
  }
}

TEST(RandomGraph, InjectionMagnitudesAtLeastThree) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto c = gen_random_graph_case(params(30, Mix::both), seed);
    for (NodeId v : c.truth.root_cause_nodes) {
      const auto& d = c.injection.node[v];
      ASSERT_TRUE(d.has_value());
      EXPECT_GE(std::abs(d->first), 3.0);
      EXPECT_LE(std::abs(d->first), 5.0);
    }
    for (const EdgeId& e : c.truth.root_cause_edges) {
      const auto& d = c.injection.edge[*c.dag.edge_index(e)];
      ASSERT_TRUE(d.has_value());
      const double m_j = c.generator.at(e.dst).posterior_mean.cwiseAbs().maxCoeff();
      EXPECT_GE(std::abs(d->first) / m_j, 3.0 - 1e-12);
      EXPECT_LE(std::abs(d->first) / m_j, 5.0 + 1e-12);
    }
  }
}

TEST(RandomGraph, AnomalyReachesChainLeaf) {
  // 10-node chain, one node cause injected per the random-graph protocol.
  std::vector<double> zs;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Dag g = bigen::testing::chain(10);
    std::normal_distribution<double> nd(0.0, 1.0);
    WeightTable w(10);
    w[0] = Eigen::VectorXd(0);
    for (NodeId j = 1; j < 10; ++j) w[j] = Eigen::VectorXd::Constant(1, std::abs(nd(rng)));
    const auto gen = make_generative_model(g, w, {100.0, 1.0});
    const auto normal = sample_traced(gen, 2000, rng, SampleMode::resample_edge_noise_per_row).data;
    const NodeId cause = std::uniform_int_distribution<NodeId>(0, 8)(rng);
    std::uniform_real_distribution<double> band(3.0, 5.0);
    NoiseInjection inj;
    inj.node.assign(10, std::nullopt);
    const double a = (std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0) * band(rng);
    inj.node[cause] = NoiseDist::gaussian(a, band(rng));
    const auto abnormal = sample_traced(gen, 10, rng, SampleMode::resample_edge_noise_per_row, inj).data;
    const auto stats = marginal_stats(g, normal)[9];
    for (std::size_t r = 0; r < 10; ++r) zs.push_back(z_value(stats, abnormal.values(static_cast<Eigen::Index>(r), 9)));
  }
  std::nth_element(zs.begin(), zs.begin() + static_cast<std::ptrdiff_t>(zs.size() / 2), zs.end());
  EXPECT_GT(zs[zs.size() / 2], 2.0);
}

TEST(RandomGraph, AbnormalRowsScoreHigherAtTarget) {
  std::vector<double> diff;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto c = gen_random_graph_case(params(20, Mix::both), seed);
    const auto stats = marginal_stats(c.dag, c.normal)[c.target];
    diff.push_back(target_score(c, c.abnormal, stats) - target_score(c, c.normal, stats));
  }
  const double n = static_cast<double>(diff.size());
  double mean = 0.0;
  for (double d : diff) mean += d / n;
  double var = 0.0;
  for (double d : diff) var += (d - mean) * (d - mean) / (n - 1);
  const double t = mean / std::sqrt(var / n);
  EXPECT_GT(mean, 0.0);
  EXPECT_GT(t, 3.0);
}

TEST(RandomGraph, RejectsTinyGraphs) { EXPECT_THROW(gen_random_graph_case(params(2, Mix::both), 1), InputError); }

TEST(Microservice, TargetAndCauses) {
  for (Mix mix : {Mix::nodes, Mix::edges, Mix::both}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto c = gen_microservice_case(seed, mix);
      EXPECT_EQ(c.dag.name(c.target), "Website");
      EXPECT_EQ(c.dag.size(), 11u);
      expect_valid(c);
      const std::size_t k = c.truth.root_cause_nodes.size(), l = c.truth.root_cause_edges.size();
      EXPECT_GE(k + l, 1u);
      EXPECT_LE(k, 3u);
      EXPECT_LE(l, 3u);
      for (NodeId v : c.truth.root_cause_nodes) {
        const auto& d = *c.injection.node[v];
        const double s = c.generator.at(v).node_noise.stddev();
        EXPECT_EQ(d.kind, NoiseDist::Kind::uniform);
        EXPECT_TRUE((d.first >= 3.0 * s && d.second <= 5.0 * s) || (d.first >= -5.0 * s && d.second <= -3.0 * s));
      }
      for (const auto& w : c.generator.nodes)
        for (Eigen::Index i = 0; i < w.posterior_mean.size(); ++i) EXPECT_GT(w.posterior_mean[i], 0.0);
    }
  }
}

TEST(Microservice, InjectedNoiseOutsideThreeSigma) {
  const auto c = gen_microservice_case(3, Mix::nodes);
  std::mt19937_64 rng(1);
  const auto trace = sample_traced(c.generator, 200, rng, SampleMode::resample_edge_noise_per_row, c.injection);
  for (NodeId v : c.truth.root_cause_nodes) {
    const double s = c.generator.at(v).node_noise.stddev();
    for (Eigen::Index r = 0; r < 200; ++r) EXPECT_GT(std::abs(trace.node_noise(r, static_cast<Eigen::Index>(v))), 3.0 * s);
  }
}

TEST(SupplyChain, CauseCountsAndSupport) {
  for (Mix mix : {Mix::nodes, Mix::edges, Mix::both}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto c = gen_supply_chain_case(seed, mix);
      EXPECT_EQ(c.dag.name(c.target), "received");
      expect_valid(c);
      const std::size_t k = c.truth.root_cause_nodes.size(), l = c.truth.root_cause_edges.size();
      EXPECT_GE(k + l, 1u);
      EXPECT_LE(k + l, 2u);
      if (mix == Mix::both) EXPECT_TRUE(k == 1 && l == 1);
      if (mix == Mix::nodes) EXPECT_EQ(l, 0u);
      if (mix == Mix::edges) EXPECT_EQ(k, 0u);
      for (NodeId v : c.truth.root_cause_nodes) {
        EXPECT_EQ(c.injection.node[v]->first, 3.0);
        EXPECT_EQ(c.injection.node[v]->second, 5.0);
      }
    }
  }
}

TEST(SupplyChain, GammaNodeNoiseIsNonNegative) {
  const auto c = gen_supply_chain_case(4, Mix::both);
  std::mt19937_64 rng(2);
  const auto trace = sample_traced(c.generator, 1000, rng, SampleMode::resample_edge_noise_per_row);
  EXPECT_GE(trace.node_noise.minCoeff(), 0.0);
  const auto abn = sample_traced(c.generator, 100, rng, SampleMode::resample_edge_noise_per_row, c.injection);
  for (NodeId v : c.truth.root_cause_nodes)
    for (Eigen::Index r = 0; r < 100; ++r) {
      EXPECT_GE(abn.node_noise(r, static_cast<Eigen::Index>(v)), 3.0);
      EXPECT_LE(abn.node_noise(r, static_cast<Eigen::Index>(v)), 5.0);
    }
}

TEST(Mixes, NamesRoundTrip) {
  for (Mix m : {Mix::nodes, Mix::edges, Mix::both}) EXPECT_EQ(parse_mix(to_string(m)), m);
  EXPECT_THROW(parse_mix("all"), InputError);
}

TEST(CaseFiles, WriteThenReadRoundTrips) {
  const auto dir = std::filesystem::temp_directory_path() / "bigen_case_roundtrip";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto c = gen_random_graph_case(params(12, Mix::both), 5);
  io::write_case(c, dir);
  const auto back = io::read_case(dir);
  EXPECT_EQ(back.dag, c.dag);
  EXPECT_EQ(back.target, c.target);
  EXPECT_EQ(back.truth.relevance, c.truth.relevance);
  EXPECT_EQ(back.mix, c.mix);
  EXPECT_EQ(back.normal.values, c.normal.values);
  EXPECT_EQ(back.abnormal.values, c.abnormal.values);
  std::filesystem::remove_all(dir);
}
