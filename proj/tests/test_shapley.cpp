#include <gtest/gtest.h>

#include <bit>
#include <numeric>
#include <random>

#include "support.hpp"

using namespace bigen;
using bigen::testing::Parents;

namespace {

std::size_t size_of(std::span<const char> m) {
  std::size_t n = 0;
  for (char c : m) n += c ? 1 : 0;
  return n;
}

auto square_game(std::size_t d) {
  return make_game(d, [](std::span<const char> m) {
    const double s = static_cast<double>(size_of(m));
    return s * s;
  });
}

auto additive_game(std::vector<double> c) {
  const std::size_t d = c.size();
  return make_game(d, [c = std::move(c)](std::span<const char> m) {
    double v = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) v += m[i] ? c[i] : 0.0;
    return v;
  });
}

// A game given by a full 2^d table.
auto table_game(std::size_t d, std::vector<double> table) {
  return make_game(d, [table = std::move(table)](std::span<const char> m) {
    std::size_t mask = 0;
    for (std::size_t i = 0; i < m.size(); ++i) mask |= static_cast<std::size_t>(m[i] ? 1 : 0) << i;
    return table[mask];
  });
}

// Independent oracle: average marginal contribution over all d! orderings.
std::vector<double> brute_force_shapley(std::size_t d, const std::vector<double>& table) {
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(d, 0.0);
  double count = 0.0;
  do {
    std::size_t mask = 0;
    for (std::size_t j : order) {
      phi[j] += table[mask | (std::size_t{1} << j)] - table[mask];
      mask |= std::size_t{1} << j;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& p : phi) p /= count;
  return phi;
}

std::vector<double> random_table(std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> c(d);
  for (auto& x : c) x = 2.0 * u(rng);
  std::vector<double> table(std::size_t{1} << d);
  for (std::size_t mask = 0; mask < table.size(); ++mask) {
    double v = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      if (mask >> i & 1) v += c[i];
    table[mask] = v + 0.5 * u(rng) * static_cast<double>(std::popcount(mask));
  }
  return table;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST(Classic, OnePlayer) {
  auto g = make_game(1, [](std::span<const char> m) { return m[0] ? 4.5 : 1.0; });
  const auto r = shapley_classic(g);
  EXPECT_EQ(r.phi, (std::vector<double>{3.5}));
  EXPECT_EQ(r.evaluations, 2u);
}

TEST(Classic, TwoPlayerAdditive) {
  auto g = additive_game({1.5, -0.25});
  const auto r = shapley_classic(g);
  EXPECT_NEAR(r.phi[0], 1.5, 1e-15);
  EXPECT_NEAR(r.phi[1], -0.25, 1e-15);
}

TEST(Classic, SquareGameGivesThreeEach) {
  auto g = square_game(3);
  const auto r = shapley_classic(g);
  for (double p : r.phi) EXPECT_DOUBLE_EQ(p, 3.0);
}

TEST(Classic, EvaluationCountIsTwoToTheD) {
  for (std::size_t d = 1; d <= 15; ++d) {
    std::size_t calls = 0;
    auto g = make_game(d, [&](std::span<const char> m) {
      ++calls;
      return static_cast<double>(size_of(m));
    });
    const auto r = shapley_classic(g);
    EXPECT_EQ(r.evaluations, std::size_t{1} << d);
    EXPECT_EQ(calls, std::size_t{1} << d);
  }
}

TEST(Classic, MatchesPermutationEnumerationAndIsEfficient) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t d = 2 + seed % 5;
    const auto table = random_table(d, rng);
    auto g = table_game(d, table);
    const auto r = shapley_classic(g);
    const auto oracle = brute_force_shapley(d, table);
    double sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      EXPECT_NEAR(r.phi[j], oracle[j], 1e-12);
      sum += r.phi[j];
    }
    EXPECT_NEAR(sum, table.back() - table.front(), 1e-12);
  }
}

TEST(Classic, SymmetricPlayersGetEqualValues) {
  // Players 0 and 2 are interchangeable.
  auto g = make_game(4, [](std::span<const char> m) {
    return (m[0] + m[2]) * 1.5 + m[1] * m[3] * 2.0 + m[0] * m[2] * m[1] - 0.5 * m[3];
  });
  const auto r = shapley_classic(g);
  EXPECT_DOUBLE_EQ(r.phi[0], r.phi[2]);
}

TEST(Classic, CapWithoutEarlyStopThrows) {
  auto g = square_game(25);
  EXPECT_THROW(shapley_classic(g), TooManyPlayers);
  ClassicOptions opt;
  opt.max_exact_players = 4;
  auto small = square_game(5);
  EXPECT_THROW(shapley_classic(small, opt), TooManyPlayers);
}

TEST(Classic, EarlyStopEstimatesAboveCap) {
  std::vector<double> c(25);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.1 * static_cast<double>(i) - 1.0;
  auto g = additive_game(c);
  ClassicOptions opt;
  opt.early_stop = 0.01;
  const auto r = shapley_classic(g, opt);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(r.phi[i], c[i], 1e-12);
  EXPECT_LT(r.evaluations, 2 * 25 * opt.max_subsets_per_player);
}

TEST(Sampling, AdditiveGameIsExact) {
  auto g = additive_game({0.3, -1.2, 2.0, 0.7, 0.05});
  const auto r = shapley_sampling(g, 50, 3);
  const double want[] = {0.3, -1.2, 2.0, 0.7, 0.05};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.phi[i], want[i], 1e-8);
}

TEST(Sampling, SquareGameWithinFivePercent) {
  auto g = square_game(5);
  const auto r = shapley_sampling(g, 2000, 1);
  for (double p : r.phi) EXPECT_NEAR(p, 5.0, 0.25);
}

TEST(Sampling, TooFewSubsetsRejected) {
  auto g = square_game(5);
  EXPECT_THROW(shapley_sampling(g, 6, 1), InputError);
}

TEST(Permutation, AdditiveGameIsExactForAnyM) {
  for (std::size_t m : {1u, 3u, 50u}) {
    auto g = additive_game({0.3, -1.2, 2.0, 0.7});
    const auto r = shapley_permutation(g, m, 9);
    EXPECT_NEAR(r.phi[0], 0.3, 1e-12);
    EXPECT_NEAR(r.phi[1], -1.2, 1e-12);
    EXPECT_NEAR(r.phi[2], 2.0, 1e-12);
    EXPECT_NEAR(r.phi[3], 0.7, 1e-12);
    EXPECT_EQ(r.evaluations, m * 5);
  }
}

TEST(Permutation, SquareGameWithinFivePercent) {
  auto g = square_game(5);
  const auto r = shapley_permutation(g, 5000, 2);
  for (double p : r.phi) EXPECT_NEAR(p, 5.0, 0.25);
}

TEST(Permutation, SingleDrawIsUnbiased) {
  // Averaging many independent M = 1 estimates converges to the exact value.
  std::mt19937_64 rng(4);
  const auto table = random_table(4, rng);
  auto g = table_game(4, table);
  const auto exact = brute_force_shapley(4, table);
  std::vector<double> mean(4, 0.0);
  const int n = 20000;
  for (int s = 0; s < n; ++s) {
    const auto r = shapley_permutation(g, 1, static_cast<std::uint64_t>(s));
    for (std::size_t j = 0; j < 4; ++j) mean[j] += r.phi[j] / n;
  }
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(mean[j], exact[j], 0.05 * max_abs(exact));
}

TEST(Estimators, WithinFivePercentOfExactOnRandomGames) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const std::size_t d = 2 + seed % 4;
    const auto table = random_table(d, rng);
    auto g = table_game(d, table);
    const auto exact = shapley_classic(g).phi;
    const double scale = max_abs(exact);
    // Rough random games need a larger budget than the smooth |Q|^2 game.
    const auto s = shapley_sampling(g, 50000, seed);
    const auto p = shapley_permutation(g, 20000, seed);
    for (std::size_t j = 0; j < d; ++j) {
      EXPECT_LE(std::abs(s.phi[j] - exact[j]), 0.05 * scale) << "sampling seed " << seed;
      EXPECT_LE(std::abs(p.phi[j] - exact[j]), 0.05 * scale) << "permutation seed " << seed;
    }
  }
}

TEST(Estimators, NullGameGivesZero) {
  auto g = make_game(4, [](std::span<const char>) { return 2.5; });
  for (double v : shapley_classic(g).phi) EXPECT_EQ(v, 0.0);
  for (double v : shapley_sampling(g, 40, 1).phi) EXPECT_NEAR(v, 0.0, 1e-12);
  for (double v : shapley_permutation(g, 10, 1).phi) EXPECT_EQ(v, 0.0);
}
