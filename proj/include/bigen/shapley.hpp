#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bigen/errors.hpp"

namespace bigen {

/// A cooperative game over `player_count()` players. `value(members, r)` is
/// the payoff of the coalition whose membership flags are `members`, under
/// reference draw r in [0, reference_count()).
template <class G>
concept CoalitionGame = requires(G& g, std::span<const char> members, std::size_t r) {
  { g.player_count() } -> std::convertible_to<std::size_t>;
  { g.reference_count() } -> std::convertible_to<std::size_t>;
  { g.value(members, r) } -> std::convertible_to<double>;
};

/// Adapts a callable `double(std::span<const char>)` into a single-reference game.
template <class F>
class FunctionGame {
 public:
  FunctionGame(std::size_t players, F f) : players_(players), f_(std::move(f)) {}
  std::size_t player_count() const { return players_; }
  std::size_t reference_count() const { return 1; }
  double value(std::span<const char> members, std::size_t) { return f_(members); }

 private:
  std::size_t players_;
  F f_;
};

template <class F>
FunctionGame<F> make_game(std::size_t players, F f) {
  return FunctionGame<F>(players, std::move(f));
}

struct ShapleyResult {
  std::vector<double> phi;
  std::size_t evaluations = 0;  // coalition evaluations (reference-averaged for classic/sampling)
  std::size_t samples = 0;      // subsets or permutations drawn
};

namespace detail {

/// Payoff averaged over every reference draw.
template <CoalitionGame G>
double mean_value(G& game, std::span<const char> members) {
  const std::size_t refs = game.reference_count();
  double acc = 0.0;
  for (std::size_t r = 0; r < refs; ++r) acc += game.value(members, r);
  return acc / static_cast<double>(refs);
}

/// Uniform random subset of `pool` of the given size written into `members`.
template <class Rng>
void draw_subset(std::vector<std::size_t>& pool, std::size_t size, std::vector<char>& members,
                 Rng& rng) {
  for (std::size_t i = 0; i < size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    members[pool[i]] = 1;
  }
}

}  // namespace detail

struct ClassicOptions {
  std::size_t max_exact_players = 20;
  /// Enables streaming estimation above max_exact_players. The tolerance is
  /// relative to |v(P) - v(empty)|.
  std::optional<double> early_stop;
  std::size_t window = 25;
  std::size_t max_subsets_per_player = 2000;
  std::uint64_t seed = 0;
};

/// Exact Shapley values by enumerating all 2^d coalitions:
///   phi_j = sum_{Q in P\j} |Q|! (d-|Q|-1)! / d! * (v(Q + j) - v(Q)).
/// Above the exact cap with early stopping enabled, each player's value is a
/// running mean of marginal contributions over coalitions drawn from the
/// Shapley distribution (uniform size, then uniform members), stopped once the
/// estimate moves less than the tolerance across `window` consecutive draws.
template <CoalitionGame G>
ShapleyResult shapley_classic(G& game, const ClassicOptions& opt = {}) {
  const std::size_t d = game.player_count();
  ShapleyResult res;
  res.phi.assign(d, 0.0);
  if (d == 0) return res;

  if (d <= opt.max_exact_players) {
    if (d >= 63) throw TooManyPlayers(d, opt.max_exact_players);
    const std::uint64_t full = std::uint64_t{1} << d;
    std::vector<double> table(full);
    std::vector<char> members(d);
    for (std::uint64_t mask = 0; mask < full; ++mask) {
      for (std::size_t i = 0; i < d; ++i) members[i] = static_cast<char>((mask >> i) & 1u);
      table[mask] = detail::mean_value(game, members);
    }
    res.evaluations = full;
    res.samples = full;
    // weight[s] = s! (d-s-1)! / d! = 1 / (d * C(d-1, s))
    std::vector<double> weight(d);
    double binom = 1.0;
    for (std::size_t s = 0; s < d; ++s) {
      weight[s] = 1.0 / (static_cast<double>(d) * binom);
      binom = binom * static_cast<double>(d - 1 - s) / static_cast<double>(s + 1);
    }
    for (std::size_t j = 0; j < d; ++j) {
      const std::uint64_t bit = std::uint64_t{1} << j;
      double acc = 0.0;
      for (std::uint64_t mask = 0; mask < full; ++mask) {
        if (mask & bit) continue;
        const auto s = static_cast<std::size_t>(std::popcount(mask));
        acc += weight[s] * (table[mask | bit] - table[mask]);
      }
      res.phi[j] = acc;
    }
    return res;
  }

  if (!opt.early_stop) throw TooManyPlayers(d, opt.max_exact_players);

  std::mt19937_64 rng(opt.seed);
  std::vector<char> members(d, 0);
  const double v_empty = detail::mean_value(game, members);
  std::fill(members.begin(), members.end(), 1);
  const double v_full = detail::mean_value(game, members);
  res.evaluations = 2;
  const double total = std::abs(v_full - v_empty);
  const double tol = *opt.early_stop * (total > 0.0 ? total : 1.0);

  std::vector<std::size_t> others;
  others.reserve(d - 1);
  std::uniform_int_distribution<std::size_t> size_dist(0, d - 1);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    std::deque<double> recent;
    std::size_t n = 0;
    while (n < opt.max_subsets_per_player) {
      others.clear();
      for (std::size_t i = 0; i < d; ++i)
        if (i != j) others.push_back(i);
      std::fill(members.begin(), members.end(), 0);
      detail::draw_subset(others, size_dist(rng), members, rng);
      const double without = detail::mean_value(game, members);
      members[j] = 1;
      const double with = detail::mean_value(game, members);
      res.evaluations += 2;
      ++n;
      mean += ((with - without) - mean) / static_cast<double>(n);
      recent.push_back(mean);
      if (recent.size() > opt.window) recent.pop_front();
      if (recent.size() == opt.window) {
        const auto [lo, hi] = std::minmax_element(recent.begin(), recent.end());
        if (*hi - *lo < tol) break;
      }
    }
    res.samples += n;
    res.phi[j] = mean;
  }
  return res;
}

/// Kernel-weighted least squares estimate. Coalitions are drawn with
/// probability proportional to the Shapley kernel
///   w(Q) = (d-1) / (C(d,|Q|) |Q| (d-|Q|)),
/// and phi solves min sum (v(empty) + sum_{i in Q} phi_i - v(Q))^2 subject to
/// sum phi = v(P) - v(empty), the two endpoint coalitions entering as equality
/// constraints.
template <CoalitionGame G>
ShapleyResult shapley_sampling(G& game, std::size_t num_subsets, std::uint64_t seed) {
  const std::size_t d = game.player_count();
  ShapleyResult res;
  res.phi.assign(d, 0.0);
  if (d == 0) return res;

  std::vector<char> members(d, 0);
  const double v_empty = detail::mean_value(game, members);
  std::fill(members.begin(), members.end(), 1);
  const double v_full = detail::mean_value(game, members);
  res.evaluations = 2;
  const double total = v_full - v_empty;
  if (d == 1) {
    res.phi[0] = total;
    return res;
  }
  if (num_subsets < d + 2)
    throw InputError("sampling needs at least players + 2 subsets");

  std::vector<double> size_weight(d - 1);
  for (std::size_t s = 1; s < d; ++s)
    size_weight[s - 1] = static_cast<double>(d - 1) / static_cast<double>(s * (d - s));

  std::unordered_map<std::uint64_t, double> memo;
  const bool memoize = d <= 64;
  std::vector<std::size_t> pool(d);

  for (int attempt = 0; attempt < 3; ++attempt) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(attempt) * 0x9E3779B97F4A7C15ULL);
    std::discrete_distribution<std::size_t> size_dist(size_weight.begin(), size_weight.end());
    Eigen::MatrixXd z(static_cast<Eigen::Index>(num_subsets), static_cast<Eigen::Index>(d));
    Eigen::VectorXd y(static_cast<Eigen::Index>(num_subsets));
    for (std::size_t row = 0; row < num_subsets; ++row) {
      std::fill(members.begin(), members.end(), 0);
      for (std::size_t i = 0; i < d; ++i) pool[i] = i;
      detail::draw_subset(pool, size_dist(rng) + 1, members, rng);
      double v;
      if (memoize) {
        std::uint64_t key = 0;
        for (std::size_t i = 0; i < d; ++i) key |= static_cast<std::uint64_t>(members[i]) << i;
        auto it = memo.find(key);
        if (it == memo.end()) {
          v = detail::mean_value(game, members);
          memo.emplace(key, v);
          ++res.evaluations;
        } else {
          v = it->second;
        }
      } else {
        v = detail::mean_value(game, members);
        ++res.evaluations;
      }
      for (std::size_t i = 0; i < d; ++i)
        z(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(i)) = members[i];
      y[static_cast<Eigen::Index>(row)] = v - v_empty;
    }
    res.samples += num_subsets;

    // Eliminate the last coordinate through the efficiency constraint.
    const auto last = static_cast<Eigen::Index>(d - 1);
    Eigen::MatrixXd reduced = z.leftCols(last).colwise() - z.col(last);
    Eigen::VectorXd rhs = y - z.col(last) * total;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(reduced);
    qr.setThreshold(1e-10);
    if (qr.rank() < last) continue;
    Eigen::VectorXd sol = qr.solve(rhs);
    double partial = 0.0;
    for (Eigen::Index i = 0; i < last; ++i) {
      res.phi[static_cast<std::size_t>(i)] = sol[i];
      partial += sol[i];
    }
    res.phi[d - 1] = total - partial;
    return res;
  }
  throw DegenerateSystem("sampled coalition design is rank deficient after 3 attempts");
}

/// Permutation estimate: for each of M draws, pick a reference r and a random
/// ordering, start from the full coalition and move players to the reference
/// side one at a time in that order; player j's marginal is the payoff just
/// before minus just after it is replaced. Costs M * (d + 1) evaluations.
template <CoalitionGame G>
ShapleyResult shapley_permutation(G& game, std::size_t num_permutations, std::uint64_t seed) {
  const std::size_t d = game.player_count();
  const std::size_t refs = game.reference_count();
  if (refs == 0) throw EmptyReferencePool();
  if (num_permutations == 0) throw InputError("permutation count must be positive");
  ShapleyResult res;
  res.phi.assign(d, 0.0);
  if (d == 0) return res;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> ref_dist(0, refs - 1);
  std::vector<std::size_t> order(d);
  std::vector<char> members(d);
  for (std::size_t m = 0; m < num_permutations; ++m) {
    const std::size_t r = ref_dist(rng);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    for (std::size_t i = d - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(order[i], order[pick(rng)]);
    }
    std::fill(members.begin(), members.end(), 1);
    double prev = game.value(members, r);
    for (std::size_t pos = 0; pos < d; ++pos) {
      const std::size_t j = order[pos];
      members[j] = 0;
      const double cur = game.value(members, r);
      res.phi[j] += prev - cur;
      prev = cur;
    }
    res.evaluations += d + 1;
  }
  res.samples = num_permutations;
  for (double& p : res.phi) p /= static_cast<double>(num_permutations);
  return res;
}

}  // namespace bigen
