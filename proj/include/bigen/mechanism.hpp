#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "bigen/dag.hpp"
#include "bigen/errors.hpp"

namespace bigen {

/// Fixed precisions of the noisy mechanism: edge noise xi ~ N(0, 1/alpha),
/// node noise eps ~ N(0, 1/beta).
struct Hyperparams {
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0))
      throw InputError("hyperparameters alpha and beta must be positive");
  }
  double edge_std() const { return 1.0 / std::sqrt(alpha); }
  double node_std() const { return 1.0 / std::sqrt(beta); }

  bool operator==(const Hyperparams&) const = default;
};

/// Distribution descriptor for generated noise. Only `sample` consumes it;
/// fitting always uses the Gaussian machinery.
struct NoiseDist {
  enum class Kind { gaussian, gamma, uniform };

  Kind kind = Kind::gaussian;
  double first = 0.0;   // gaussian mean | gamma shape | uniform low
  double second = 1.0;  // gaussian std  | gamma scale | uniform high

  static NoiseDist gaussian(double mean, double sd) { return {Kind::gaussian, mean, sd}; }
  static NoiseDist gamma(double shape, double scale) { return {Kind::gamma, shape, scale}; }
  static NoiseDist uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }

  template <class Rng>
  double draw(Rng& rng) const {
    switch (kind) {
      case Kind::gaussian:
        if (second == 0.0) return first;
        return std::normal_distribution<double>(first, second)(rng);
      case Kind::gamma:
        return std::gamma_distribution<double>(first, second)(rng);
      case Kind::uniform:
        return std::uniform_real_distribution<double>(first, second)(rng);
    }
    return 0.0;
  }

  double stddev() const {
    switch (kind) {
      case Kind::gaussian: return second;
      case Kind::gamma: return std::sqrt(first) * second;
      case Kind::uniform: return (second - first) / std::sqrt(12.0);
    }
    return 0.0;
  }

  bool operator==(const NoiseDist&) const = default;
};

/// Marginal mean and standard deviation of a node under normal operation.
struct MarginalStats {
  double mean = 0.0;
  double std = 1.0;

  bool operator==(const MarginalStats&) const = default;
};

struct GaussianPrior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;
};

/// Posterior over one node's incoming weight vector. `posterior_precision`
/// is a precision matrix H; the covariance is its inverse.
struct NodeMechanism {
  NodeId node = 0;
  Eigen::VectorXd prior_mean;
  Eigen::VectorXd posterior_mean;
  Eigen::MatrixXd posterior_precision;
  NoiseDist node_noise;
  bool ridge_applied = false;
};

/// Column-per-node observations; rows are synchronized samples.
struct Dataset {
  Eigen::MatrixXd values;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

class MechanismModel {
 public:
  Dag dag;
  std::vector<NodeMechanism> nodes;
  Hyperparams hyper;
  std::vector<MarginalStats> marginals;  // empty when fitted without rows

  std::size_t size() const { return dag.size(); }

  const NodeMechanism& at(NodeId j) const {
    if (j >= nodes.size()) throw UnknownNode(j);
    return nodes[j];
  }

  bool has_marginals() const { return marginals.size() == dag.size(); }

  const MarginalStats& marginal(NodeId j) const {
    if (j >= dag.size()) throw UnknownNode(j);
    if (!has_marginals()) throw InputError("model has no marginal statistics");
    return marginals[j];
  }

  std::size_t ridge_events() const {
    std::size_t n = 0;
    for (const auto& m : nodes) n += m.ridge_applied ? 1 : 0;
    return n;
  }
};

namespace detail {

inline Eigen::MatrixXd gather_parents(const Dataset& data, std::span<const NodeId> parents) {
  Eigen::MatrixXd out(data.values.rows(), static_cast<Eigen::Index>(parents.size()));
  for (std::size_t k = 0; k < parents.size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) = data.values.col(static_cast<Eigen::Index>(parents[k]));
  return out;
}

inline void check_dataset(const Dag& dag, const Dataset& data) {
  if (data.cols() != dag.size())
    throw InputError("column count " + std::to_string(data.cols()) +
                     " does not match graph node count " + std::to_string(dag.size()));
  if (!data.values.allFinite()) throw InputError("dataset contains non-finite values");
}

}  // namespace detail

/// Conjugate Gaussian update of one weight vector:
///   H  = P0 + beta * Xpa' Xpa
///   mu = H^-1 (P0 mu0 + beta * Xpa' x)
/// With P0 = alpha*I this is the textbook Bayesian linear-regression posterior.
inline NodeMechanism conjugate_update(NodeId node, const Eigen::MatrixXd& xpa,
                                      const Eigen::VectorXd& x, const GaussianPrior& prior,
                                      double beta) {
  const Eigen::Index dim = prior.mean.size();
  NodeMechanism out;
  out.node = node;
  out.prior_mean = prior.mean;
  if (dim == 0) {
    out.posterior_mean = Eigen::VectorXd(0);
    out.posterior_precision = Eigen::MatrixXd(0, 0);
    return out;
  }
  if (xpa.rows() == 0) {
    out.posterior_mean = prior.mean;
    out.posterior_precision = prior.precision;
    return out;
  }
  Eigen::MatrixXd h = prior.precision;
  if (xpa.rows() > 0) {
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(dim, dim);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(xpa.transpose(), beta);
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    h += gram;
  }
  Eigen::VectorXd rhs = prior.precision * prior.mean;
  if (xpa.rows() > 0) rhs += beta * (xpa.transpose() * x);

  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) {
    const double ridge = 1e-9 * h.trace() / static_cast<double>(dim);
    h.diagonal().array() += ridge;
    llt.compute(h);
    if (!(ridge > 0.0) || llt.info() != Eigen::Success) throw SingularPrecision(node);
    out.ridge_applied = true;
  }
  out.posterior_mean = llt.solve(rhs);
  out.posterior_precision = std::move(h);
  if (!out.posterior_mean.allFinite()) throw SingularPrecision(node);
  return out;
}

inline std::vector<MarginalStats> marginal_stats(const Dag& dag, const Dataset& data) {
  std::vector<MarginalStats> out(data.cols());
  const double n = static_cast<double>(data.rows());
  for (std::size_t j = 0; j < data.cols(); ++j) {
    const auto col = data.values.col(static_cast<Eigen::Index>(j));
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / n;
    if (!(var > 0.0))
      throw InputError("training column '" + dag.name(j) + "' is constant");
    out[j] = {mean, std::sqrt(var)};
  }
  return out;
}

/// Fits every node's weight posterior. When `prior` is given it replaces the
/// default N(0, alpha^-1 I) per node. Marginal statistics are computed when
/// at least two rows are available.
inline MechanismModel fit_posterior(const Dag& dag, const Dataset& data, const Hyperparams& hyper,
                                    const std::optional<std::vector<GaussianPrior>>& prior = {}) {
  hyper.validate();
  detail::check_dataset(dag, data);
  if (prior && prior->size() != dag.size())
    throw InputError("prior must supply one entry per node");

  MechanismModel model;
  model.dag = dag;
  model.hyper = hyper;
  model.nodes.reserve(dag.size());
  for (NodeId j = 0; j < dag.size(); ++j) {
    const auto parents = dag.parents(j);
    const auto dim = static_cast<Eigen::Index>(parents.size());
    GaussianPrior p;
    if (prior) {
      p = (*prior)[j];
      if (p.mean.size() != dim || p.precision.rows() != dim || p.precision.cols() != dim)
        throw InputError("prior dimension mismatch at node " + std::to_string(j));
    } else {
      p.mean = Eigen::VectorXd::Zero(dim);
      p.precision = hyper.alpha * Eigen::MatrixXd::Identity(dim, dim);
    }
    auto mech = conjugate_update(j, detail::gather_parents(data, parents),
                                 data.values.col(static_cast<Eigen::Index>(j)), p, hyper.beta);
    mech.node_noise = NoiseDist::gaussian(0.0, hyper.node_std());
    model.nodes.push_back(std::move(mech));
  }
  if (data.rows() >= 2) model.marginals = marginal_stats(dag, data);
  return model;
}

/// How the trained posterior is carried into a refit on new evidence.
enum class PriorCarry {
  full_precision,  // exact sequential conjugate update
  fresh_alpha,     // trained mean with precision alpha*I
};

/// Refits all weight posteriors on `batch` using the current posterior as the
/// prior. Marginal statistics and noise descriptors are left untouched.
inline MechanismModel update_posterior(const MechanismModel& model, const Dataset& batch,
                                       PriorCarry carry = PriorCarry::full_precision) {
  detail::check_dataset(model.dag, batch);
  MechanismModel out = model;
  for (NodeId j = 0; j < model.size(); ++j) {
    const auto& cur = model.nodes[j];
    const auto dim = cur.posterior_mean.size();
    GaussianPrior p{cur.posterior_mean,
                    carry == PriorCarry::full_precision
                        ? cur.posterior_precision
                        : Eigen::MatrixXd(model.hyper.alpha * Eigen::MatrixXd::Identity(dim, dim))};
    auto mech = conjugate_update(j, detail::gather_parents(batch, model.dag.parents(j)),
                                 batch.values.col(static_cast<Eigen::Index>(j)), p,
                                 model.hyper.beta);
    mech.node_noise = cur.node_noise;
    out.nodes[j] = std::move(mech);
  }
  return out;
}

/// Per-node incoming weights; rows follow the node's parent-list order.
using WeightTable = std::vector<Eigen::VectorXd>;

/// MAP weights. The posterior is Gaussian, so its mode is its mean.
inline WeightTable map_weights(const MechanismModel& model) {
  WeightTable w;
  w.reserve(model.size());
  for (const auto& m : model.nodes) w.push_back(m.posterior_mean);
  return w;
}

/// Model whose posterior means are the given generating weights; used to
/// drive `sample` from known parameters.
inline MechanismModel make_generative_model(const Dag& dag, const WeightTable& weights,
                                            const Hyperparams& hyper,
                                            std::vector<NoiseDist> node_noise = {}) {
  hyper.validate();
  if (weights.size() != dag.size()) throw InputError("weight table size mismatch");
  if (!node_noise.empty() && node_noise.size() != dag.size())
    throw InputError("node noise descriptor count mismatch");
  MechanismModel model;
  model.dag = dag;
  model.hyper = hyper;
  for (NodeId j = 0; j < dag.size(); ++j) {
    const auto dim = static_cast<Eigen::Index>(dag.parents(j).size());
    if (weights[j].size() != dim) throw InputError("weight vector length mismatch");
    NodeMechanism m;
    m.node = j;
    m.prior_mean = Eigen::VectorXd::Zero(dim);
    m.posterior_mean = weights[j];
    m.posterior_precision = std::isfinite(hyper.alpha)
                                ? Eigen::MatrixXd(hyper.alpha * Eigen::MatrixXd::Identity(dim, dim))
                                : Eigen::MatrixXd::Identity(dim, dim);
    m.node_noise = node_noise.empty() ? NoiseDist::gaussian(0.0, hyper.node_std()) : node_noise[j];
    model.nodes.push_back(std::move(m));
  }
  return model;
}

enum class SampleMode {
  mean_weights,                 // W = mu on every row
  resample_edge_noise_per_row,  // W = mu + xi, xi ~ N(0, 1/alpha) per row
};

/// Per-coordinate replacements of the generating noise distributions.
/// `edge` is indexed by global edge index.
struct NoiseInjection {
  std::vector<std::optional<NoiseDist>> node;
  std::vector<std::optional<NoiseDist>> edge;
};

struct SampleTrace {
  Dataset data;
  Eigen::MatrixXd node_noise;  // rows x nodes
  Eigen::MatrixXd edge_noise;  // rows x edges
};

/// Generates rows root-to-leaf:
///   xi ~ N(0, 1/alpha), W = mu + xi, eps ~ node_noise, X_j = W' X_pa + eps.
/// Draw order is fixed, so the output is a pure function of the rng state.
template <class Rng>
SampleTrace sample_traced(const MechanismModel& model, std::size_t rows, Rng& rng,
                          SampleMode mode, const NoiseInjection& inject = {}) {
  const Dag& dag = model.dag;
  const auto n = static_cast<Eigen::Index>(dag.size());
  const auto e = static_cast<Eigen::Index>(dag.edge_count());
  const auto r = static_cast<Eigen::Index>(rows);
  SampleTrace t{Dataset{Eigen::MatrixXd::Zero(r, n)}, Eigen::MatrixXd::Zero(r, n),
                Eigen::MatrixXd::Zero(r, e)};
  const NoiseDist edge_dist = NoiseDist::gaussian(0.0, model.hyper.edge_std());
  const bool per_row = mode == SampleMode::resample_edge_noise_per_row;

  for (Eigen::Index row = 0; row < r; ++row) {
    for (NodeId j : dag.topological_order()) {
      const auto parents = dag.parents(j);
      const auto& mu = model.nodes[j].posterior_mean;
      const std::size_t off = dag.edge_offset(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < parents.size(); ++k) {
        const std::size_t ei = off + k;
        double xi = 0.0;
        if (ei < inject.edge.size() && inject.edge[ei])
          xi = inject.edge[ei]->draw(rng);
        else if (per_row)
          xi = edge_dist.draw(rng);
        t.edge_noise(row, static_cast<Eigen::Index>(ei)) = xi;
        acc += (mu[static_cast<Eigen::Index>(k)] + xi) *
               t.data.values(row, static_cast<Eigen::Index>(parents[k]));
      }
      const double eps = (j < inject.node.size() && inject.node[j])
                             ? inject.node[j]->draw(rng)
                             : model.nodes[j].node_noise.draw(rng);
      t.node_noise(row, static_cast<Eigen::Index>(j)) = eps;
      t.data.values(row, static_cast<Eigen::Index>(j)) = acc + eps;
    }
  }
  return t;
}

inline Dataset sample(const MechanismModel& model, std::size_t rows, std::uint64_t seed,
                      SampleMode mode = SampleMode::resample_edge_noise_per_row) {
  std::mt19937_64 rng(seed);
  return sample_traced(model, rows, rng, mode).data;
}

}  // namespace bigen
