#pragma once

// Small fixed datasets with known optima, shared by the unit tests and the
// built-in self-test.

#include <cstdint>

#include "repr.hpp"

namespace csf {

/// Transitions between neighbouring nodes of a path graph with one-hot
/// observations, in both directions. Rightward steps carry skills drawn
/// uniformly from the right half of the unit circle, leftward steps from the
/// left half, so E[z | step] = (+-2/pi, 0).
ReprBatch make_line_graph_data(std::size_t nodes, std::size_t per_edge, Rng& rng);

struct LineGraphOptions {
  std::size_t steps = 3000;
  double lr = 1e-2;
  /// Learning rate decays geometrically to this value over the run.
  double lr_final = 1e-4;
  double xi = 5.0;
  std::size_t negatives = 256;
  DualVariable dual{1.0, 1e-2, 1e-3};
};

struct LineGraphFit {
  ReprNet net;
  double e_sq_norm = 0.0;
  double positive = 0.0;
  double lambda = 0.0;
};

/// Full-batch Adam on a tabular phi (a bias-free-in-effect linear map of the
/// one-hot input) under either objective.
LineGraphFit fit_line_graph(ReprObjective objective, const ReprBatch& data, std::uint64_t seed,
                            const LineGraphOptions& options = {});

}  // namespace csf

#include "envs.hpp"

namespace csf {

/// Successor-feature learning on the tabular chain: psi is an MLP over
/// [one-hot s, a in {-1, +1}, z], z fixed, trained by TD with an EMA target
/// on full batches of all (state, action) pairs.
struct ChainSfProblem {
  std::size_t states = 5;
  double gamma = 0.9;
  ChainPolicy policy;
  ChainFeatures features;  // dphi of each transition under phi(k) = (k / (n-1), k mod 2)
  std::vector<double> z{0.6, 0.8};
};

ChainSfProblem make_chain_sf_problem(std::size_t states, double gamma, std::uint64_t seed);

struct ChainSfOptions {
  std::size_t updates = 20000;
  std::size_t hidden = 64;
  double lr = 1e-3;
  double lr_final = 1e-5;
  double tau = 5e-3;
};

ParamSet train_chain_sf(const ChainSfProblem& problem, std::uint64_t seed, const ChainSfOptions& options = {});

/// psi evaluated on every (state, action) pair of the chain.
ChainFeatures chain_successor_table(const ParamSet& psi, const ChainSfProblem& problem);

}  // namespace csf
