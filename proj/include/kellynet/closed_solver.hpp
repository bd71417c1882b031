#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "kellynet/model.hpp"

namespace kellynet {

/// Per-chain fixed points of the class-switching routing, each normalized to
/// sum 1 over its chain. Pairs follow the canonical chain order.
struct TrafficSolution {
  std::vector<NodeTypePair> pairs;
  std::vector<double> alpha;                           // aligned with pairs
  std::vector<std::pair<std::size_t, std::size_t>> chain_spans;  // [begin,end) per chain
  double residual = 0.0;  // max absolute defect of the balance relations

  double alpha_at(int node, int type) const;
};

/// Throws ReducibleChainError when a chain's restricted routing is not
/// irreducible.
TrafficSolution solve_traffic(const ClosedNetworkModel& model);

/// Per-(node,type) customer counts; dense J x I matrix flattened by node.
struct PopulationState {
  int type_count = 0;
  std::vector<int> counts;

  int count(int node, int type) const {
    return counts[static_cast<std::size_t>(node - 1) * static_cast<std::size_t>(type_count) +
                  static_cast<std::size_t>(type - 1)];
  }
  int node_total(int node) const;
  int node_count() const { return type_count == 0 ? 0 : static_cast<int>(counts.size()) / type_count; }

  friend auto operator<=>(const PopulationState&, const PopulationState&) = default;
};

/// Number of feasible population states: product over chains of the multiset
/// coefficients. Saturates at uint64 max.
std::uint64_t population_state_count(const ClosedNetworkModel& model);

/// Visits every feasible state exactly once, in a deterministic order (chain
/// by chain, first pair's count descending).
void for_each_population_state(const ClosedNetworkModel& model,
                               const std::function<void(const PopulationState&)>& fn);

std::vector<PopulationState> enumerate_states(const ClosedNetworkModel& model);

/// Product-form weight of one state: prod_j n_j! prod_i (alpha_j(i)/mu_j)^{n_j(i)} / n_j(i)!.
double unnormalized_weight(const ClosedNetworkModel& model, const TrafficSolution& traffic,
                           const PopulationState& state);

struct StationaryDistribution {
  std::vector<PopulationState> states;  // enumeration order
  std::vector<double> p;
  double B_N = 1.0;
  TrafficSolution traffic;
  std::uint64_t model_hash = 0;
};

constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

/// Throws StateSpaceTooLargeError above the cap, ReducibleChainError from the
/// traffic solve.
StationaryDistribution stationary_distribution(const ClosedNetworkModel& model,
                                               std::uint64_t cap = kDefaultEnumerationCap);

/// Same, with externally supplied visit rates (any per-chain scaling of the
/// traffic solution yields the same distribution).
StationaryDistribution stationary_with_traffic(const ClosedNetworkModel& model,
                                               const TrafficSolution& traffic,
                                               std::uint64_t cap = kDefaultEnumerationCap);

/// P[n_j = n] for n = 0..N.
std::vector<double> marginal_node_pmf(const ClosedNetworkModel& model, int node,
                                      std::uint64_t cap = kDefaultEnumerationCap);

std::vector<std::vector<double>> marginals_of(const StationaryDistribution& dist,
                                              const ClosedNetworkModel& model);

void write_stationary_json(const StationaryDistribution& dist, const ClosedNetworkModel& model,
                           std::ostream& os);
void write_stationary_csv(const StationaryDistribution& dist, const ClosedNetworkModel& model,
                          std::ostream& os);

}  // namespace kellynet
