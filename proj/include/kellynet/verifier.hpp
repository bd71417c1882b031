#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "kellynet/chain.hpp"
#include "kellynet/closed_solver.hpp"
#include "kellynet/model.hpp"

namespace kellynet {

struct BalanceReport {
  std::size_t states_checked = 0;
  double max_relative_residual = 0.0;
  DetailedState worst_state;
  std::vector<double> residuals;  // per sampled state when detail requested
};

/// States with at most max_total customers whose queues stay margin below
/// each node's sim_capacity, so every predecessor of a sampled state exists
/// inside the capacity window.
std::vector<DetailedState> interior_states(const OpenNetworkModel& model, int max_total, int margin);

/// For each sampled state C, compares probability inflow against outflow
/// under the equilibrium density and reports the relative defect
/// |inflow - outflow| / outflow. Samples outside the interior window are an
/// error; instability propagates.
BalanceReport balance_check(const OpenNetworkModel& model,
                            const std::vector<DetailedState>& state_sample, int interior_margin,
                            bool keep_detail = false);

struct OracleResult {
  std::size_t ordered_state_count = 0;
  double stationary_residual_inf = 0.0;  // max norm of the balance defect of the solved vector
  std::vector<PopulationState> states;   // population-level aggregation, solver order
  std::vector<double> aggregated;
  double max_abs_diff = 0.0;  // against the product-form stationary distribution
};

struct OracleOptions {
  std::uint64_t cap = 50'000;        // ordered-state count limit
  std::size_t dense_threshold = 2'000;  // direct dense solve at or below this size
  double iterative_tol = 1e-13;
};

/// Builds the full generator of the ordered FCFS chain, solves for its
/// stationary vector, aggregates orderings to population states and compares
/// against the product form.
OracleResult closed_oracle(const ClosedNetworkModel& model, const OracleOptions& options = {});

struct IndependenceReport {
  int n_bound = 0;
  double max_abs_error = 0.0;
  struct Pair {
    int node_a = 0;
    int node_b = 0;
    double max_abs_error = 0.0;
  };
  std::vector<Pair> pairs;
};

/// Joint queue-length law of (node_a, node_b), built by summing the detailed
/// product form over tag sequences, against the product of the per-node pmfs.
double independence_check(const OpenNetworkModel& model, int node_a, int node_b, int n_bound);

IndependenceReport independence_check_all(const OpenNetworkModel& model, int n_bound);

void write_balance_json(const BalanceReport& balance, const IndependenceReport& independence,
                        std::uint64_t model_hash_value, double balance_threshold,
                        double independence_threshold, std::ostream& os);
void write_oracle_json(const OracleResult& oracle, const ClosedNetworkModel& model,
                       double threshold, std::ostream& os);

}  // namespace kellynet
