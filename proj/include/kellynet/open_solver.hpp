#pragma once

#include <cstdint>
#include <ostream>
#include <tuple>
#include <vector>

#include "kellynet/chain.hpp"
#include "kellynet/model.hpp"

namespace kellynet {

/// Per-(node,type,stage) visit rates and per-node total loads. A type whose
/// route touches node j at m distinct stages contributes m times its arrival
/// rate to b_j.
struct VisitRates {
  std::vector<double> b;  // per node
  // Per node: (type, stage, rate) for every positive entry, sorted.
  std::vector<std::vector<std::tuple<int, int, double>>> support;

  double alpha(int node, int type, int stage) const;
};

VisitRates visit_rates(const OpenNetworkModel& model);

/// Normalizing constant of one node's queue-length series. The series has
/// finitely many table-dependent terms plus a geometric tail, summed in
/// closed form, so tail_bound is identically zero.
struct NodeNormalizer {
  double B = 1.0;
  int truncation_n = 0;   // terms taken from the rate table before the tail
  double tail_bound = 0.0;
};

/// Throws InstabilityError when the load reaches the beyond-table rate.
NodeNormalizer node_normalizer(double b, const ServicePolicy& policy);

struct QueueLengthPmf {
  std::vector<double> p;  // n = 0..n_max
  double tail = 0.0;      // exact mass beyond n_max
};

QueueLengthPmf queue_length_pmf(const OpenNetworkModel& model, int node, int n_max);

/// Probability that a customer at `node` is of `type` and at `stage`.
/// Throws std::domain_error when the node is never visited (b == 0).
double composition_probability(const VisitRates& rates, int node, int type, int stage);

/// Precomputed analytic context for repeated state-probability evaluation.
struct OpenEquilibrium {
  VisitRates rates;
  std::vector<NodeNormalizer> normalizers;  // per node
};

/// Throws InstabilityError listing every unstable node.
OpenEquilibrium make_open_equilibrium(const OpenNetworkModel& model);

double state_probability(const OpenNetworkModel& model, const OpenEquilibrium& eq,
                         const DetailedState& C);

/// Equilibrium probability density of a detailed state (product over nodes).
double detailed_state_probability(const OpenNetworkModel& model, const DetailedState& C);

struct EquilibriumReport {
  struct Node {
    int node = 0;
    double b = 0.0;
    double B = 1.0;
    bool stable = true;
    std::vector<double> pmf;  // n = 0..n_max
    double pmf_tail = 0.0;
    std::vector<std::tuple<int, int, double>> composition;  // (type, stage, probability)
  };

  std::uint64_t model_hash = 0;
  int n_max = 0;
  std::vector<Node> nodes;
};

EquilibriumReport build_equilibrium_report(const OpenNetworkModel& model, int n_max);

void write_equilibrium_json(const EquilibriumReport& report, std::ostream& os);
void write_equilibrium_csv(const EquilibriumReport& report, std::ostream& os);

}  // namespace kellynet
