#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kellynet {

enum class PolicyKind { FCFS, LCFS_PR, PS, EXPLICIT };

const char* to_string(PolicyKind kind);
std::optional<PolicyKind> policy_kind_from_string(std::string_view name);

/// Fixed node itinerary of one customer type. Stages are 1-based; repeated
/// visits to the same node are allowed.
struct RouteSpec {
  int type_id = 0;
  std::vector<int> nodes;

  int length() const { return static_cast<int>(nodes.size()); }
  int node_at(int stage) const { return nodes.at(static_cast<std::size_t>(stage) - 1); }
};

/// Per-node service discipline: position-indexed service rates plus the
/// service-velocity and insertion rules. Builtin kinds derive gamma/delta
/// from formulas; EXPLICIT carries them as triangular row tables.
struct ServicePolicy {
  PolicyKind kind = PolicyKind::FCFS;
  std::vector<double> mu_table;  // rates for positions 1..table size
  double mu_default = 1.0;       // rate for positions beyond the table
  std::vector<std::vector<double>> gamma_rows;  // EXPLICIT only; row n has n entries
  std::vector<std::vector<double>> delta_rows;  // EXPLICIT only

  double mu(int position) const;
  /// Fraction of service effort directed to `position` when `n` customers are
  /// present.
  double gamma(int n, int position) const;
  /// Probability an arriving customer takes `position` in a queue reaching
  /// length `n`.
  double delta(int n, int position) const;
};

/// Instantiates FCFS, LCFS_PR or PS. EXPLICIT policies must be built from
/// their row tables directly.
ServicePolicy builtin_policy(PolicyKind kind, std::vector<double> mu_table = {},
                             double mu_default = 1.0);

struct OpenNetworkModel {
  int node_count = 0;
  int type_count = 0;
  std::vector<RouteSpec> routes;        // one per type
  std::vector<double> nu;               // arrival rate per type id
  std::vector<ServicePolicy> policies;  // per node id
  std::vector<int> sim_capacity;        // per node id, 0 = unbounded; empty = all unbounded

  const RouteSpec& route(int type_id) const;
  const ServicePolicy& policy(int node) const { return policies.at(static_cast<std::size_t>(node) - 1); }
  double arrival_rate(int type_id) const { return nu.at(static_cast<std::size_t>(type_id) - 1); }
  int capacity(int node) const {
    return sim_capacity.empty() ? 0 : sim_capacity.at(static_cast<std::size_t>(node) - 1);
  }
};

/// One class-switching probability: a type `from_type` customer leaving
/// `from_node` reaches `to_node` as a `to_type` customer with probability p.
struct SwitchEntry {
  int from_node = 0;
  int from_type = 0;
  int to_node = 0;
  int to_type = 0;
  double p = 0.0;
};

using NodeTypePair = std::pair<int, int>;
using Chain = std::vector<NodeTypePair>;

struct ClosedNetworkModel {
  int node_count = 0;
  int type_count = 0;
  std::vector<double> mu;  // per node, type-independent
  std::vector<SwitchEntry> switches;
  std::vector<Chain> chains;        // canonical order; may be empty (derived on demand)
  std::map<int, int> populations;   // chain id (1-based) -> customer count

  double service_rate(int node) const { return mu.at(static_cast<std::size_t>(node) - 1); }
  int population(int chain_id) const;
  int total_population() const;
};

/// Connected components of the (node,type) graph induced by the switch
/// entries, canonicalized: pairs sorted within each chain, chains sorted by
/// first pair. Chain ids are positions + 1.
std::vector<Chain> derive_chains(const std::vector<SwitchEntry>& switches);

/// model.chains when declared, otherwise derived from the switch entries.
std::vector<Chain> effective_chains(const ClosedNetworkModel& model);

struct Violation {
  std::string path;
  std::string message;

  std::string format() const { return path + ": " + message; }
};

std::vector<Violation> validate_open(const OpenNetworkModel& model);
std::vector<Violation> validate_closed(const ClosedNetworkModel& model);

/// Canonical text form of a model, used for identity hashing.
std::string model_identity(const OpenNetworkModel& model);
std::string model_identity(const ClosedNetworkModel& model);

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t model_hash(const OpenNetworkModel& model);
std::uint64_t model_hash(const ClosedNetworkModel& model);

/// "fnv1a64:<16 hex digits>", the form hashes take in report files.
std::string hash_hex(std::uint64_t h);

}  // namespace kellynet
