#pragma once

#include <compare>
#include <optional>
#include <string>
#include <vector>

#include "kellynet/model.hpp"

namespace kellynet {

class JsonWriter;

/// (type, stage) label of one customer in a node's ordered queue.
struct CustomerTag {
  int type = 0;
  int stage = 0;

  friend auto operator<=>(const CustomerTag&, const CustomerTag&) = default;
};

/// Full chain state: per node, the ordered sequence of customer tags.
/// Positions are 1-based in every accessor and operation.
struct DetailedState {
  std::vector<std::vector<CustomerTag>> queues;  // index node-1

  int node_count() const { return static_cast<int>(queues.size()); }
  int length(int node) const { return static_cast<int>(queues.at(static_cast<std::size_t>(node) - 1).size()); }
  const CustomerTag& tag(int node, int position) const {
    return queues.at(static_cast<std::size_t>(node) - 1).at(static_cast<std::size_t>(position) - 1);
  }
  int total_customers() const;

  friend auto operator<=>(const DetailedState&, const DetailedState&) = default;
};

DetailedState empty_state(const OpenNetworkModel& model);

/// First consistency problem of C against the model, or nullopt when every
/// tag sits at the node its route prescribes.
std::optional<std::string> consistency_error(const OpenNetworkModel& model, const DetailedState& C);
bool is_consistent(const OpenNetworkModel& model, const DetailedState& C);

enum class TransitionKind { TRANSFER, DEPART, ARRIVE };

const char* to_string(TransitionKind kind);

/// One outgoing transition with its (merged) rate and the resulting state.
/// Source/target indices describe a representative fine-grained move when
/// several moves lead to the same result state.
struct TransitionEvent {
  TransitionKind kind = TransitionKind::TRANSFER;
  int source_node = 0;  // TRANSFER, DEPART
  int source_pos = 0;
  int target_node = 0;  // TRANSFER, ARRIVE
  int target_pos = 0;
  int type_id = 0;  // ARRIVE
  double rate = 0.0;
  DetailedState result;
};

/// Customer at (j,l) advances one stage and takes position r at its next
/// node. Removal happens before insertion, so feedback (next node == j)
/// admits r in [1, n_j].
DetailedState apply_transfer(const OpenNetworkModel& model, const DetailedState& C, int j, int l, int r);

/// Customer at (j,l), already at its final stage, leaves the network.
DetailedState apply_depart(const OpenNetworkModel& model, const DetailedState& C, int j, int l);

/// A type-i customer enters at position r of its route's first node.
DetailedState apply_arrive(const OpenNetworkModel& model, const DetailedState& C, int i, int r);

/// All positive-rate transitions out of C. Moves that lead to the same result
/// state are merged with their rates summed.
std::vector<TransitionEvent> enumerate_transitions(const OpenNetworkModel& model, const DetailedState& C);

/// Total transition rate out of C; equals the sum over enumerate_transitions
/// and, by row-normalization of the insertion rules, also
/// sum_j sum_l mu_j(l) gamma_j(n_j,l) + sum_i nu(i).
double total_outflow(const OpenNetworkModel& model, const DetailedState& C);

struct Predecessor {
  DetailedState state;
  TransitionEvent event;  // event.result equals the queried state
};

/// Every state C' with a positive-rate transition into C, together with that
/// (merged) transition. Candidates that exceed a node's sim_capacity are
/// excluded so truncated verifier windows stay closed.
std::vector<Predecessor> predecessors(const OpenNetworkModel& model, const DetailedState& C);

/// Tags that can legally sit at `node`, sorted.
std::vector<CustomerTag> node_tag_alphabet(const OpenNetworkModel& model, int node);

/// All consistent states with at most `max_total` customers. `node_limit`
/// (1-based by node, entries < 0 meaning unlimited) additionally bounds each
/// queue; empty means each queue is bounded by its sim_capacity if set.
std::vector<DetailedState> enumerate_detailed_states(const OpenNetworkModel& model, int max_total,
                                                     std::vector<int> node_limit = {});

void write_state_json(JsonWriter& w, const DetailedState& C);

}  // namespace kellynet
