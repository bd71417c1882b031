#include "kellynet/chain.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "kellynet/json_writer.hpp"

namespace kellynet {

int DetailedState::total_customers() const {
  int total = 0;
  for (const auto& q : queues) total += static_cast<int>(q.size());
  return total;
}

DetailedState empty_state(const OpenNetworkModel& model) {
  DetailedState C;
  C.queues.resize(static_cast<std::size_t>(model.node_count));
  return C;
}

std::optional<std::string> consistency_error(const OpenNetworkModel& m, const DetailedState& C) {
  if (C.node_count() != m.node_count)
    return "state has " + std::to_string(C.node_count()) + " nodes; model has " +
           std::to_string(m.node_count);
  for (int j = 1; j <= m.node_count; ++j) {
    for (int l = 1; l <= C.length(j); ++l) {
      const CustomerTag& t = C.tag(j, l);
      if (t.type < 1 || t.type > m.type_count)
        return "node " + std::to_string(j) + " position " + std::to_string(l) + ": type " +
               std::to_string(t.type) + " out of range";
      const RouteSpec& r = m.route(t.type);
      if (t.stage < 1 || t.stage > r.length())
        return "node " + std::to_string(j) + " position " + std::to_string(l) + ": stage " +
               std::to_string(t.stage) + " out of range for type " + std::to_string(t.type);
      if (r.node_at(t.stage) != j)
        return "node " + std::to_string(j) + " position " + std::to_string(l) + ": type " +
               std::to_string(t.type) + " stage " + std::to_string(t.stage) + " belongs at node " +
               std::to_string(r.node_at(t.stage));
    }
  }
  return std::nullopt;
}

bool is_consistent(const OpenNetworkModel& m, const DetailedState& C) {
  return !consistency_error(m, C).has_value();
}

const char* to_string(TransitionKind kind) {
  switch (kind) {
    case TransitionKind::TRANSFER: return "transfer";
    case TransitionKind::DEPART: return "depart";
    case TransitionKind::ARRIVE: return "arrive";
  }
  return "?";
}

namespace {

std::vector<CustomerTag>& queue_of(DetailedState& C, int node) {
  return C.queues[static_cast<std::size_t>(node) - 1];
}

void insert_tag(DetailedState& C, int node, int position, CustomerTag tag) {
  auto& q = queue_of(C, node);
  q.insert(q.begin() + (position - 1), tag);
}

void erase_tag(DetailedState& C, int node, int position) {
  auto& q = queue_of(C, node);
  q.erase(q.begin() + (position - 1));
}

void check_node(const OpenNetworkModel& m, int j, const char* what) {
  if (j < 1 || j > m.node_count)
    throw std::out_of_range(std::string(what) + " node " + std::to_string(j) + " out of range");
}

}  // namespace

DetailedState apply_transfer(const OpenNetworkModel& m, const DetailedState& C, int j, int l, int r) {
  check_node(m, j, "source");
  if (l < 1 || l > C.length(j))
    throw std::out_of_range("position " + std::to_string(l) + " out of range at node " +
                            std::to_string(j));
  CustomerTag tag = C.tag(j, l);
  const RouteSpec& route = m.route(tag.type);
  if (tag.stage >= route.length())
    throw std::invalid_argument("customer at node " + std::to_string(j) + " position " +
                                std::to_string(l) + " is at its final stage; use apply_depart");
  int k = route.node_at(tag.stage + 1);
  int max_r = (k == j) ? C.length(j) : C.length(k) + 1;
  if (r < 1 || r > max_r)
    throw std::out_of_range("insertion position " + std::to_string(r) + " out of range at node " +
                            std::to_string(k));
  DetailedState next = C;
  erase_tag(next, j, l);
  insert_tag(next, k, r, {tag.type, tag.stage + 1});
  return next;
}

DetailedState apply_depart(const OpenNetworkModel& m, const DetailedState& C, int j, int l) {
  check_node(m, j, "source");
  if (l < 1 || l > C.length(j))
    throw std::out_of_range("position " + std::to_string(l) + " out of range at node " +
                            std::to_string(j));
  CustomerTag tag = C.tag(j, l);
  const RouteSpec& route = m.route(tag.type);
  if (tag.stage != route.length())
    throw std::invalid_argument("customer at node " + std::to_string(j) + " position " +
                                std::to_string(l) + " is not at its final stage");
  if (route.node_at(tag.stage) != j)
    throw std::invalid_argument("inconsistent state: final stage of type " +
                                std::to_string(tag.type) + " is not node " + std::to_string(j));
  DetailedState next = C;
  erase_tag(next, j, l);
  return next;
}

DetailedState apply_arrive(const OpenNetworkModel& m, const DetailedState& C, int i, int r) {
  if (i < 1 || i > m.type_count)
    throw std::out_of_range("type " + std::to_string(i) + " out of range");
  int k = m.route(i).node_at(1);
  if (r < 1 || r > C.length(k) + 1)
    throw std::out_of_range("insertion position " + std::to_string(r) + " out of range at node " +
                            std::to_string(k));
  DetailedState next = C;
  insert_tag(next, k, r, {i, 1});
  return next;
}

std::vector<TransitionEvent> enumerate_transitions(const OpenNetworkModel& m, const DetailedState& C) {
  std::vector<TransitionEvent> out;
  std::map<DetailedState, std::size_t> slot;  // result state -> index in out
  auto add = [&](TransitionEvent ev) {
    auto [it, fresh] = slot.try_emplace(ev.result, out.size());
    if (fresh)
      out.push_back(std::move(ev));
    else
      out[it->second].rate += ev.rate;
  };

  for (int j = 1; j <= m.node_count; ++j) {
    int n = C.length(j);
    const ServicePolicy& pol = m.policy(j);
    for (int l = 1; l <= n; ++l) {
      double effort = pol.mu(l) * pol.gamma(n, l);
      if (effort <= 0.0) continue;
      const CustomerTag& tag = C.tag(j, l);
      const RouteSpec& route = m.route(tag.type);
      if (tag.stage < route.length()) {
        int k = route.node_at(tag.stage + 1);
        const ServicePolicy& target = m.policy(k);
        if (k != j) {
          int nk = C.length(k);
          for (int r = 1; r <= nk + 1; ++r) {
            double rate = effort * target.delta(nk + 1, r);
            if (rate <= 0.0) continue;
            add({TransitionKind::TRANSFER, j, l, k, r, 0, rate, apply_transfer(m, C, j, l, r)});
          }
        } else {
          // Feedback: the queue momentarily drops to n-1 members and the
          // returning customer is its n-th insertion.
          for (int r = 1; r <= n; ++r) {
            double rate = effort * target.delta(n, r);
            if (rate <= 0.0) continue;
            add({TransitionKind::TRANSFER, j, l, j, r, 0, rate, apply_transfer(m, C, j, l, r)});
          }
        }
      } else {
        add({TransitionKind::DEPART, j, l, 0, 0, 0, effort, apply_depart(m, C, j, l)});
      }
    }
  }

  for (int i = 1; i <= m.type_count; ++i) {
    double nu = m.arrival_rate(i);
    if (nu <= 0.0) continue;
    int k = m.route(i).node_at(1);
    const ServicePolicy& target = m.policy(k);
    int nk = C.length(k);
    for (int r = 1; r <= nk + 1; ++r) {
      double rate = nu * target.delta(nk + 1, r);
      if (rate <= 0.0) continue;
      add({TransitionKind::ARRIVE, 0, 0, k, r, i, rate, apply_arrive(m, C, i, r)});
    }
  }
  return out;
}

double total_outflow(const OpenNetworkModel& m, const DetailedState& C) {
  double total = 0.0;
  for (int j = 1; j <= m.node_count; ++j) {
    int n = C.length(j);
    const ServicePolicy& pol = m.policy(j);
    for (int l = 1; l <= n; ++l) total += pol.mu(l) * pol.gamma(n, l);
  }
  for (int i = 1; i <= m.type_count; ++i) total += m.arrival_rate(i);
  return total;
}

std::vector<Predecessor> predecessors(const OpenNetworkModel& m, const DetailedState& C) {
  if (auto err = consistency_error(m, C))
    throw std::invalid_argument("inconsistent state: " + *err);
  for (int j = 1; j <= m.node_count; ++j) {
    int cap = m.capacity(j);
    if (cap > 0 && C.length(j) > cap)
      throw std::invalid_argument("state exceeds sim_capacity at node " + std::to_string(j));
  }

  auto within_caps = [&](const DetailedState& s) {
    for (int j = 1; j <= m.node_count; ++j) {
      int cap = m.capacity(j);
      if (cap > 0 && s.length(j) > cap) return false;
    }
    return true;
  };

  std::map<DetailedState, char> candidates;
  auto consider = [&](DetailedState s) {
    if (within_caps(s)) candidates.emplace(std::move(s), 0);
  };

  // Undo an arrival: drop any stage-1 customer.
  for (int j = 1; j <= m.node_count; ++j) {
    for (int l = 1; l <= C.length(j); ++l) {
      if (C.tag(j, l).stage != 1) continue;
      DetailedState s = C;
      erase_tag(s, j, l);
      consider(std::move(s));
    }
  }

  // Undo a transfer: send any stage>=2 customer back to its previous node,
  // at every position it could have held there.
  for (int j = 1; j <= m.node_count; ++j) {
    for (int l = 1; l <= C.length(j); ++l) {
      const CustomerTag& tag = C.tag(j, l);
      if (tag.stage < 2) continue;
      int prev = m.route(tag.type).node_at(tag.stage - 1);
      DetailedState base = C;
      erase_tag(base, j, l);
      int max_pos = base.length(prev) + 1;
      for (int pos = 1; pos <= max_pos; ++pos) {
        DetailedState s = base;
        insert_tag(s, prev, pos, {tag.type, tag.stage - 1});
        consider(std::move(s));
      }
    }
  }

  // Undo a departure: reinsert a final-stage customer of any type at every
  // position of its final node.
  for (int i = 1; i <= m.type_count; ++i) {
    const RouteSpec& route = m.route(i);
    int jf = route.node_at(route.length());
    for (int pos = 1; pos <= C.length(jf) + 1; ++pos) {
      DetailedState s = C;
      insert_tag(s, jf, pos, {i, route.length()});
      consider(std::move(s));
    }
  }

  std::vector<Predecessor> result;
  for (const auto& [cand, unused] : candidates) {
    (void)unused;
    for (auto& ev : enumerate_transitions(m, cand)) {
      if (ev.result == C) {
        result.push_back({cand, std::move(ev)});
        break;  // merged events have distinct results, so at most one matches
      }
    }
  }
  return result;
}

std::vector<CustomerTag> node_tag_alphabet(const OpenNetworkModel& m, int node) {
  std::vector<CustomerTag> tags;
  for (int i = 1; i <= m.type_count; ++i) {
    const RouteSpec& r = m.route(i);
    for (int s = 1; s <= r.length(); ++s)
      if (r.node_at(s) == node) tags.push_back({i, s});
  }
  std::sort(tags.begin(), tags.end());
  return tags;
}

namespace {

void fill_node(const OpenNetworkModel& m, const std::vector<std::vector<CustomerTag>>& alphabets,
               const std::vector<int>& limits, int node, int budget, DetailedState& partial,
               std::vector<DetailedState>& out) {
  if (node > m.node_count) {
    out.push_back(partial);
    return;
  }
  const auto& alphabet = alphabets[static_cast<std::size_t>(node) - 1];
  int max_n = std::min(budget, limits[static_cast<std::size_t>(node) - 1]);
  if (alphabet.empty()) max_n = 0;
  auto& q = partial.queues[static_cast<std::size_t>(node) - 1];
  for (int n = 0; n <= max_n; ++n) {
    // Odometer over tag choices per position, lexicographic.
    std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
    bool done = false;
    while (!done) {
      q.resize(static_cast<std::size_t>(n));
      for (std::size_t p = 0; p < idx.size(); ++p) q[p] = alphabet[idx[p]];
      fill_node(m, alphabets, limits, node + 1, budget - n, partial, out);
      done = true;
      for (std::size_t p = idx.size(); p-- > 0;) {
        if (++idx[p] < alphabet.size()) {
          done = false;
          break;
        }
        idx[p] = 0;
      }
    }
    q.clear();
  }
}

}  // namespace

std::vector<DetailedState> enumerate_detailed_states(const OpenNetworkModel& m, int max_total,
                                                     std::vector<int> node_limit) {
  std::vector<int> limits(static_cast<std::size_t>(m.node_count), max_total);
  for (int j = 1; j <= m.node_count; ++j) {
    int lim = max_total;
    if (!node_limit.empty() && node_limit[static_cast<std::size_t>(j) - 1] >= 0)
      lim = std::min(lim, node_limit[static_cast<std::size_t>(j) - 1]);
    else if (node_limit.empty() && m.capacity(j) > 0)
      lim = std::min(lim, m.capacity(j));
    limits[static_cast<std::size_t>(j) - 1] = lim;
  }
  std::vector<std::vector<CustomerTag>> alphabets;
  for (int j = 1; j <= m.node_count; ++j) alphabets.push_back(node_tag_alphabet(m, j));

  std::vector<DetailedState> out;
  DetailedState partial = empty_state(m);
  fill_node(m, alphabets, limits, 1, max_total, partial, out);
  return out;
}

void write_state_json(JsonWriter& w, const DetailedState& C) {
  w.begin_object();
  w.key("nodes").begin_array();
  for (const auto& q : C.queues) {
    w.begin_array();
    for (const auto& t : q) {
      w.begin_array();
      w.value(t.type);
      w.value(t.stage);
      w.end_array();
    }
    w.end_array();
  }
  w.end_array();
  w.end_object();
}

}  // namespace kellynet
