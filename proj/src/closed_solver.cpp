#include "kellynet/closed_solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "kellynet/errors.hpp"
#include "kellynet/json_writer.hpp"

namespace kellynet {

double TrafficSolution::alpha_at(int node, int type) const {
  for (std::size_t k = 0; k < pairs.size(); ++k)
    if (pairs[k].first == node && pairs[k].second == type) return alpha[k];
  return 0.0;
}

namespace {

// Strong connectivity of the positive-entry digraph: every vertex reachable
// from 0 forward and backward.
bool strongly_connected(const Eigen::MatrixXd& P) {
  auto n = P.rows();
  if (n == 0) return false;
  auto reach = [&](bool forward) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<Eigen::Index> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      Eigen::Index v = stack.back();
      stack.pop_back();
      for (Eigen::Index w = 0; w < n; ++w) {
        double edge = forward ? P(v, w) : P(w, v);
        if (edge > 0.0 && !seen[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          stack.push_back(w);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return reach(true) && reach(false);
}

constexpr int kDenseTrafficLimit = 256;

Eigen::VectorXd traffic_fixed_point(const Eigen::MatrixXd& P) {
  auto n = P.rows();
  if (n == 1) return Eigen::VectorXd::Ones(1);
  if (n <= kDenseTrafficLimit) {
    // Solve x (P - I) = 0 with the last equation replaced by sum(x) = 1.
    Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(n, n);
    A.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    Eigen::VectorXd x = A.partialPivLu().solve(rhs);
    if (x.minCoeff() > -1e-9) return x;
    // fall through to power iteration on numerical trouble
  }
  // Lazy power iteration; the (P + I)/2 mix removes periodicity.
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (int iter = 0; iter < 1'000'000; ++iter) {
    Eigen::VectorXd next = 0.5 * (x + P.transpose() * x);
    next /= next.sum();
    double diff = (P.transpose() * next - next).cwiseAbs().maxCoeff();
    x = next;
    if (diff <= 1e-14) break;
  }
  return x;
}

std::vector<double> factorial_table(int up_to) {
  std::vector<double> f(static_cast<std::size_t>(up_to) + 1, 1.0);
  for (int n = 1; n <= up_to; ++n) f[static_cast<std::size_t>(n)] = f[static_cast<std::size_t>(n) - 1] * n;
  return f;
}

std::uint64_t multiset_coefficient(std::uint64_t slots, std::uint64_t balls) {
  // C(balls + slots - 1, balls), saturating.
  if (slots == 0) return balls == 0 ? 1 : 0;
  unsigned __int128 acc = 1;
  for (std::uint64_t k = 1; k <= balls; ++k) {
    acc = acc * (slots - 1 + k) / k;  // exact: numerator runs over consecutive integers
    if (acc > static_cast<unsigned __int128>(UINT64_MAX)) return UINT64_MAX;
  }
  return static_cast<std::uint64_t>(acc);
}

}  // namespace

TrafficSolution solve_traffic(const ClosedNetworkModel& m) {
  std::vector<Chain> chains = effective_chains(m);
  TrafficSolution sol;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const Chain& chain = chains[c];
    std::map<NodeTypePair, Eigen::Index> index;
    for (std::size_t k = 0; k < chain.size(); ++k)
      index[chain[k]] = static_cast<Eigen::Index>(k);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(chain.size()),
                                              static_cast<Eigen::Index>(chain.size()));
    for (const auto& e : m.switches) {
      auto a = index.find({e.from_node, e.from_type});
      auto b = index.find({e.to_node, e.to_type});
      if (a != index.end() && b != index.end()) P(a->second, b->second) += e.p;
    }
    if (!strongly_connected(P)) throw ReducibleChainError(static_cast<int>(c) + 1);

    Eigen::VectorXd x = traffic_fixed_point(P);
    x /= x.sum();
    std::size_t begin = sol.pairs.size();
    for (std::size_t k = 0; k < chain.size(); ++k) {
      sol.pairs.push_back(chain[k]);
      sol.alpha.push_back(std::max(0.0, x(static_cast<Eigen::Index>(k))));
    }
    sol.chain_spans.emplace_back(begin, sol.pairs.size());
  }

  // Balance defect over every pair in every chain.
  double worst = 0.0;
  for (std::size_t k = 0; k < sol.pairs.size(); ++k) {
    double inflow = 0.0;
    for (const auto& e : m.switches)
      if (e.to_node == sol.pairs[k].first && e.to_type == sol.pairs[k].second)
        inflow += sol.alpha_at(e.from_node, e.from_type) * e.p;
    worst = std::max(worst, std::abs(sol.alpha[k] - inflow));
  }
  sol.residual = worst;
  return sol;
}

int PopulationState::node_total(int node) const {
  int total = 0;
  for (int i = 1; i <= type_count; ++i) total += count(node, i);
  return total;
}

std::uint64_t population_state_count(const ClosedNetworkModel& m) {
  std::vector<Chain> chains = effective_chains(m);
  unsigned __int128 total = 1;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    auto it = m.populations.find(static_cast<int>(c) + 1);
    std::uint64_t n = it == m.populations.end() ? 0 : static_cast<std::uint64_t>(it->second);
    total *= multiset_coefficient(chains[c].size(), n);
    if (total > static_cast<unsigned __int128>(UINT64_MAX)) return UINT64_MAX;
  }
  return static_cast<std::uint64_t>(total);
}

namespace {

void fill_chain(const std::vector<Chain>& chains, const ClosedNetworkModel& m, std::size_t c,
                PopulationState& state, const std::function<void(const PopulationState&)>& fn) {
  if (c == chains.size()) {
    fn(state);
    return;
  }
  const Chain& chain = chains[c];
  auto it = m.populations.find(static_cast<int>(c) + 1);
  int budget = it == m.populations.end() ? 0 : it->second;

  // Compositions of `budget` over the chain's pairs, first pair descending.
  std::vector<std::size_t> slots;
  for (const auto& [node, type] : chain)
    slots.push_back(static_cast<std::size_t>(node - 1) * static_cast<std::size_t>(state.type_count) +
                    static_cast<std::size_t>(type - 1));

  std::function<void(std::size_t, int)> assign = [&](std::size_t k, int remaining) {
    if (k + 1 == slots.size()) {
      state.counts[slots[k]] = remaining;
      fill_chain(chains, m, c + 1, state, fn);
      state.counts[slots[k]] = 0;
      return;
    }
    for (int take = remaining; take >= 0; --take) {
      state.counts[slots[k]] = take;
      assign(k + 1, remaining - take);
    }
    state.counts[slots[k]] = 0;
  };
  assign(0, budget);
}

}  // namespace

void for_each_population_state(const ClosedNetworkModel& m,
                               const std::function<void(const PopulationState&)>& fn) {
  std::vector<Chain> chains = effective_chains(m);
  PopulationState state;
  state.type_count = m.type_count;
  state.counts.assign(static_cast<std::size_t>(m.node_count) * static_cast<std::size_t>(m.type_count), 0);
  fill_chain(chains, m, 0, state, fn);
}

std::vector<PopulationState> enumerate_states(const ClosedNetworkModel& m) {
  std::vector<PopulationState> out;
  for_each_population_state(m, [&](const PopulationState& s) { out.push_back(s); });
  return out;
}

double unnormalized_weight(const ClosedNetworkModel& m, const TrafficSolution& traffic,
                           const PopulationState& state) {
  static thread_local std::vector<double> fact;
  int n_total = m.total_population();
  if (static_cast<int>(fact.size()) <= n_total) fact = factorial_table(std::max(n_total, 16));

  double w = 1.0;
  for (int j = 1; j <= m.node_count; ++j) {
    double node_factor = fact[static_cast<std::size_t>(state.node_total(j))];
    for (int i = 1; i <= m.type_count; ++i) {
      int c = state.count(j, i);
      if (c == 0) continue;
      double ratio = traffic.alpha_at(j, i) / m.service_rate(j);
      node_factor *= std::pow(ratio, c) / fact[static_cast<std::size_t>(c)];
    }
    w *= node_factor;
  }
  return w;
}

StationaryDistribution stationary_with_traffic(const ClosedNetworkModel& m,
                                               const TrafficSolution& traffic, std::uint64_t cap) {
  std::uint64_t count = population_state_count(m);
  if (count > cap) throw StateSpaceTooLargeError(count, cap);

  StationaryDistribution dist;
  dist.traffic = traffic;
  dist.model_hash = model_hash(m);
  double sum = 0.0;
  for_each_population_state(m, [&](const PopulationState& s) {
    double w = unnormalized_weight(m, traffic, s);
    dist.states.push_back(s);
    dist.p.push_back(w);
    sum += w;
  });
  dist.B_N = 1.0 / sum;
  for (double& p : dist.p) p *= dist.B_N;
  return dist;
}

StationaryDistribution stationary_distribution(const ClosedNetworkModel& m, std::uint64_t cap) {
  return stationary_with_traffic(m, solve_traffic(m), cap);
}

std::vector<double> marginal_node_pmf(const ClosedNetworkModel& m, int node, std::uint64_t cap) {
  StationaryDistribution dist = stationary_distribution(m, cap);
  std::vector<double> pmf(static_cast<std::size_t>(m.total_population()) + 1, 0.0);
  for (std::size_t k = 0; k < dist.states.size(); ++k)
    pmf[static_cast<std::size_t>(dist.states[k].node_total(node))] += dist.p[k];
  return pmf;
}

std::vector<std::vector<double>> marginals_of(const StationaryDistribution& dist,
                                              const ClosedNetworkModel& m) {
  std::vector<std::vector<double>> out;
  for (int j = 1; j <= m.node_count; ++j) {
    std::vector<double> pmf(static_cast<std::size_t>(m.total_population()) + 1, 0.0);
    for (std::size_t k = 0; k < dist.states.size(); ++k)
      pmf[static_cast<std::size_t>(dist.states[k].node_total(j))] += dist.p[k];
    out.push_back(std::move(pmf));
  }
  return out;
}

void write_stationary_json(const StationaryDistribution& dist, const ClosedNetworkModel& m,
                           std::ostream& os) {
  JsonWriter w(os);
  w.begin_object();
  w.field("model_hash", hash_hex(dist.model_hash));
  w.field("B_N", dist.B_N);
  w.key("traffic").begin_object();
  w.key("alpha").begin_object();
  for (std::size_t k = 0; k < dist.traffic.pairs.size(); ++k)
    w.field("(" + std::to_string(dist.traffic.pairs[k].first) + "," +
                std::to_string(dist.traffic.pairs[k].second) + ")",
            dist.traffic.alpha[k]);
  w.end_object();
  w.field("residual", dist.traffic.residual);
  w.end_object();
  w.key("states").begin_array();
  for (std::size_t k = 0; k < dist.states.size(); ++k) {
    w.begin_object();
    w.key("counts").begin_array();
    for (int j = 1; j <= m.node_count; ++j) {
      w.begin_array();
      for (int i = 1; i <= m.type_count; ++i) w.value(dist.states[k].count(j, i));
      w.end_array();
    }
    w.end_array();
    w.field("p", dist.p[k]);
    w.end_object();
  }
  w.end_array();
  w.key("marginals").begin_array();
  auto margs = marginals_of(dist, m);
  for (int j = 1; j <= m.node_count; ++j) {
    w.begin_object();
    w.field("node", j);
    w.key("pmf").begin_array();
    for (double p : margs[static_cast<std::size_t>(j) - 1]) w.value(p);
    w.end_array();
    w.end_object();
  }
  w.end_array();
  w.end_object();
  os << "\n";
}

void write_stationary_csv(const StationaryDistribution& dist, const ClosedNetworkModel& m,
                          std::ostream& os) {
  os << "state";
  for (int j = 1; j <= m.node_count; ++j)
    for (int i = 1; i <= m.type_count; ++i) os << ",n" << j << "_" << i;
  os << ",p\n";
  for (std::size_t k = 0; k < dist.states.size(); ++k) {
    os << k;
    for (int j = 1; j <= m.node_count; ++j)
      for (int i = 1; i <= m.type_count; ++i) os << "," << dist.states[k].count(j, i);
    os << "," << csv_field(dist.p[k]) << "\n";
  }
}

}  // namespace kellynet
