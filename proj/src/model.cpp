#include "kellynet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "kellynet/json_writer.hpp"

namespace kellynet {

namespace {

constexpr double kRowSumTol = 1e-12;

std::string fmt(const char* pattern, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

}  // namespace

const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::FCFS: return "fcfs";
    case PolicyKind::LCFS_PR: return "lcfs_pr";
    case PolicyKind::PS: return "ps";
    case PolicyKind::EXPLICIT: return "explicit";
  }
  return "?";
}

std::optional<PolicyKind> policy_kind_from_string(std::string_view name) {
  if (name == "fcfs") return PolicyKind::FCFS;
  if (name == "lcfs_pr") return PolicyKind::LCFS_PR;
  if (name == "ps") return PolicyKind::PS;
  if (name == "explicit") return PolicyKind::EXPLICIT;
  return std::nullopt;
}

double ServicePolicy::mu(int position) const {
  if (position < 1) throw std::invalid_argument("service position must be >= 1");
  if (position <= static_cast<int>(mu_table.size())) return mu_table[static_cast<std::size_t>(position) - 1];
  return mu_default;
}

double ServicePolicy::gamma(int n, int position) const {
  if (n < 1 || position < 1 || position > n)
    throw std::invalid_argument("gamma(n,l) requires 1 <= l <= n, n >= 1");
  switch (kind) {
    case PolicyKind::FCFS:
    case PolicyKind::LCFS_PR:
      return position == 1 ? 1.0 : 0.0;
    case PolicyKind::PS:
      return 1.0 / n;
    case PolicyKind::EXPLICIT:
      if (n > static_cast<int>(gamma_rows.size()))
        throw std::out_of_range("explicit gamma has no row for n=" + std::to_string(n));
      return gamma_rows[static_cast<std::size_t>(n) - 1].at(static_cast<std::size_t>(position) - 1);
  }
  return 0.0;
}

double ServicePolicy::delta(int n, int position) const {
  if (n < 1 || position < 1 || position > n)
    throw std::invalid_argument("delta(n,l) requires 1 <= l <= n, n >= 1");
  switch (kind) {
    case PolicyKind::FCFS:
      return position == n ? 1.0 : 0.0;
    case PolicyKind::LCFS_PR:
      return position == 1 ? 1.0 : 0.0;
    case PolicyKind::PS:
      return 1.0 / n;
    case PolicyKind::EXPLICIT:
      if (n > static_cast<int>(delta_rows.size()))
        throw std::out_of_range("explicit delta has no row for n=" + std::to_string(n));
      return delta_rows[static_cast<std::size_t>(n) - 1].at(static_cast<std::size_t>(position) - 1);
  }
  return 0.0;
}

ServicePolicy builtin_policy(PolicyKind kind, std::vector<double> mu_table, double mu_default) {
  if (kind == PolicyKind::EXPLICIT)
    throw std::invalid_argument("builtin_policy: explicit policies require gamma/delta tables");
  ServicePolicy p;
  p.kind = kind;
  p.mu_table = std::move(mu_table);
  p.mu_default = mu_default;
  return p;
}

const RouteSpec& OpenNetworkModel::route(int type_id) const {
  for (const auto& r : routes)
    if (r.type_id == type_id) return r;
  throw std::out_of_range("no route for type " + std::to_string(type_id));
}

int ClosedNetworkModel::population(int chain_id) const {
  auto it = populations.find(chain_id);
  if (it == populations.end())
    throw std::out_of_range("no population for chain " + std::to_string(chain_id));
  return it->second;
}

int ClosedNetworkModel::total_population() const {
  int total = 0;
  for (const auto& [id, n] : populations) total += n;
  return total;
}

std::vector<Chain> derive_chains(const std::vector<SwitchEntry>& switches) {
  std::vector<NodeTypePair> pairs;
  for (const auto& e : switches) {
    pairs.emplace_back(e.from_node, e.from_type);
    pairs.emplace_back(e.to_node, e.to_type);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  std::map<NodeTypePair, std::size_t> index;
  for (std::size_t i = 0; i < pairs.size(); ++i) index[pairs[i]] = i;

  std::vector<std::size_t> parent(pairs.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : switches) {
    std::size_t a = find(index[{e.from_node, e.from_type}]);
    std::size_t b = find(index[{e.to_node, e.to_type}]);
    if (a != b) parent[b] = a;
  }

  std::map<std::size_t, Chain> groups;
  for (std::size_t i = 0; i < pairs.size(); ++i) groups[find(i)].push_back(pairs[i]);
  std::vector<Chain> chains;
  for (auto& [root, chain] : groups) {
    std::sort(chain.begin(), chain.end());
    chains.push_back(std::move(chain));
  }
  std::sort(chains.begin(), chains.end());
  return chains;
}

std::vector<Chain> effective_chains(const ClosedNetworkModel& model) {
  if (!model.chains.empty()) return model.chains;
  return derive_chains(model.switches);
}

std::vector<Violation> validate_open(const OpenNetworkModel& m) {
  std::vector<Violation> v;
  if (m.node_count < 1) v.push_back({"J", "node count must be >= 1"});
  if (m.type_count < 1) v.push_back({"I", "type count must be >= 1"});

  if (static_cast<int>(m.routes.size()) != m.type_count)
    v.push_back({"types", "expected exactly " + std::to_string(m.type_count) +
                              " route(s), one per type; found " + std::to_string(m.routes.size())});
  std::set<int> seen_types;
  for (std::size_t idx = 0; idx < m.routes.size(); ++idx) {
    const auto& r = m.routes[idx];
    std::string path = "types[" + std::to_string(idx) + "]";
    if (r.type_id < 1 || r.type_id > m.type_count) {
      v.push_back({path, "type id " + std::to_string(r.type_id) + " out of range [1, " +
                             std::to_string(m.type_count) + "]"});
    } else if (!seen_types.insert(r.type_id).second) {
      v.push_back({path, "duplicate route for type " + std::to_string(r.type_id)});
    }
    if (r.nodes.empty()) v.push_back({path + ".route", "route must visit at least one node"});
    for (std::size_t s = 0; s < r.nodes.size(); ++s) {
      if (r.nodes[s] < 1 || r.nodes[s] > m.node_count)
        v.push_back({path + ".route[" + std::to_string(s) + "]",
                     "node " + std::to_string(r.nodes[s]) + " out of range [1, " +
                         std::to_string(m.node_count) + "]"});
    }
  }
  if (static_cast<int>(m.routes.size()) == m.type_count)
    for (int i = 1; i <= m.type_count; ++i)
      if (!seen_types.count(i))
        v.push_back({"types", "missing route for type " + std::to_string(i)});

  if (static_cast<int>(m.nu.size()) != m.type_count)
    v.push_back({"types", "expected " + std::to_string(m.type_count) + " arrival rate(s); found " +
                              std::to_string(m.nu.size())});
  for (std::size_t i = 0; i < m.nu.size(); ++i)
    if (!(m.nu[i] > 0.0))
      v.push_back({"types[" + std::to_string(i) + "].nu",
                   "arrival rate must be > 0, got " + fmt("%g", m.nu[i])});

  if (static_cast<int>(m.policies.size()) != m.node_count)
    v.push_back({"nodes", "expected " + std::to_string(m.node_count) + " policies; found " +
                              std::to_string(m.policies.size())});
  for (std::size_t jt = 0; jt < m.policies.size(); ++jt) {
    const auto& pol = m.policies[jt];
    std::string path = "nodes[" + std::to_string(jt) + "]";
    if (!(pol.mu_default > 0.0))
      v.push_back({path + ".mu.default", "rate must be > 0, got " + fmt("%g", pol.mu_default)});
    for (std::size_t l = 0; l < pol.mu_table.size(); ++l)
      if (!(pol.mu_table[l] > 0.0))
        v.push_back({path + ".mu.table[" + std::to_string(l) + "]",
                     "rate must be > 0, got " + fmt("%g", pol.mu_table[l])});

    if (pol.kind == PolicyKind::EXPLICIT) {
      auto check_rows = [&](const std::vector<std::vector<double>>& rows, const char* name) {
        if (rows.empty()) v.push_back({path + "." + name, "explicit policy requires at least one row"});
        for (std::size_t n = 0; n < rows.size(); ++n) {
          const auto& row = rows[n];
          std::string rpath = path + "." + name;
          if (row.size() != n + 1) {
            v.push_back({rpath, std::string(name) + " row " + std::to_string(n + 1) + " has " +
                                    std::to_string(row.size()) + " entries; expected " +
                                    std::to_string(n + 1)});
            continue;
          }
          double sum = 0.0;
          bool neg = false;
          for (double x : row) {
            sum += x;
            if (x < 0.0) neg = true;
          }
          if (neg)
            v.push_back({rpath, std::string(name) + " row " + std::to_string(n + 1) +
                                    " has negative entries"});
          if (std::abs(sum - 1.0) > kRowSumTol)
            v.push_back({rpath, std::string(name) + " row " + std::to_string(n + 1) + " sums to " +
                                    fmt("%g", sum)});
        }
        int cap = m.capacity(static_cast<int>(jt) + 1);
        if (cap > 0 && static_cast<int>(rows.size()) < cap)
          v.push_back({path + "." + name, std::string(name) + " has " +
                                              std::to_string(rows.size()) +
                                              " rows; sim_capacity " + std::to_string(cap) +
                                              " requires at least " + std::to_string(cap)});
      };
      check_rows(pol.gamma_rows, "gamma");
      check_rows(pol.delta_rows, "delta");
    } else if (!pol.gamma_rows.empty() || !pol.delta_rows.empty()) {
      v.push_back({path, "gamma/delta tables are only valid for explicit policies"});
    }
  }

  if (!m.sim_capacity.empty()) {
    if (static_cast<int>(m.sim_capacity.size()) != m.node_count)
      v.push_back({"nodes", "sim_capacity list must cover every node"});
    for (std::size_t jt = 0; jt < m.sim_capacity.size(); ++jt)
      if (m.sim_capacity[jt] < 0)
        v.push_back({"nodes[" + std::to_string(jt) + "].sim_capacity",
                     "capacity must be >= 1 (or omitted)"});
  }
  return v;
}

std::vector<Violation> validate_closed(const ClosedNetworkModel& m) {
  std::vector<Violation> v;
  if (m.node_count < 1) v.push_back({"J", "node count must be >= 1"});
  if (static_cast<int>(m.mu.size()) != m.node_count)
    v.push_back({"nodes", "expected " + std::to_string(m.node_count) + " service rates; found " +
                              std::to_string(m.mu.size())});
  for (std::size_t jt = 0; jt < m.mu.size(); ++jt)
    if (!(m.mu[jt] > 0.0))
      v.push_back({"nodes[" + std::to_string(jt) + "].mu",
                   "rate must be > 0, got " + fmt("%g", m.mu[jt])});

  std::set<std::pair<NodeTypePair, NodeTypePair>> seen_edges;
  std::map<NodeTypePair, double> row_sums;
  for (std::size_t e = 0; e < m.switches.size(); ++e) {
    const auto& s = m.switches[e];
    std::string path = "switch[" + std::to_string(e) + "]";
    auto check_pair = [&](int node, int type, const char* what) {
      if (node < 1 || node > m.node_count)
        v.push_back({path, std::string(what) + " node " + std::to_string(node) +
                               " out of range [1, " + std::to_string(m.node_count) + "]"});
      if (type < 1 || type > m.type_count)
        v.push_back({path, std::string(what) + " type " + std::to_string(type) +
                               " out of range [1, " + std::to_string(m.type_count) + "]"});
    };
    check_pair(s.from_node, s.from_type, "from");
    check_pair(s.to_node, s.to_type, "to");
    if (!(s.p > 0.0) || s.p > 1.0 + kRowSumTol)
      v.push_back({path + ".p", "probability must be in (0, 1], got " + fmt("%g", s.p)});
    if (!seen_edges.insert({{s.from_node, s.from_type}, {s.to_node, s.to_type}}).second)
      v.push_back({path, "duplicate switch entry"});
    row_sums[{s.from_node, s.from_type}] += s.p;
  }
  for (const auto& [pair, sum] : row_sums) {
    if (std::abs(sum - 1.0) > kRowSumTol)
      v.push_back({"switch(from=[" + std::to_string(pair.first) + "," + std::to_string(pair.second) +
                       "])",
                   "outgoing probabilities sum to " + fmt("%g", sum)});
  }

  std::vector<Chain> derived = derive_chains(m.switches);
  std::vector<Chain> chains = m.chains;
  if (!chains.empty()) {
    // Declared partition: check closure and agreement with connectivity.
    std::map<NodeTypePair, int> member;
    for (std::size_t c = 0; c < chains.size(); ++c) {
      for (const auto& p : chains[c]) {
        auto [it, fresh] = member.insert({p, static_cast<int>(c)});
        if (!fresh)
          v.push_back({"chains", "pair (" + std::to_string(p.first) + "," +
                                     std::to_string(p.second) + ") appears in more than one chain"});
      }
    }
    for (const auto& s : m.switches) {
      auto a = member.find({s.from_node, s.from_type});
      auto b = member.find({s.to_node, s.to_type});
      if (a == member.end() || b == member.end()) {
        v.push_back({"chains", "switch endpoint not covered by any declared chain"});
      } else if (a->second != b->second) {
        v.push_back({"chains", "chain closure: switch maps (" + std::to_string(s.from_node) + "," +
                                   std::to_string(s.from_type) + ") in chain " +
                                   std::to_string(a->second + 1) + " to (" +
                                   std::to_string(s.to_node) + "," + std::to_string(s.to_type) +
                                   ") in chain " + std::to_string(b->second + 1)});
      }
    }
    auto canon = chains;
    for (auto& c : canon) std::sort(c.begin(), c.end());
    std::sort(canon.begin(), canon.end());
    if (canon != derived)
      v.push_back({"chains", "declared chains do not match switch connectivity"});
  } else {
    chains = derived;
  }

  int chain_count = static_cast<int>(chains.size());
  for (const auto& [id, n] : m.populations) {
    if (id < 1 || id > chain_count)
      v.push_back({"populations", "unknown chain id " + std::to_string(id) + " (model has " +
                                      std::to_string(chain_count) + " chain(s))"});
    if (n < 1)
      v.push_back({"populations[" + std::to_string(id) + "]",
                   "population must be >= 1, got " + std::to_string(n)});
  }
  for (int c = 1; c <= chain_count; ++c)
    if (!m.populations.count(c))
      v.push_back({"populations", "missing population for chain " + std::to_string(c)});
  return v;
}

std::string model_identity(const OpenNetworkModel& m) {
  std::ostringstream os;
  os << "open J=" << m.node_count << " I=" << m.type_count << "\n";
  for (const auto& r : m.routes) {
    os << "type " << r.type_id << " nu=" << format_double(m.nu.size() >= static_cast<std::size_t>(r.type_id)
                                                              ? m.nu[static_cast<std::size_t>(r.type_id) - 1]
                                                              : 0.0)
       << " route=[";
    for (std::size_t s = 0; s < r.nodes.size(); ++s) os << (s ? "," : "") << r.nodes[s];
    os << "]\n";
  }
  for (std::size_t jt = 0; jt < m.policies.size(); ++jt) {
    const auto& pol = m.policies[jt];
    os << "node " << (jt + 1) << " policy=" << to_string(pol.kind) << " mu=[";
    for (std::size_t l = 0; l < pol.mu_table.size(); ++l)
      os << (l ? "," : "") << format_double(pol.mu_table[l]);
    os << "|" << format_double(pol.mu_default) << "] cap=" << m.capacity(static_cast<int>(jt) + 1);
    auto dump_rows = [&](const char* name, const std::vector<std::vector<double>>& rows) {
      if (rows.empty()) return;
      os << " " << name << "=";
      for (const auto& row : rows) {
        os << "(";
        for (std::size_t l = 0; l < row.size(); ++l) os << (l ? "," : "") << format_double(row[l]);
        os << ")";
      }
    };
    dump_rows("gamma", pol.gamma_rows);
    dump_rows("delta", pol.delta_rows);
    os << "\n";
  }
  return os.str();
}

std::string model_identity(const ClosedNetworkModel& m) {
  std::ostringstream os;
  os << "closed J=" << m.node_count << " I=" << m.type_count << "\n";
  for (std::size_t jt = 0; jt < m.mu.size(); ++jt)
    os << "node " << (jt + 1) << " mu=" << format_double(m.mu[jt]) << "\n";
  auto sorted = m.switches;
  std::sort(sorted.begin(), sorted.end(), [](const SwitchEntry& a, const SwitchEntry& b) {
    return std::tie(a.from_node, a.from_type, a.to_node, a.to_type) <
           std::tie(b.from_node, b.from_type, b.to_node, b.to_type);
  });
  for (const auto& s : sorted)
    os << "p(" << s.from_node << "," << s.from_type << ";" << s.to_node << "," << s.to_type
       << ")=" << format_double(s.p) << "\n";
  for (const auto& [id, n] : m.populations) os << "N(" << id << ")=" << n << "\n";
  return os.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t model_hash(const OpenNetworkModel& m) { return fnv1a64(model_identity(m)); }
std::uint64_t model_hash(const ClosedNetworkModel& m) { return fnv1a64(model_identity(m)); }

std::string hash_hex(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace kellynet
