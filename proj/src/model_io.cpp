#include "kellynet/model_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "kellynet/errors.hpp"

namespace kellynet {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& path,
                  std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional) {
  if (!obj.is_object()) throw ParseError(path + ": expected an object");
  for (const char* k : required)
    if (!obj.contains(k)) throw ParseError(path + ": missing key \"" + k + "\"");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : required)
      if (it.key() == k) known = true;
    for (const char* k : optional)
      if (it.key() == k) known = true;
    if (!known) throw ParseError(path + ": unknown key \"" + it.key() + "\"");
  }
}

int get_int(const json& obj, const std::string& path, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ParseError(path + "." + key + ": expected an integer");
  return v.get<int>();
}

double get_number(const json& obj, const std::string& path, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_number()) throw ParseError(path + "." + key + ": expected a number");
  return v.get<double>();
}

std::string get_string(const json& obj, const std::string& path, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_string()) throw ParseError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

const json& get_array(const json& obj, const std::string& path, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_array()) throw ParseError(path + "." + key + ": expected an array");
  return v;
}

std::vector<std::vector<double>> get_rows(const json& arr, const std::string& path) {
  std::vector<std::vector<double>> rows;
  for (std::size_t n = 0; n < arr.size(); ++n) {
    const json& row = arr[n];
    if (!row.is_array()) throw ParseError(path + "[" + std::to_string(n) + "]: expected an array");
    std::vector<double> r;
    for (const auto& x : row) {
      if (!x.is_number()) throw ParseError(path + "[" + std::to_string(n) + "]: expected numbers");
      r.push_back(x.get<double>());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

OpenNetworkModel parse_open(const json& root) {
  require_keys(root, "$", {"kind", "nodes", "types"}, {});
  const json& nodes = get_array(root, "$", "nodes");
  const json& types = get_array(root, "$", "types");
  if (nodes.empty()) throw ParseError("$.nodes: at least one node required");
  if (types.empty()) throw ParseError("$.types: at least one type required");

  OpenNetworkModel m;
  m.node_count = static_cast<int>(nodes.size());
  m.type_count = static_cast<int>(types.size());
  m.policies.resize(nodes.size());
  m.sim_capacity.assign(nodes.size(), 0);
  m.routes.resize(types.size());
  m.nu.assign(types.size(), 0.0);

  std::set<int> node_ids;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    std::string path = "$.nodes[" + std::to_string(k) + "]";
    const json& nd = nodes[k];
    require_keys(nd, path, {"id", "policy", "mu"}, {"gamma", "delta", "sim_capacity"});
    int id = get_int(nd, path, "id");
    if (id < 1 || id > m.node_count || !node_ids.insert(id).second)
      throw ParseError(path + ".id: node ids must be exactly 1.." + std::to_string(m.node_count) +
                       " with no duplicates");
    ServicePolicy pol;
    auto kind = policy_kind_from_string(get_string(nd, path, "policy"));
    if (!kind) throw ParseError(path + ".policy: expected fcfs, lcfs_pr, ps or explicit");
    pol.kind = *kind;
    const json& mu = nd.at("mu");
    require_keys(mu, path + ".mu", {"default"}, {"table"});
    if (!mu.at("default").is_number()) throw ParseError(path + ".mu.default: expected a number");
    pol.mu_default = mu.at("default").get<double>();
    if (mu.contains("table")) {
      const json& table = mu.at("table");
      if (!table.is_array()) throw ParseError(path + ".mu.table: expected an array");
      for (const auto& x : table) {
        if (!x.is_number()) throw ParseError(path + ".mu.table: expected numbers");
        pol.mu_table.push_back(x.get<double>());
      }
    }
    if (nd.contains("gamma") || nd.contains("delta")) {
      if (pol.kind != PolicyKind::EXPLICIT)
        throw ParseError(path + ": gamma/delta tables are only valid with policy \"explicit\"");
    }
    if (pol.kind == PolicyKind::EXPLICIT) {
      if (!nd.contains("gamma") || !nd.contains("delta"))
        throw ParseError(path + ": explicit policy requires gamma and delta tables");
      pol.gamma_rows = get_rows(nd.at("gamma"), path + ".gamma");
      pol.delta_rows = get_rows(nd.at("delta"), path + ".delta");
    }
    if (nd.contains("sim_capacity")) {
      const json& cap = nd.at("sim_capacity");
      if (!cap.is_number_integer()) throw ParseError(path + ".sim_capacity: expected an integer");
      m.sim_capacity[static_cast<std::size_t>(id) - 1] = cap.get<int>();
    }
    m.policies[static_cast<std::size_t>(id) - 1] = std::move(pol);
  }

  std::set<int> type_ids;
  for (std::size_t k = 0; k < types.size(); ++k) {
    std::string path = "$.types[" + std::to_string(k) + "]";
    const json& td = types[k];
    require_keys(td, path, {"id", "route", "nu"}, {});
    int id = get_int(td, path, "id");
    if (id < 1 || id > m.type_count || !type_ids.insert(id).second)
      throw ParseError(path + ".id: type ids must be exactly 1.." + std::to_string(m.type_count) +
                       " with no duplicates");
    RouteSpec r;
    r.type_id = id;
    for (const auto& n : get_array(td, path, "route")) {
      if (!n.is_number_integer()) throw ParseError(path + ".route: expected integers");
      r.nodes.push_back(n.get<int>());
    }
    m.routes[static_cast<std::size_t>(id) - 1] = std::move(r);
    m.nu[static_cast<std::size_t>(id) - 1] = get_number(td, path, "nu");
  }
  return m;
}

ClosedNetworkModel parse_closed(const json& root) {
  require_keys(root, "$", {"kind", "nodes", "switch", "populations"}, {});
  const json& nodes = get_array(root, "$", "nodes");
  const json& switches = get_array(root, "$", "switch");
  if (nodes.empty()) throw ParseError("$.nodes: at least one node required");
  if (switches.empty()) throw ParseError("$.switch: at least one switch entry required");

  ClosedNetworkModel m;
  m.node_count = static_cast<int>(nodes.size());
  m.mu.assign(nodes.size(), 0.0);

  std::set<int> node_ids;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    std::string path = "$.nodes[" + std::to_string(k) + "]";
    const json& nd = nodes[k];
    require_keys(nd, path, {"id", "mu"}, {});
    int id = get_int(nd, path, "id");
    if (id < 1 || id > m.node_count || !node_ids.insert(id).second)
      throw ParseError(path + ".id: node ids must be exactly 1.." + std::to_string(m.node_count) +
                       " with no duplicates");
    m.mu[static_cast<std::size_t>(id) - 1] = get_number(nd, path, "mu");
  }

  int max_type = 0;
  for (std::size_t k = 0; k < switches.size(); ++k) {
    std::string path = "$.switch[" + std::to_string(k) + "]";
    const json& sd = switches[k];
    require_keys(sd, path, {"from", "to", "p"}, {});
    auto read_pair = [&](const char* key) {
      const json& a = sd.at(key);
      if (!a.is_array() || a.size() != 2 || !a[0].is_number_integer() || !a[1].is_number_integer())
        throw ParseError(path + "." + key + ": expected [node, type]");
      return NodeTypePair{a[0].get<int>(), a[1].get<int>()};
    };
    auto [fj, fi] = read_pair("from");
    auto [tk, ti] = read_pair("to");
    SwitchEntry e{fj, fi, tk, ti, get_number(sd, path, "p")};
    max_type = std::max({max_type, e.from_type, e.to_type});
    m.switches.push_back(e);
  }
  m.type_count = max_type;

  const json& pops = root.at("populations");
  if (!pops.is_object()) throw ParseError("$.populations: expected an object");
  for (auto it = pops.begin(); it != pops.end(); ++it) {
    int id;
    try {
      std::size_t used = 0;
      id = std::stoi(it.key(), &used);
      if (used != it.key().size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError("$.populations: chain id \"" + it.key() + "\" is not an integer");
    }
    if (!it.value().is_number_integer())
      throw ParseError("$.populations[" + it.key() + "]: expected an integer");
    m.populations[id] = it.value().get<int>();
  }

  m.chains = derive_chains(m.switches);
  return m;
}

}  // namespace

AnyModel parse_model_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("kind") || !root.at("kind").is_string())
    throw ParseError("$: expected an object with a string \"kind\"");
  std::string kind = root.at("kind").get<std::string>();
  if (kind == "open") return parse_open(root);
  if (kind == "closed") return parse_closed(root);
  throw ParseError("$.kind: expected \"open\" or \"closed\", got \"" + kind + "\"");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

AnyModel load_model_file(const std::filesystem::path& path) {
  return parse_model_text(read_text_file(path));
}

}  // namespace kellynet
