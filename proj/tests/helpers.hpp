#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "kellynet/model.hpp"

namespace testutil {

inline std::filesystem::path models_dir() { return KELLYNET_MODELS_DIR; }

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path make_temp_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("kellynet_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir;
}

inline kellynet::OpenNetworkModel make_mm1(double nu = 0.3, double mu = 1.0, int cap = 25) {
  kellynet::OpenNetworkModel m;
  m.node_count = 1;
  m.type_count = 1;
  m.routes = {{1, {1}}};
  m.nu = {nu};
  m.policies = {kellynet::builtin_policy(kellynet::PolicyKind::FCFS, {}, mu)};
  m.sim_capacity = {cap};
  return m;
}

// Three nodes, two types; type 1 revisits node 1 at stages 1 and 3.
inline kellynet::OpenNetworkModel make_revisit(
    kellynet::PolicyKind kind = kellynet::PolicyKind::FCFS, int cap = 40) {
  kellynet::OpenNetworkModel m;
  m.node_count = 3;
  m.type_count = 2;
  m.routes = {{1, {1, 2, 1}}, {2, {2, 3}}};
  m.nu = {0.3, 0.2};
  for (int j = 0; j < 3; ++j) m.policies.push_back(kellynet::builtin_policy(kind, {}, 1.0));
  m.sim_capacity = {cap, cap, cap};
  return m;
}

inline kellynet::ClosedNetworkModel make_cycle2() {
  kellynet::ClosedNetworkModel m;
  m.node_count = 2;
  m.type_count = 1;
  m.mu = {1.0, 1.0};
  m.switches = {{1, 1, 2, 1, 1.0}, {2, 1, 1, 1, 1.0}};
  m.chains = kellynet::derive_chains(m.switches);
  m.populations = {{1, 2}};
  return m;
}

inline kellynet::ClosedNetworkModel make_tandem12(int population = 2) {
  kellynet::ClosedNetworkModel m;
  m.node_count = 2;
  m.type_count = 1;
  m.mu = {1.0, 1.0};
  m.switches = {{1, 1, 2, 1, 1.0}, {2, 1, 1, 1, 0.5}, {2, 1, 2, 1, 0.5}};
  m.chains = kellynet::derive_chains(m.switches);
  m.populations = {{1, population}};
  return m;
}

inline kellynet::ClosedNetworkModel make_switch2(int population = 2) {
  kellynet::ClosedNetworkModel m;
  m.node_count = 2;
  m.type_count = 2;
  m.mu = {1.0, 1.5};
  m.switches = {{1, 1, 2, 1, 0.6}, {1, 1, 2, 2, 0.4}, {2, 1, 1, 1, 1.0}, {2, 2, 1, 1, 1.0}};
  m.chains = kellynet::derive_chains(m.switches);
  m.populations = {{1, population}};
  return m;
}

}  // namespace testutil
