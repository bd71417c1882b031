#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "kellynet/errors.hpp"
#include "kellynet/open_solver.hpp"
#include "kellynet/verifier.hpp"

using namespace kellynet;

namespace {

// Symmetric two-type, two-stage network under processor sharing.
OpenNetworkModel make_ps_two_stage() {
  OpenNetworkModel m;
  m.node_count = 2;
  m.type_count = 2;
  m.routes = {{1, {1, 2}}, {2, {2, 1}}};
  m.nu = {0.25, 0.2};
  m.policies = {builtin_policy(PolicyKind::PS), builtin_policy(PolicyKind::PS)};
  m.sim_capacity = {10, 10};
  return m;
}

ClosedNetworkModel make_mixing3(int population = 3) {
  // Three nodes, two types, switching mixes types at every hop.
  ClosedNetworkModel m;
  m.node_count = 3;
  m.type_count = 2;
  m.mu = {1.0, 1.5, 2.0};
  m.switches = {{1, 1, 2, 1, 0.5}, {1, 1, 2, 2, 0.5}, {2, 1, 3, 1, 1.0}, {2, 2, 3, 2, 1.0},
                {3, 1, 1, 1, 1.0}, {3, 2, 1, 1, 0.7}, {3, 2, 2, 2, 0.3}};
  m.chains = derive_chains(m.switches);
  m.populations = {{1, population}};
  return m;
}

}  // namespace

TEST_CASE("balance holds exactly for the single FCFS queue") {
  OpenNetworkModel m = testutil::make_mm1();
  auto sample = interior_states(m, 4, 1);
  BalanceReport report = balance_check(m, sample, 1);
  CHECK(report.states_checked == 5);
  CHECK(report.max_relative_residual <= 1e-12);
}

TEST_CASE("balance holds for symmetric processor sharing with class mixing") {
  OpenNetworkModel m = make_ps_two_stage();
  auto sample = interior_states(m, 3, 1);
  BalanceReport report = balance_check(m, sample, 1);
  CHECK(report.max_relative_residual <= 1e-12);
  CHECK(report.states_checked > 1);
}

TEST_CASE("balance holds on the revisit network under FCFS, PS and LCFS-PR") {
  for (PolicyKind kind : {PolicyKind::FCFS, PolicyKind::PS, PolicyKind::LCFS_PR}) {
    OpenNetworkModel m = testutil::make_revisit(kind);
    auto sample = interior_states(m, 4, 1);
    CHECK(sample.size() == 201);
    BalanceReport report = balance_check(m, sample, 1);
    CHECK(report.max_relative_residual <= 1e-10);
  }
}

TEST_CASE("balance holds through the feedback transition") {
  for (PolicyKind kind : {PolicyKind::FCFS, PolicyKind::PS, PolicyKind::LCFS_PR}) {
    OpenNetworkModel m;
    m.node_count = 1;
    m.type_count = 1;
    m.routes = {{1, {1, 1}}};  // consecutive stages at the same node
    m.nu = {0.3};
    m.policies = {builtin_policy(kind)};
    m.sim_capacity = {12};
    auto sample = interior_states(m, 4, 1);
    CHECK(sample.size() == 31);  // 2^0 + ... + 2^4
    BalanceReport report = balance_check(m, sample, 1);
    CHECK(report.max_relative_residual <= 1e-12);
  }
}

TEST_CASE("a bypassed node contributes no states and no residual") {
  OpenNetworkModel m = testutil::make_revisit();
  m.routes[1].nodes = {2};  // node 3 never visited
  auto sample = interior_states(m, 2, 1);
  for (const auto& C : sample) CHECK(C.length(3) == 0);
  // alphabet sizes 2, 2, 0: 1 + (2 + 2) + (4 + 4 + 4) = 17 states
  CHECK(sample.size() == 17);
  BalanceReport report = balance_check(m, sample, 1);
  CHECK(report.states_checked == 17);
  CHECK(report.max_relative_residual <= 1e-12);
}

TEST_CASE("position-dependent rates under FCFS break the product form, and the report says so") {
  OpenNetworkModel m = testutil::make_mm1(0.5);
  m.policies = {builtin_policy(PolicyKind::FCFS, {2.0}, 1.0)};
  auto sample = interior_states(m, 4, 1);
  BalanceReport report = balance_check(m, sample, 1, true);
  CHECK(report.max_relative_residual > 0.01);  // recorded, not an error
  CHECK(report.residuals.size() == sample.size());
  CHECK(report.worst_state.total_customers() > 0);
}

TEST_CASE("explicit tables reproducing processor sharing keep their balance") {
  ServicePolicy pol;
  pol.kind = PolicyKind::EXPLICIT;
  pol.mu_default = 1.0;
  for (int n = 1; n <= 8; ++n) {
    std::vector<double> row(static_cast<std::size_t>(n), 1.0 / n);
    pol.gamma_rows.push_back(row);
    pol.delta_rows.push_back(row);
  }
  OpenNetworkModel m;
  m.node_count = 1;
  m.type_count = 2;
  m.routes = {{1, {1}}, {2, {1}}};
  m.nu = {0.3, 0.25};
  m.policies = {pol};
  m.sim_capacity = {6};
  REQUIRE(validate_open(m).empty());
  BalanceReport report = balance_check(m, interior_states(m, 4, 1), 1);
  CHECK(report.max_relative_residual <= 1e-12);
}

TEST_CASE("oracle handles two independent chains") {
  ClosedNetworkModel m;
  m.node_count = 3;
  m.type_count = 2;
  m.mu = {1.0, 2.0, 1.0};
  m.switches = {{1, 1, 2, 1, 1.0}, {2, 1, 1, 1, 1.0}, {2, 2, 3, 2, 1.0}, {3, 2, 2, 2, 1.0}};
  m.chains = derive_chains(m.switches);
  m.populations = {{1, 1}, {2, 2}};
  OracleResult oracle = closed_oracle(m);
  CHECK(oracle.stationary_residual_inf <= 1e-10);
  CHECK(oracle.max_abs_diff <= 1e-10);
}

TEST_CASE("balance report is independent of the sample order") {
  OpenNetworkModel m = testutil::make_revisit();
  auto sample = interior_states(m, 3, 1);
  BalanceReport forward = balance_check(m, sample, 1);
  std::mt19937 shuffle_rng(99);
  std::shuffle(sample.begin(), sample.end(), shuffle_rng);
  BalanceReport shuffled = balance_check(m, sample, 1);
  CHECK(forward.max_relative_residual == shuffled.max_relative_residual);
}

TEST_CASE("states outside the interior window are refused") {
  OpenNetworkModel m = testutil::make_mm1(0.3, 1.0, 3);
  DetailedState full = empty_state(m);
  full.queues[0] = {{1, 1}, {1, 1}, {1, 1}};  // length == cap
  CHECK_THROWS_AS(balance_check(m, {full}, 1), std::invalid_argument);
  CHECK_THROWS_AS(interior_states(m, 3, 0), std::invalid_argument);
}

TEST_CASE("oracle matches the product form on the symmetric cycle") {
  OracleResult oracle = closed_oracle(testutil::make_cycle2());
  CHECK(oracle.ordered_state_count == 3);
  CHECK(oracle.stationary_residual_inf <= 1e-12);
  CHECK(oracle.max_abs_diff <= 1e-12);
  for (double p : oracle.aggregated) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("oracle matches the asymmetric tandem") {
  OracleResult oracle = closed_oracle(testutil::make_tandem12());
  REQUIRE(oracle.aggregated.size() == 3);
  CHECK(oracle.aggregated[0] == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(oracle.aggregated[1] == doctest::Approx(2.0 / 7.0).epsilon(1e-12));
  CHECK(oracle.aggregated[2] == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
  CHECK(oracle.max_abs_diff <= 1e-12);
}

TEST_CASE("oracle adjudicates the class-switching weight convention") {
  OracleResult oracle = closed_oracle(testutil::make_switch2());
  CHECK(oracle.stationary_residual_inf <= 1e-10);
  CHECK(oracle.max_abs_diff <= 1e-10);
}

TEST_CASE("oracle agrees with the product form on a mixing three-node model") {
  OracleResult oracle = closed_oracle(make_mixing3());
  CHECK(oracle.stationary_residual_inf <= 1e-10);
  CHECK(oracle.max_abs_diff <= 1e-10);
  CHECK(oracle.ordered_state_count > 20);
}

TEST_CASE("oracle at a few thousand ordered states, through the iterative branch") {
  ClosedNetworkModel m = make_mixing3(8);  // 4097 ordered states, above the dense threshold
  OracleOptions opts;
  opts.cap = 100'000;
  OracleResult oracle = closed_oracle(m, opts);
  CHECK(oracle.ordered_state_count == 4097);
  CHECK(oracle.stationary_residual_inf <= 1e-10);
  CHECK(oracle.max_abs_diff <= 1e-10);
}

TEST_CASE("the iterative solve branch agrees with the dense branch") {
  ClosedNetworkModel m = make_mixing3();
  OracleResult dense = closed_oracle(m);
  OracleOptions opts;
  opts.dense_threshold = 1;  // force the sparse/iterative path
  OracleResult sparse = closed_oracle(m, opts);
  REQUIRE(dense.aggregated.size() == sparse.aggregated.size());
  for (std::size_t k = 0; k < dense.aggregated.size(); ++k)
    CHECK(sparse.aggregated[k] == doctest::Approx(dense.aggregated[k]).epsilon(1e-10));
  CHECK(sparse.stationary_residual_inf <= 1e-10);
}

TEST_CASE("the ordered-state cap is enforced") {
  OracleOptions opts;
  opts.cap = 2;
  CHECK_THROWS_AS(closed_oracle(testutil::make_cycle2(), opts), StateSpaceTooLargeError);
}

TEST_CASE("independence of queue lengths in a tandem") {
  OpenNetworkModel m;
  m.node_count = 2;
  m.type_count = 1;
  m.routes = {{1, {1, 2}}};
  m.nu = {0.4};
  m.policies = {builtin_policy(PolicyKind::FCFS), builtin_policy(PolicyKind::FCFS)};

  CHECK(independence_check(m, 1, 2, 4) <= 1e-12);

  // Spot value: P[N_1 = 1, N_2 = 1] = (0.6 * 0.4)^2.
  OpenEquilibrium eq = make_open_equilibrium(m);
  DetailedState C = empty_state(m);
  C.queues[0] = {{1, 1}};
  C.queues[1] = {{1, 2}};
  CHECK(state_probability(m, eq, C) == doctest::Approx(0.0576).epsilon(1e-13));
}

TEST_CASE("independence across every pair of the revisit network") {
  IndependenceReport report = independence_check_all(testutil::make_revisit(), 5);
  CHECK(report.pairs.size() == 3);
  CHECK(report.max_abs_error <= 1e-12);
}

TEST_CASE("independence at n_bound zero is the trivial identity") {
  OpenNetworkModel m = testutil::make_revisit();
  CHECK(independence_check(m, 1, 2, 0) <= 1e-15);
  CHECK_THROWS_AS(independence_check(m, 1, 1, 2), std::invalid_argument);
}
