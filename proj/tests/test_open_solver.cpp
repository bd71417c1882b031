#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "json.hpp"
#include "kellynet/errors.hpp"
#include "kellynet/open_solver.hpp"

using namespace kellynet;

namespace {

// Two nodes, one type revisiting node 1 at stages 1 and 3.
OpenNetworkModel make_two_node_revisit(double nu = 0.5) {
  OpenNetworkModel m;
  m.node_count = 2;
  m.type_count = 1;
  m.routes = {{1, {1, 2, 1}}};
  m.nu = {nu};
  m.policies = {builtin_policy(PolicyKind::FCFS, {}, 2.0), builtin_policy(PolicyKind::FCFS, {}, 2.0)};
  return m;
}

// Raw-summation oracle for the normalizing constant: no closed-form tail.
double normalizer_by_raw_sum(double b, const ServicePolicy& pol, int terms) {
  double inv = 0.0;
  double t = 1.0;
  inv += t;
  for (int n = 1; n <= terms; ++n) {
    t *= b / pol.mu(n);
    inv += t;
  }
  return 1.0 / inv;
}

// Marginal P[N_j = n] rebuilt from the detailed densities by summing over all
// tag sequences of length n at node j, other nodes empty.
double marginal_by_sequence_sum(const OpenNetworkModel& m, const OpenEquilibrium& eq, int node,
                                int n) {
  auto alphabet = node_tag_alphabet(m, node);
  if (n > 0 && alphabet.empty()) return 0.0;
  double other_B = 1.0;
  for (int j = 1; j <= m.node_count; ++j)
    if (j != node) other_B *= eq.normalizers[static_cast<std::size_t>(j) - 1].B;

  double sum = 0.0;
  std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
  bool done = false;
  while (!done) {
    DetailedState C = empty_state(m);
    auto& q = C.queues[static_cast<std::size_t>(node) - 1];
    q.resize(static_cast<std::size_t>(n));
    for (std::size_t p = 0; p < idx.size(); ++p) q[p] = alphabet[idx[p]];
    sum += state_probability(m, eq, C);
    done = true;
    for (std::size_t p = idx.size(); p-- > 0;) {
      if (++idx[p] < alphabet.size()) {
        done = false;
        break;
      }
      idx[p] = 0;
    }
  }
  return sum / other_B;
}

}  // namespace

TEST_CASE("visit rates: a revisiting route loads its node once per stage") {
  OpenNetworkModel m = make_two_node_revisit();
  VisitRates vr = visit_rates(m);
  CHECK(vr.alpha(1, 1, 1) == 0.5);
  CHECK(vr.alpha(1, 1, 3) == 0.5);
  CHECK(vr.alpha(2, 1, 2) == 0.5);
  CHECK(vr.alpha(1, 1, 2) == 0.0);
  CHECK(vr.b[0] == doctest::Approx(1.0));
  CHECK(vr.b[1] == doctest::Approx(0.5));
}

TEST_CASE("visit rates superpose across types") {
  OpenNetworkModel m = testutil::make_mm1();
  m.type_count = 2;
  m.routes = {{1, {1}}, {2, {1}}};
  m.nu = {0.3, 0.2};
  VisitRates vr = visit_rates(m);
  CHECK(vr.b[0] == doctest::Approx(0.5));
}

TEST_CASE("visit rates vanish off-route") {
  OpenNetworkModel m = testutil::make_revisit();
  VisitRates vr = visit_rates(m);
  CHECK(vr.alpha(3, 1, 1) == 0.0);
  CHECK(vr.alpha(3, 1, 2) == 0.0);
  CHECK(vr.alpha(3, 1, 3) == 0.0);
  CHECK(vr.b[2] == doctest::Approx(0.2));
}

TEST_CASE("node normalizer: constant-rate geometric case") {
  NodeNormalizer nn = node_normalizer(0.3, builtin_policy(PolicyKind::FCFS, {}, 1.0));
  CHECK(nn.B == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(nn.tail_bound == 0.0);
}

TEST_CASE("node normalizer: table plus geometric tail, against the raw-sum oracle") {
  ServicePolicy pol = builtin_policy(PolicyKind::FCFS, {2.0}, 1.0);
  NodeNormalizer nn = node_normalizer(0.5, pol);
  CHECK(nn.B == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(nn.B == doctest::Approx(normalizer_by_raw_sum(0.5, pol, 200)).epsilon(1e-14));
  CHECK(nn.truncation_n == 1);
}

TEST_CASE("node normalizer diverges at the stability boundary") {
  CHECK_THROWS_AS(node_normalizer(1.0, builtin_policy(PolicyKind::FCFS, {}, 1.0)),
                  InstabilityError);
  CHECK_THROWS_AS(node_normalizer(1.2, builtin_policy(PolicyKind::FCFS, {}, 1.0)),
                  InstabilityError);
}

TEST_CASE("queue length pmf reduces to the geometric law") {
  OpenNetworkModel m = testutil::make_mm1();
  QueueLengthPmf pmf = queue_length_pmf(m, 1, 20);
  for (int n = 0; n <= 20; ++n)
    CHECK(pmf.p[static_cast<std::size_t>(n)] ==
          doctest::Approx(0.7 * std::pow(0.3, n)).epsilon(1e-13));
  double total = pmf.tail;
  for (double p : pmf.p) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("queue length pmf with a rate table") {
  OpenNetworkModel m = testutil::make_mm1(0.5);
  m.policies = {builtin_policy(PolicyKind::FCFS, {2.0}, 1.0)};
  QueueLengthPmf pmf = queue_length_pmf(m, 1, 4);
  CHECK(pmf.p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(pmf.p[1] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(pmf.p[2] == doctest::Approx(1.0 / 12.0).epsilon(1e-14));
  double total = pmf.tail;
  for (double p : pmf.p) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pmf at zero equals the normalizer; short pmfs report the tail") {
  OpenNetworkModel m = testutil::make_mm1(0.5);
  m.policies = {builtin_policy(PolicyKind::FCFS, {2.0, 3.0, 1.5}, 1.0)};
  QueueLengthPmf pmf = queue_length_pmf(m, 1, 1);  // n_max below the table size
  NodeNormalizer nn = node_normalizer(0.5, m.policy(1));
  CHECK(pmf.p[0] == nn.B);
  double total = pmf.tail + pmf.p[0] + pmf.p[1];
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("composition probabilities") {
  OpenNetworkModel m = make_two_node_revisit();
  VisitRates vr = visit_rates(m);
  CHECK(composition_probability(vr, 1, 1, 1) == 0.5);
  CHECK(composition_probability(vr, 1, 1, 3) == 0.5);
  CHECK(composition_probability(vr, 2, 1, 2) == 1.0);

  OpenNetworkModel two = testutil::make_mm1();
  two.type_count = 2;
  two.routes = {{1, {1}}, {2, {1}}};
  two.nu = {0.3, 0.2};
  VisitRates vr2 = visit_rates(two);
  CHECK(composition_probability(vr2, 1, 1, 1) == doctest::Approx(0.6));
  CHECK(composition_probability(vr2, 1, 2, 1) == doctest::Approx(0.4));

  OpenNetworkModel revisit = testutil::make_revisit();
  VisitRates vr3 = visit_rates(revisit);
  double sum = 0.0;
  for (const auto& [i, s, rate] : vr3.support[1]) sum += composition_probability(vr3, 2, i, s);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("composition is undefined at a never-visited node") {
  OpenNetworkModel m = testutil::make_revisit();
  m.routes[1].nodes = {2};  // node 3 now unused
  VisitRates vr = visit_rates(m);
  CHECK_THROWS_AS(composition_probability(vr, 3, 1, 1), std::domain_error);
}

TEST_CASE("detailed state probability") {
  OpenNetworkModel m = testutil::make_mm1();
  OpenEquilibrium eq = make_open_equilibrium(m);
  CHECK(state_probability(m, eq, empty_state(m)) == doctest::Approx(0.7).epsilon(1e-14));

  DetailedState two = empty_state(m);
  two.queues[0] = {{1, 1}, {1, 1}};
  CHECK(state_probability(m, eq, two) == doctest::Approx(0.063).epsilon(1e-13));
  CHECK(detailed_state_probability(m, two) == doctest::Approx(0.063).epsilon(1e-13));
}

TEST_CASE("product form factorizes across nodes") {
  OpenNetworkModel m = testutil::make_revisit();
  OpenEquilibrium eq = make_open_equilibrium(m);
  double all_B = 1.0;
  for (const auto& nn : eq.normalizers) all_B *= nn.B;

  DetailedState only1 = empty_state(m);
  only1.queues[0] = {{1, 1}, {1, 3}};
  DetailedState only2 = empty_state(m);
  only2.queues[1] = {{2, 1}};
  DetailedState both = empty_state(m);
  both.queues[0] = {{1, 1}, {1, 3}};
  both.queues[1] = {{2, 1}};

  double lhs = state_probability(m, eq, only1) * state_probability(m, eq, only2) / all_B;
  CHECK(lhs == doctest::Approx(state_probability(m, eq, both)).epsilon(1e-12));
}

TEST_CASE("detailed densities aggregate to the queue-length pmf") {
  OpenNetworkModel m = testutil::make_revisit();
  OpenEquilibrium eq = make_open_equilibrium(m);
  for (int j = 1; j <= m.node_count; ++j) {
    QueueLengthPmf pmf = queue_length_pmf(m, j, 5);
    for (int n = 0; n <= 5; ++n) {
      double rebuilt = marginal_by_sequence_sum(m, eq, j, n);
      CHECK(rebuilt == doctest::Approx(pmf.p[static_cast<std::size_t>(n)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("the equilibrium never depends on the service discipline") {
  OpenNetworkModel fcfs = testutil::make_revisit(PolicyKind::FCFS);
  OpenNetworkModel ps = testutil::make_revisit(PolicyKind::PS);
  OpenNetworkModel lcfs = testutil::make_revisit(PolicyKind::LCFS_PR);

  EquilibriumReport a = build_equilibrium_report(fcfs, 20);
  for (const OpenNetworkModel* m : {&ps, &lcfs}) {
    EquilibriumReport b = build_equilibrium_report(*m, 20);
    for (int j = 0; j < 3; ++j) {
      CHECK(a.nodes[j].b == b.nodes[j].b);        // bitwise
      CHECK(a.nodes[j].B == b.nodes[j].B);        // bitwise
      CHECK(a.nodes[j].pmf == b.nodes[j].pmf);    // bitwise
      CHECK(a.nodes[j].pmf_tail == b.nodes[j].pmf_tail);
    }
  }
}

TEST_CASE("raising an arrival rate strictly lowers the route's normalizers") {
  OpenNetworkModel base = testutil::make_revisit();
  OpenNetworkModel hotter = testutil::make_revisit();
  hotter.nu[0] = 0.35;
  OpenEquilibrium eq0 = make_open_equilibrium(base);
  OpenEquilibrium eq1 = make_open_equilibrium(hotter);
  // type 1 visits nodes 1 and 2
  CHECK(eq1.normalizers[0].B < eq0.normalizers[0].B);
  CHECK(eq1.normalizers[1].B < eq0.normalizers[1].B);
  CHECK(eq1.normalizers[2].B == eq0.normalizers[2].B);  // node 3 untouched
}

TEST_CASE("instability lists every offending node") {
  OpenNetworkModel m = testutil::make_revisit();
  m.nu = {1.2, 0.9};  // b = (2.4, 2.1, 0.9) against mu* = 1
  try {
    make_open_equilibrium(m);
    FAIL("expected InstabilityError");
  } catch (const InstabilityError& e) {
    CHECK(e.nodes() == std::vector<int>{1, 2});
  }
}

TEST_CASE("report JSON round-trips numbers exactly") {
  EquilibriumReport rep = build_equilibrium_report(testutil::make_mm1(), 10);
  std::ostringstream ss;
  write_equilibrium_json(rep, ss);
  auto parsed = nlohmann::json::parse(ss.str());
  CHECK(parsed["nodes"][0]["B"].get<double>() == rep.nodes[0].B);
  CHECK(parsed["nodes"][0]["pmf"][3].get<double>() == rep.nodes[0].pmf[3]);
  CHECK(parsed["nodes"][0]["composition"]["(1,1)"].get<double>() == 1.0);

  std::ostringstream csv;
  write_equilibrium_csv(rep, csv);
  CHECK(csv.str().rfind("node,n,p\n", 0) == 0);
}
