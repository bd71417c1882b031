// Acceptance suite: one binary, one printed line per criterion. Exits with
// the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "helpers.hpp"
#include "json.hpp"
#include "kellynet/cli.hpp"
#include "kellynet/closed_solver.hpp"
#include "kellynet/model_io.hpp"
#include "kellynet/open_solver.hpp"
#include "kellynet/simulator.hpp"
#include "kellynet/verifier.hpp"

namespace fs = std::filesystem;
using namespace kellynet;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", number, name.c_str(),
              detail.c_str());
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string model_path(const char* name) { return (testutil::models_dir() / name).string(); }

OpenNetworkModel load_open(const char* name) {
  return std::get<OpenNetworkModel>(load_model_file(testutil::models_dir() / name));
}

ClosedNetworkModel load_closed(const char* name) {
  return std::get<ClosedNetworkModel>(load_model_file(testutil::models_dir() / name));
}

// 1. Single FCFS queue, nu = 0.3, mu = 1: pmf(n) = 0.7 * 0.3^n to 1e-14,
//    through the CLI, in under a second.
void criterion_1() {
  auto start = Clock::now();
  auto dir = testutil::make_temp_dir("acc1");
  int rc = cli::run({"analyze-open", "--model", model_path("mm1.json"), "--out", dir.string(),
                     "--nmax", "20"});
  double max_err = 1.0;
  if (rc == cli::kExitOk) {
    auto report_json = nlohmann::json::parse(testutil::slurp(dir / "equilibrium.json"));
    max_err = 0.0;
    for (int n = 0; n <= 20; ++n) {
      double got = report_json["nodes"][0]["pmf"][n].get<double>();
      max_err = std::max(max_err, std::abs(got - 0.7 * std::pow(0.3, n)));
    }
  }
  double elapsed = seconds_since(start);
  bool pass = rc == cli::kExitOk && max_err <= 1e-14 && elapsed < 1.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "max |pmf - 0.7*0.3^n| = %.3g, tolerance 1e-14; %.2fs",
                max_err, elapsed);
  report(1, "geometric reduction of the single queue", pass, detail);
}

// 2. Global balance on the revisit network under FCFS and PS, all interior
//    states with <= 4 customers, residual <= 1e-10, under 30 s.
void criterion_2() {
  auto start = Clock::now();
  double worst = 0.0;
  std::size_t states = 0;
  for (const char* name : {"revisit3.json", "revisit3_ps.json"}) {
    OpenNetworkModel m = load_open(name);
    auto sample = interior_states(m, 4, 1);
    BalanceReport balance = balance_check(m, sample, 1);
    worst = std::max(worst, balance.max_relative_residual);
    states += balance.states_checked;
  }
  double elapsed = seconds_since(start);
  bool pass = worst <= 1e-10 && elapsed < 30.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "max relative residual %.3g over %zu states (FCFS + PS), tolerance 1e-10; %.2fs",
                worst, states, elapsed);
  report(2, "global balance of the detailed chain", pass, detail);
}

// Shared simulation runs for criteria 3 and 4.
struct SimRuns {
  OpenNetworkModel revisit;
  OccupancyStats revisit_stats;
  OpenNetworkModel mm1;
  OccupancyStats mm1_stats;
  double elapsed = 0.0;
};

SimRuns run_simulations() {
  SimRuns runs;
  auto start = Clock::now();
  SimConfig cfg;
  cfg.seed = 20250811;
  cfg.horizon = 1e5;
  cfg.warmup = 1e3;
  cfg.replications = 5;
  cfg.threads = 0;  // all cores
  runs.revisit = load_open("revisit3.json");
  runs.revisit_stats = simulate_open(runs.revisit, cfg);
  runs.mm1 = load_open("mm1.json");
  runs.mm1_stats = simulate_open(runs.mm1, cfg);
  runs.elapsed = seconds_since(start);
  return runs;
}

// 3. Composition at the revisited node: stages 1 and 3 each carry share 0.5
//    exactly in the analytic law and within 0.02 empirically.
void criterion_3(const SimRuns& runs) {
  VisitRates rates = visit_rates(runs.revisit);
  double a1 = composition_probability(rates, 1, 1, 1);
  double a3 = composition_probability(rates, 1, 1, 3);
  double e1 = runs.revisit_stats.empirical_share(1, 1, 1);
  double e3 = runs.revisit_stats.empirical_share(1, 1, 3);
  bool pass = a1 == 0.5 && a3 == 0.5 && std::abs(e1 - 0.5) <= 0.02 && std::abs(e3 - 0.5) <= 0.02;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "analytic shares %.17g/%.17g, empirical %.4f/%.4f, tolerance 0.02", a1, a3, e1, e3);
  report(3, "composition probabilities at the revisited node", pass, detail);
}

// 4. Simulation vs analytic pmf: TV <= 0.02 per node on both models, total
//    simulation time under 60 s.
void criterion_4(const SimRuns& runs) {
  double worst = 0.0;
  std::vector<std::pair<const OpenNetworkModel*, const OccupancyStats*>> pairs = {
      {&runs.mm1, &runs.mm1_stats}, {&runs.revisit, &runs.revisit_stats}};
  for (const auto& [model, stats] : pairs) {
    int cap_max = 0;
    for (int j = 1; j <= model->node_count; ++j) cap_max = std::max(cap_max, model->capacity(j));
    ComparisonReport cmp = compare_to_analytic(*stats, build_equilibrium_report(*model, cap_max));
    worst = std::max(worst, cmp.max_tv);
  }
  bool pass = worst <= 0.02 && runs.elapsed < 60.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "max TV %.4f, tolerance 0.02; simulations took %.2fs",
                worst, runs.elapsed);
  report(4, "simulated occupancy matches the analytic pmfs", pass, detail);
}

// 5. Closed-network oracle on the three bundled models, 1e-10, under 10 s.
void criterion_5() {
  auto start = Clock::now();
  double worst_diff = 0.0, worst_residual = 0.0;
  for (const char* name : {"cycle2.json", "tandem12.json", "switch2.json"}) {
    OracleResult oracle = closed_oracle(load_closed(name));
    worst_diff = std::max(worst_diff, oracle.max_abs_diff);
    worst_residual = std::max(worst_residual, oracle.stationary_residual_inf);
  }
  double elapsed = seconds_since(start);
  bool pass = worst_diff <= 1e-10 && worst_residual <= 1e-10 && elapsed < 10.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "max |oracle - product form| = %.3g, residual %.3g, tolerance 1e-10; %.2fs",
                worst_diff, worst_residual, elapsed);
  report(5, "exact chain oracle confirms the closed product form", pass, detail);
}

// 6. Traffic equations: residual <= 1e-10; scaling one chain's rates by 10
//    leaves the stationary law unchanged to 1e-12.
void criterion_6() {
  double worst_residual = 0.0, worst_shift = 0.0;
  for (const char* name : {"cycle2.json", "tandem12.json", "switch2.json"}) {
    ClosedNetworkModel m = load_closed(name);
    StationaryDistribution base = stationary_distribution(m);
    worst_residual = std::max(worst_residual, base.traffic.residual);
    TrafficSolution scaled = base.traffic;
    auto [begin, end] = scaled.chain_spans[0];
    for (std::size_t k = begin; k < end; ++k) scaled.alpha[k] *= 10.0;
    StationaryDistribution rescaled = stationary_with_traffic(m, scaled);
    for (std::size_t k = 0; k < base.p.size(); ++k)
      worst_shift = std::max(worst_shift, std::abs(rescaled.p[k] - base.p[k]));
  }
  bool pass = worst_residual <= 1e-10 && worst_shift <= 1e-12;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "max residual %.3g (tol 1e-10); max shift under x10 scaling %.3g (tol 1e-12)",
                worst_residual, worst_shift);
  report(6, "traffic equations and scale invariance", pass, detail);
}

// 7. Fixed-seed simulation produces byte-identical statistics files.
void criterion_7() {
  auto dir_a = testutil::make_temp_dir("acc7a");
  auto dir_b = testutil::make_temp_dir("acc7b");
  std::vector<std::string> base = {"simulate", "--model", model_path("mm1.json"),
                                   "--seed", "123", "--horizon", "2000", "--warmup", "100",
                                   "--reps", "2"};
  auto args_a = base;
  args_a.insert(args_a.end(), {"--out", dir_a.string()});
  auto args_b = base;
  args_b.insert(args_b.end(), {"--out", dir_b.string()});
  int rc_a = cli::run(args_a);
  int rc_b = cli::run(args_b);
  bool same_json = testutil::slurp(dir_a / "stats.json") == testutil::slurp(dir_b / "stats.json");
  bool same_csv = testutil::slurp(dir_a / "hist.csv") == testutil::slurp(dir_b / "hist.csv");
  bool pass = rc_a == cli::kExitOk && rc_b == cli::kExitOk && same_json && same_csv;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "stats.json identical: %s, hist.csv identical: %s",
                same_json ? "yes" : "no", same_csv ? "yes" : "no");
  report(7, "byte-identical statistics under a fixed seed", pass, detail);
}

// 8. Queue-length independence across every node pair, n <= 5, error <= 1e-12.
void criterion_8() {
  double worst = 0.0;
  for (const char* name : {"mm1.json", "revisit3.json", "revisit3_ps.json"}) {
    OpenNetworkModel m = load_open(name);
    if (m.node_count < 2) continue;  // no pairs in the single queue
    IndependenceReport report_pairs = independence_check_all(m, 5);
    worst = std::max(worst, report_pairs.max_abs_error);
  }
  bool pass = worst <= 1e-12;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "max factorization error %.3g, tolerance 1e-12", worst);
  report(8, "product-form independence of queue lengths", pass, detail);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  SimRuns runs = run_simulations();
  criterion_3(runs);
  criterion_4(runs);
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  if (g_failures == 0)
    std::printf("acceptance: all 8 criteria passed\n");
  else
    std::printf("acceptance: %d criterion(s) failed\n", g_failures);
  return g_failures;
}
