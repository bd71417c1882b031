#include "kellynet/cli.hpp"

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <variant>

#include "CLI11.hpp"
#include "kellynet/chain.hpp"
#include "kellynet/closed_solver.hpp"
#include "kellynet/errors.hpp"
#include "kellynet/json_writer.hpp"
#include "kellynet/model_io.hpp"
#include "kellynet/open_solver.hpp"
#include "kellynet/simulator.hpp"
#include "kellynet/verifier.hpp"

namespace kellynet::cli {

namespace {

namespace fs = std::filesystem;

constexpr double kBalanceThreshold = 1e-10;
constexpr double kIndependenceThreshold = 1e-12;
constexpr double kOracleThreshold = 1e-10;

struct CommonOpts {
  std::string model_path;
  std::string out_dir = ".";
  std::string format = "both";  // json | csv | both

  bool want_json() const { return format != "csv"; }
  bool want_csv() const { return format != "json"; }
};

struct Manifest {
  std::string command;
  std::string model_path;
  std::uint64_t model_file_hash = 0;
  std::uint64_t model_identity_hash = 0;
  std::vector<std::pair<std::string, std::string>> flags;
  bool has_seed = false;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;
};

std::string utc_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void atomic_write(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

/// Renders a report through `writer` and writes it atomically.
template <typename Writer>
void emit(Manifest& manifest, const fs::path& out_dir, const std::string& name, Writer writer) {
  std::ostringstream ss;
  writer(ss);
  atomic_write(out_dir / name, ss.str());
  manifest.outputs.push_back(name);
}

void write_manifest(const Manifest& mf, const fs::path& out_dir) {
  std::ostringstream ss;
  JsonWriter w(ss);
  w.begin_object();
  w.field("tool", kToolName);
  w.field("version", kToolVersion);
  w.field("command", mf.command);
  w.field("model_file", mf.model_path);
  w.field("model_file_hash", hash_hex(mf.model_file_hash));
  w.field("model_hash", hash_hex(mf.model_identity_hash));
  w.key("flags").begin_object();
  for (const auto& [k, v] : mf.flags) w.field(k, v);
  w.end_object();
  if (mf.has_seed) {
    w.field("seed", mf.seed);
    w.key("rng").begin_object();
    w.field("name", kRngName);
    w.field("substreams", kRngSubstreamScheme);
    w.end_object();
  }
  w.field("started_at", mf.started_at);
  w.field("finished_at", mf.finished_at);
  w.key("outputs").begin_array();
  for (const auto& o : mf.outputs) w.value(o);
  w.end_array();
  w.end_object();
  ss << "\n";
  atomic_write(out_dir / "manifest.json", ss.str());
}

int env_threads() {
  const char* env = std::getenv("KELLYNET_THREADS");
  if (!env) return 0;
  int n = std::atoi(env);
  return n > 0 ? n : 1;
}

std::string fmt_double_flag(double v) { return format_double(v); }

int validate_and_report(const AnyModel& model) {
  std::vector<Violation> violations;
  if (std::holds_alternative<OpenNetworkModel>(model))
    violations = validate_open(std::get<OpenNetworkModel>(model));
  else
    violations = validate_closed(std::get<ClosedNetworkModel>(model));
  if (!violations.empty()) {
    std::cerr << "model validation failed:\n";
    for (const auto& v : violations) std::cerr << "  " << v.format() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

int load_model(const CommonOpts& common, AnyModel& model, std::string& bytes) {
  try {
    bytes = read_text_file(common.model_path);
    model = parse_model_text(bytes);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  }
  return validate_and_report(model);
}

int cmd_analyze_open(const CommonOpts& common, int n_max) {
  AnyModel any;
  std::string bytes;
  if (int rc = load_model(common, any, bytes); rc != kExitOk) return rc;
  if (!std::holds_alternative<OpenNetworkModel>(any)) {
    std::cerr << "analyze-open requires a model of kind \"open\"\n";
    return kExitValidation;
  }
  const auto& m = std::get<OpenNetworkModel>(any);

  Manifest mf;
  mf.command = "analyze-open";
  mf.model_path = common.model_path;
  mf.model_file_hash = fnv1a64(bytes);
  mf.model_identity_hash = model_hash(m);
  mf.flags = {{"out", common.out_dir}, {"format", common.format}, {"nmax", std::to_string(n_max)}};
  mf.started_at = utc_now();

  EquilibriumReport report;
  try {
    report = build_equilibrium_report(m, n_max);
  } catch (const InstabilityError& e) {
    std::cerr << e.what() << "\n";
    return kExitInstability;
  }

  fs::path out_dir(common.out_dir);
  fs::create_directories(out_dir);
  if (common.want_json())
    emit(mf, out_dir, "equilibrium.json", [&](std::ostream& os) { write_equilibrium_json(report, os); });
  if (common.want_csv())
    emit(mf, out_dir, "pmf.csv", [&](std::ostream& os) { write_equilibrium_csv(report, os); });
  mf.finished_at = utc_now();
  write_manifest(mf, out_dir);
  std::cout << "analyze-open: " << m.node_count << " node(s), all stable; wrote "
            << mf.outputs.size() + 1 << " file(s) to " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_analyze_closed(const CommonOpts& common, std::uint64_t enum_cap) {
  AnyModel any;
  std::string bytes;
  if (int rc = load_model(common, any, bytes); rc != kExitOk) return rc;
  if (!std::holds_alternative<ClosedNetworkModel>(any)) {
    std::cerr << "analyze-closed requires a model of kind \"closed\"\n";
    return kExitValidation;
  }
  const auto& m = std::get<ClosedNetworkModel>(any);

  Manifest mf;
  mf.command = "analyze-closed";
  mf.model_path = common.model_path;
  mf.model_file_hash = fnv1a64(bytes);
  mf.model_identity_hash = model_hash(m);
  mf.flags = {{"out", common.out_dir},
              {"format", common.format},
              {"enum-cap", std::to_string(enum_cap)}};
  mf.started_at = utc_now();

  StationaryDistribution dist;
  try {
    dist = stationary_distribution(m, enum_cap);
  } catch (const ReducibleChainError& e) {
    std::cerr << e.what() << "\n";
    return kExitReducibleChain;
  } catch (const StateSpaceTooLargeError& e) {
    std::cerr << e.what() << "\n";
    return kExitStateSpaceCap;
  }

  fs::path out_dir(common.out_dir);
  fs::create_directories(out_dir);
  if (common.want_json())
    emit(mf, out_dir, "stationary.json",
         [&](std::ostream& os) { write_stationary_json(dist, m, os); });
  if (common.want_csv())
    emit(mf, out_dir, "stationary.csv", [&](std::ostream& os) { write_stationary_csv(dist, m, os); });
  mf.finished_at = utc_now();
  write_manifest(mf, out_dir);
  std::cout << "analyze-closed: " << dist.states.size() << " state(s), B_N = "
            << format_double(dist.B_N) << ", traffic residual " << format_double(dist.traffic.residual)
            << "; wrote " << mf.outputs.size() + 1 << " file(s) to " << out_dir.string() << "\n";
  return kExitOk;
}

struct SimulateFlags {
  bool seed_given = false;
  std::uint64_t seed = 0;
  double horizon = 1e5;
  double warmup = 1e3;
  int reps = 1;
  bool compare = false;
  bool allow_unstable = false;
  std::string trajectory_path;
};

int cmd_simulate(const CommonOpts& common, SimulateFlags flags) {
  if (!(flags.horizon > flags.warmup) || flags.warmup < 0.0 || flags.reps < 1) {
    std::cerr << "usage error: require --horizon > --warmup >= 0 and --reps >= 1\n";
    return kExitUsage;
  }
  AnyModel any;
  std::string bytes;
  if (int rc = load_model(common, any, bytes); rc != kExitOk) return rc;

  if (!flags.seed_given) {
    std::random_device rd;
    flags.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }

  SimConfig cfg;
  cfg.seed = flags.seed;
  cfg.horizon = flags.horizon;
  cfg.warmup = flags.warmup;
  cfg.replications = flags.reps;
  cfg.allow_unstable = flags.allow_unstable;
  cfg.threads = env_threads();

  Manifest mf;
  mf.command = "simulate";
  mf.model_path = common.model_path;
  mf.model_file_hash = fnv1a64(bytes);
  mf.flags = {{"out", common.out_dir},
              {"format", common.format},
              {"horizon", fmt_double_flag(flags.horizon)},
              {"warmup", fmt_double_flag(flags.warmup)},
              {"reps", std::to_string(flags.reps)},
              {"compare", flags.compare ? "true" : "false"}};
  mf.has_seed = true;
  mf.seed = flags.seed;
  mf.started_at = utc_now();

  fs::path out_dir(common.out_dir);
  fs::create_directories(out_dir);

  OccupancyStats stats;
  ComparisonReport comparison;
  bool have_comparison = false;
  try {
    if (std::holds_alternative<OpenNetworkModel>(any)) {
      const auto& m = std::get<OpenNetworkModel>(any);
      mf.model_identity_hash = model_hash(m);

      std::ofstream traj;
      TrajectoryObserver observer;
      if (!flags.trajectory_path.empty()) {
        traj.open(out_dir / flags.trajectory_path, std::ios::trunc);
        if (!traj) throw std::runtime_error("cannot write trajectory file");
        observer = [&traj](int rep, double t, const DetailedState& state) {
          JsonWriter w(traj, -1);
          w.begin_object();
          w.field("replication", rep + 1);
          w.field("t", t);
          w.key("state");
          write_state_json(w, state);
          w.end_object();
          traj << "\n";
        };
      }
      stats = simulate_open(m, cfg, observer);
      if (!flags.trajectory_path.empty()) mf.outputs.push_back(flags.trajectory_path);
      if (flags.compare) {
        int cap_max = 0;
        for (int j = 1; j <= m.node_count; ++j) cap_max = std::max(cap_max, m.capacity(j));
        comparison = compare_to_analytic(stats, build_equilibrium_report(m, cap_max));
        have_comparison = true;
      }
    } else {
      const auto& m = std::get<ClosedNetworkModel>(any);
      mf.model_identity_hash = model_hash(m);
      if (!flags.trajectory_path.empty()) {
        std::cerr << "usage error: --trajectory requires an open model\n";
        return kExitUsage;
      }
      stats = simulate_closed(m, cfg);
      if (flags.compare) {
        comparison = compare_to_closed(stats, stationary_distribution(m), m);
        have_comparison = true;
      }
    }
  } catch (const InstabilityError& e) {
    std::cerr << e.what() << " (use --allow-unstable to simulate anyway)\n";
    return kExitInstability;
  } catch (const ReducibleChainError& e) {
    std::cerr << e.what() << "\n";
    return kExitReducibleChain;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  RepStats merged = stats.merged();
  if (merged.rejected_arrive + merged.rejected_transfer > 0)
    std::cerr << "warning: " << (merged.rejected_arrive + merged.rejected_transfer)
              << " event(s) rejected at capacity; the analytic model is uncapacitated\n";

  if (common.want_json())
    emit(mf, out_dir, "stats.json", [&](std::ostream& os) { write_stats_json(stats, os); });
  if (common.want_csv())
    emit(mf, out_dir, "hist.csv", [&](std::ostream& os) { write_histogram_csv(stats, os); });
  if (have_comparison)
    emit(mf, out_dir, "comparison.json",
         [&](std::ostream& os) { write_comparison_json(comparison, os); });
  mf.finished_at = utc_now();
  write_manifest(mf, out_dir);

  std::cout << "simulate: seed " << flags.seed << ", " << flags.reps << " replication(s)";
  if (have_comparison) std::cout << ", max TV " << format_double(comparison.max_tv);
  std::cout << "; wrote " << mf.outputs.size() + 1 << " file(s) to " << out_dir.string() << "\n";
  return kExitOk;
}

struct VerifyFlags {
  int max_customers = 4;
  int interior_margin = 1;
  std::uint64_t oracle_cap = 50'000;
  bool detail = false;
};

int cmd_verify(const CommonOpts& common, const VerifyFlags& flags) {
  AnyModel any;
  std::string bytes;
  if (int rc = load_model(common, any, bytes); rc != kExitOk) return rc;

  Manifest mf;
  mf.command = "verify";
  mf.model_path = common.model_path;
  mf.model_file_hash = fnv1a64(bytes);
  mf.flags = {{"out", common.out_dir},
              {"max-customers", std::to_string(flags.max_customers)},
              {"interior-margin", std::to_string(flags.interior_margin)},
              {"oracle-cap", std::to_string(flags.oracle_cap)}};
  mf.started_at = utc_now();

  fs::path out_dir(common.out_dir);
  fs::create_directories(out_dir);
  bool pass = false;

  if (std::holds_alternative<OpenNetworkModel>(any)) {
    const auto& m = std::get<OpenNetworkModel>(any);
    mf.model_identity_hash = model_hash(m);
    BalanceReport balance;
    IndependenceReport independence;
    try {
      auto sample = interior_states(m, flags.max_customers, flags.interior_margin);
      balance = balance_check(m, sample, flags.interior_margin, flags.detail);
      independence = independence_check_all(m, std::min(flags.max_customers, 5));
    } catch (const InstabilityError& e) {
      std::cerr << e.what() << "\n";
      return kExitInstability;
    }
    pass = balance.max_relative_residual <= kBalanceThreshold &&
           independence.max_abs_error <= kIndependenceThreshold;
    emit(mf, out_dir, "verify.json", [&](std::ostream& os) {
      write_balance_json(balance, independence, model_hash(m), kBalanceThreshold,
                         kIndependenceThreshold, os);
    });
    std::cout << "verify: balance residual " << format_double(balance.max_relative_residual)
              << " over " << balance.states_checked << " state(s), independence error "
              << format_double(independence.max_abs_error) << ": " << (pass ? "PASS" : "FAIL")
              << "\n";
  } else {
    const auto& m = std::get<ClosedNetworkModel>(any);
    mf.model_identity_hash = model_hash(m);
    OracleResult oracle;
    try {
      OracleOptions opts;
      opts.cap = flags.oracle_cap;
      oracle = closed_oracle(m, opts);
    } catch (const ReducibleChainError& e) {
      std::cerr << e.what() << "\n";
      return kExitReducibleChain;
    } catch (const StateSpaceTooLargeError& e) {
      std::cerr << e.what() << "\n";
      return kExitStateSpaceCap;
    }
    pass = oracle.stationary_residual_inf <= kOracleThreshold &&
           oracle.max_abs_diff <= kOracleThreshold;
    emit(mf, out_dir, "oracle.json",
         [&](std::ostream& os) { write_oracle_json(oracle, m, kOracleThreshold, os); });
    std::cout << "verify: oracle residual " << format_double(oracle.stationary_residual_inf)
              << ", max diff " << format_double(oracle.max_abs_diff) << " over "
              << oracle.ordered_state_count << " ordered state(s): " << (pass ? "PASS" : "FAIL")
              << "\n";
  }

  mf.finished_at = utc_now();
  write_manifest(mf, out_dir);
  return pass ? kExitOk : kExitVerificationFailed;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"exact equilibrium analysis, simulation and verification of "
               "multiclass queueing networks"};
  app.require_subcommand(1);

  CommonOpts common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--model", common.model_path, "model file (JSON)")->required();
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--format", common.format, "json, csv or both")
        ->check(CLI::IsMember({"json", "csv", "both"}));
  };

  int n_max = 50;
  auto* open_cmd = app.add_subcommand("analyze-open", "equilibrium report for an open model");
  add_common(open_cmd);
  open_cmd->add_option("--nmax", n_max, "queue-length pmf length");

  std::uint64_t enum_cap = kDefaultEnumerationCap;
  auto* closed_cmd = app.add_subcommand("analyze-closed", "stationary distribution of a closed model");
  add_common(closed_cmd);
  closed_cmd->add_option("--enum-cap", enum_cap, "population state-count cap");

  SimulateFlags sim;
  auto* sim_cmd = app.add_subcommand("simulate", "event-race simulation of the chain");
  add_common(sim_cmd);
  auto* seed_opt = sim_cmd->add_option("--seed", sim.seed, "RNG seed (default: random, recorded)");
  sim_cmd->add_option("--horizon", sim.horizon, "simulated time units");
  sim_cmd->add_option("--warmup", sim.warmup, "discarded initial time units");
  sim_cmd->add_option("--reps", sim.reps, "independent replications");
  sim_cmd->add_flag("--compare", sim.compare, "also run the analytic solver and compare");
  sim_cmd->add_flag("--allow-unstable", sim.allow_unstable, "simulate despite instability");
  sim_cmd->add_option("--trajectory", sim.trajectory_path,
                      "JSONL state snapshots (file name inside --out; open models)");

  VerifyFlags verify;
  auto* verify_cmd = app.add_subcommand("verify", "balance / oracle verification");
  add_common(verify_cmd);
  verify_cmd->add_option("--max-customers", verify.max_customers, "state-space size bound");
  verify_cmd->add_option("--interior-margin", verify.interior_margin,
                         "capacity margin for interior states");
  verify_cmd->add_option("--oracle-cap", verify.oracle_cap, "ordered state-count cap");
  verify_cmd->add_flag("--detail", verify.detail, "keep per-state residuals in the report");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
      std::cout << app.help();
      return kExitOk;
    }
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  sim.seed_given = seed_opt->count() > 0;

  try {
    if (open_cmd->parsed()) return cmd_analyze_open(common, n_max);
    if (closed_cmd->parsed()) return cmd_analyze_closed(common, enum_cap);
    if (sim_cmd->parsed()) return cmd_simulate(common, sim);
    if (verify_cmd->parsed()) return cmd_verify(common, verify);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace kellynet::cli
