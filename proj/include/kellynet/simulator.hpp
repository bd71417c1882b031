#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "kellynet/chain.hpp"
#include "kellynet/closed_solver.hpp"
#include "kellynet/model.hpp"
#include "kellynet/open_solver.hpp"

namespace kellynet {

inline constexpr const char* kRngName = "mt19937_64";
inline constexpr const char* kRngSubstreamScheme = "splitmix64-v1";

std::uint64_t splitmix64(std::uint64_t z);

/// Seed of replication `rep` (0-based) under the substream scheme.
std::uint64_t replication_seed(std::uint64_t seed, int rep);

/// mt19937_64 with inverse-CDF sampling from 53-bit uniforms, so identical
/// seeds give identical draws on any standard library.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  /// Index into `weights` drawn proportionally; `total` is their sum.
  std::size_t pick(const std::vector<double>& weights, double total);

 private:
  std::mt19937_64 engine_;
};

struct SimConfig {
  std::uint64_t seed = 1;
  double horizon = 0.0;
  double warmup = 0.0;
  int replications = 1;
  bool allow_unstable = false;
  int threads = 1;  // <= 0 means one worker per hardware thread
};

/// One replication's time-weighted statistics.
struct RepStats {
  std::vector<std::vector<double>> node_hist;  // [node-1][n] time spent with n_j = n
  std::vector<std::vector<double>> tag_time;   // [node-1][(type-1)*stage_dim + stage-1]
  double measured_time = 0.0;
  std::uint64_t events_transfer = 0;
  std::uint64_t events_depart = 0;
  std::uint64_t events_arrive = 0;
  std::uint64_t rejected_transfer = 0;
  std::uint64_t rejected_arrive = 0;
  std::vector<std::uint64_t> arrivals_by_type;  // picked arrivals, rejected included
};

enum class SimKind { Open, Closed };

struct OccupancyStats {
  SimKind kind = SimKind::Open;
  std::uint64_t model_hash = 0;
  std::uint64_t seed = 0;
  double horizon = 0.0;
  double warmup = 0.0;
  int node_count = 0;
  int type_count = 0;
  int stage_dim = 1;
  std::vector<RepStats> reps;

  RepStats merged() const;
  /// Merged empirical pmf of n_j.
  std::vector<double> empirical_pmf(int node) const;
  /// Merged share of (type, stage) among customers at `node`; 0 when the node
  /// was never occupied.
  double empirical_share(int node, int type, int stage) const;
};

using TrajectoryObserver = std::function<void(int rep, double t, const DetailedState&)>;

/// Exact event race over the transition list; arrivals or transfers into a
/// node at sim_capacity are picked but leave the state unchanged (counted as
/// rejected). Deterministic in (seed, model, config); an observer forces the
/// replications to run sequentially.
OccupancyStats simulate_open(const OpenNetworkModel& model, const SimConfig& config,
                             const TrajectoryObserver& observer = {});

/// Ordered FCFS queues: node j serves its head at rate mu_j; the completed
/// customer switches class per the routing probabilities and joins the target
/// tail. Initial placement: each chain's population starts at its smallest
/// (node,type) pair.
OccupancyStats simulate_closed(const ClosedNetworkModel& model, const SimConfig& config);

struct ComparisonReport {
  struct Composition {
    int type = 0;
    int stage = 0;
    double analytic = 0.0;
    double empirical = 0.0;
    double abs_diff = 0.0;
  };
  struct Node {
    int node = 0;
    double tv = 0.0;                  // merged total-variation distance
    std::vector<double> tv_per_rep;
    double tv_rep_mean = 0.0;
    double tv_rep_stddev = 0.0;
    std::vector<Composition> composition;
  };

  std::vector<Node> nodes;
  double max_tv = 0.0;
  double max_composition_diff = 0.0;
};

/// Per node, TV distance between empirical and analytic queue-length pmfs
/// (analytic tail folded into a final bucket) plus composition-share
/// differences. Throws ModelMismatchError when the hashes differ.
ComparisonReport compare_to_analytic(const OccupancyStats& stats, const EquilibriumReport& report);

ComparisonReport compare_to_closed(const OccupancyStats& stats, const StationaryDistribution& dist,
                                   const ClosedNetworkModel& model);

void write_stats_json(const OccupancyStats& stats, std::ostream& os);
void write_histogram_csv(const OccupancyStats& stats, std::ostream& os);
void write_comparison_json(const ComparisonReport& report, std::ostream& os);

}  // namespace kellynet
