#include "kellynet/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "kellynet/errors.hpp"
#include "kellynet/json_writer.hpp"

namespace kellynet {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t replication_seed(std::uint64_t seed, int rep) {
  return splitmix64(seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(rep) + 1));
}

std::size_t RandomStream::pick(const std::vector<double>& weights, double total) {
  double target = uniform() * total;
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (target < acc) return k;
  }
  return weights.size() - 1;  // fp slack lands on the last event
}

namespace {

void check_config(const SimConfig& cfg) {
  if (!(cfg.horizon > cfg.warmup) || cfg.warmup < 0.0)
    throw std::invalid_argument("require horizon > warmup >= 0");
  if (cfg.replications < 1) throw std::invalid_argument("require replications >= 1");
}

int worker_count(const SimConfig& cfg) {
  int threads = cfg.threads;
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  return std::min(threads, cfg.replications);
}

template <typename RunOne>
void run_replications(OccupancyStats& stats, const SimConfig& cfg, bool force_sequential,
                      RunOne run_one) {
  stats.reps.resize(static_cast<std::size_t>(cfg.replications));
  int workers = force_sequential ? 1 : worker_count(cfg);
  if (workers == 1) {
    for (int rep = 0; rep < cfg.replications; ++rep)
      stats.reps[static_cast<std::size_t>(rep)] = run_one(rep);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int rep = next.fetch_add(1); rep < cfg.replications; rep = next.fetch_add(1))
        stats.reps[static_cast<std::size_t>(rep)] = run_one(rep);
    });
  }
  for (auto& t : pool) t.join();
}

struct Accumulator {
  RepStats* rep;
  int stage_dim;

  void add(const std::vector<std::vector<CustomerTag>>& queues, double weight) {
    if (weight <= 0.0) return;
    rep->measured_time += weight;
    for (std::size_t j = 0; j < queues.size(); ++j) {
      std::size_t n = queues[j].size();
      auto& hist = rep->node_hist[j];
      if (n >= hist.size()) hist.resize(n + 1, 0.0);
      hist[n] += weight;
      for (const auto& tag : queues[j])
        rep->tag_time[j][static_cast<std::size_t>(tag.type - 1) * static_cast<std::size_t>(stage_dim) +
                         static_cast<std::size_t>(tag.stage - 1)] += weight;
    }
  }
};

RepStats fresh_rep(int nodes, int types, int stage_dim, const std::vector<int>& hist_sizes) {
  RepStats rep;
  rep.node_hist.resize(static_cast<std::size_t>(nodes));
  for (int j = 0; j < nodes; ++j)
    rep.node_hist[static_cast<std::size_t>(j)].assign(
        static_cast<std::size_t>(hist_sizes[static_cast<std::size_t>(j)]) + 1, 0.0);
  rep.tag_time.assign(static_cast<std::size_t>(nodes),
                      std::vector<double>(static_cast<std::size_t>(types) *
                                              static_cast<std::size_t>(stage_dim),
                                          0.0));
  rep.arrivals_by_type.assign(static_cast<std::size_t>(types), 0);
  return rep;
}

}  // namespace

RepStats OccupancyStats::merged() const {
  RepStats all = reps.at(0);
  for (std::size_t r = 1; r < reps.size(); ++r) {
    const RepStats& rep = reps[r];
    for (std::size_t j = 0; j < all.node_hist.size(); ++j) {
      if (rep.node_hist[j].size() > all.node_hist[j].size())
        all.node_hist[j].resize(rep.node_hist[j].size(), 0.0);
      for (std::size_t n = 0; n < rep.node_hist[j].size(); ++n)
        all.node_hist[j][n] += rep.node_hist[j][n];
      for (std::size_t k = 0; k < rep.tag_time[j].size(); ++k)
        all.tag_time[j][k] += rep.tag_time[j][k];
    }
    all.measured_time += rep.measured_time;
    all.events_transfer += rep.events_transfer;
    all.events_depart += rep.events_depart;
    all.events_arrive += rep.events_arrive;
    all.rejected_transfer += rep.rejected_transfer;
    all.rejected_arrive += rep.rejected_arrive;
    for (std::size_t i = 0; i < all.arrivals_by_type.size(); ++i)
      all.arrivals_by_type[i] += rep.arrivals_by_type[i];
  }
  return all;
}

std::vector<double> OccupancyStats::empirical_pmf(int node) const {
  RepStats all = merged();
  const auto& hist = all.node_hist.at(static_cast<std::size_t>(node) - 1);
  std::vector<double> pmf(hist.size());
  for (std::size_t n = 0; n < hist.size(); ++n) pmf[n] = hist[n] / all.measured_time;
  return pmf;
}

double OccupancyStats::empirical_share(int node, int type, int stage) const {
  RepStats all = merged();
  const auto& tags = all.tag_time.at(static_cast<std::size_t>(node) - 1);
  double total = 0.0;
  for (double w : tags) total += w;
  if (total <= 0.0) return 0.0;
  return tags[static_cast<std::size_t>(type - 1) * static_cast<std::size_t>(stage_dim) +
              static_cast<std::size_t>(stage - 1)] /
         total;
}

OccupancyStats simulate_open(const OpenNetworkModel& m, const SimConfig& cfg,
                             const TrajectoryObserver& observer) {
  check_config(cfg);
  std::vector<int> caps(static_cast<std::size_t>(m.node_count));
  for (int j = 1; j <= m.node_count; ++j) {
    caps[static_cast<std::size_t>(j) - 1] = m.capacity(j);
    if (m.capacity(j) < 1)
      throw std::invalid_argument("simulate_open requires a finite sim_capacity on every node");
  }
  if (!cfg.allow_unstable) make_open_equilibrium(m);  // throws InstabilityError

  int stage_dim = 1;
  for (const auto& r : m.routes) stage_dim = std::max(stage_dim, r.length());

  OccupancyStats stats;
  stats.kind = SimKind::Open;
  stats.model_hash = model_hash(m);
  stats.seed = cfg.seed;
  stats.horizon = cfg.horizon;
  stats.warmup = cfg.warmup;
  stats.node_count = m.node_count;
  stats.type_count = m.type_count;
  stats.stage_dim = stage_dim;

  auto run_one = [&](int rep_index) {
    RandomStream rng(replication_seed(cfg.seed, rep_index));
    RepStats rep = fresh_rep(m.node_count, m.type_count, stage_dim, caps);
    Accumulator acc{&rep, stage_dim};

    DetailedState state = empty_state(m);
    if (observer) observer(rep_index, 0.0, state);
    double t = 0.0;
    std::vector<double> weights;
    while (t < cfg.horizon) {
      auto events = enumerate_transitions(m, state);
      double total = 0.0;
      weights.clear();
      for (const auto& ev : events) {
        weights.push_back(ev.rate);
        total += ev.rate;
      }
      double t_next = total > 0.0 ? t + rng.exponential(total) : cfg.horizon;
      double seg_begin = std::max(t, cfg.warmup);
      double seg_end = std::min(t_next, cfg.horizon);
      if (seg_end > seg_begin) acc.add(state.queues, seg_end - seg_begin);
      if (t_next >= cfg.horizon) break;
      t = t_next;

      const TransitionEvent& ev = events[rng.pick(weights, total)];
      bool blocked = false;
      for (int j = 1; j <= m.node_count; ++j)
        if (ev.result.length(j) > caps[static_cast<std::size_t>(j) - 1]) blocked = true;
      switch (ev.kind) {
        case TransitionKind::TRANSFER:
          ++rep.events_transfer;
          if (blocked) ++rep.rejected_transfer;
          break;
        case TransitionKind::DEPART:
          ++rep.events_depart;
          break;
        case TransitionKind::ARRIVE:
          ++rep.events_arrive;
          ++rep.arrivals_by_type[static_cast<std::size_t>(ev.type_id) - 1];
          if (blocked) ++rep.rejected_arrive;
          break;
      }
      if (!blocked) {
        state = ev.result;
        if (observer) observer(rep_index, t, state);
      }
    }
    return rep;
  };

  run_replications(stats, cfg, static_cast<bool>(observer), run_one);
  return stats;
}

OccupancyStats simulate_closed(const ClosedNetworkModel& m, const SimConfig& cfg) {
  check_config(cfg);
  std::vector<Chain> chains = effective_chains(m);
  int n_total = m.total_population();

  // Outgoing routing per (node, type), deterministic order.
  std::map<NodeTypePair, std::vector<SwitchEntry>> routing;
  for (const auto& e : m.switches) routing[{e.from_node, e.from_type}].push_back(e);
  for (auto& [pair, entries] : routing)
    std::sort(entries.begin(), entries.end(), [](const SwitchEntry& a, const SwitchEntry& b) {
      return std::make_pair(a.to_node, a.to_type) < std::make_pair(b.to_node, b.to_type);
    });

  std::map<NodeTypePair, std::size_t> chain_of;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (const auto& p : chains[c]) chain_of[p] = c;

  OccupancyStats stats;
  stats.kind = SimKind::Closed;
  stats.model_hash = model_hash(m);
  stats.seed = cfg.seed;
  stats.horizon = cfg.horizon;
  stats.warmup = cfg.warmup;
  stats.node_count = m.node_count;
  stats.type_count = m.type_count;
  stats.stage_dim = 1;

  std::vector<int> hist_sizes(static_cast<std::size_t>(m.node_count), n_total);

  auto run_one = [&](int rep_index) {
    RandomStream rng(replication_seed(cfg.seed, rep_index));
    RepStats rep = fresh_rep(m.node_count, m.type_count, 1, hist_sizes);
    Accumulator acc{&rep, 1};

    // Each chain's population starts queued at its smallest (node,type) pair.
    std::vector<std::vector<CustomerTag>> queues(static_cast<std::size_t>(m.node_count));
    for (std::size_t c = 0; c < chains.size(); ++c) {
      auto [j0, i0] = chains[c].front();
      auto it = m.populations.find(static_cast<int>(c) + 1);
      int n = it == m.populations.end() ? 0 : it->second;
      for (int k = 0; k < n; ++k)
        queues[static_cast<std::size_t>(j0) - 1].push_back({i0, 1});
    }

#ifndef NDEBUG
    std::vector<int> chain_pop(chains.size(), 0);
    for (std::size_t j = 0; j < queues.size(); ++j)
      for (const auto& tag : queues[j])
        ++chain_pop[chain_of.at({static_cast<int>(j) + 1, tag.type})];
#endif

    double t = 0.0;
    struct Move {
      int from;
      int to_node;
      int to_type;
      double rate;
    };
    std::vector<Move> moves;
    std::vector<double> weights;
    while (t < cfg.horizon) {
      moves.clear();
      weights.clear();
      double total = 0.0;
      for (int j = 1; j <= m.node_count; ++j) {
        const auto& q = queues[static_cast<std::size_t>(j) - 1];
        if (q.empty()) continue;
        auto it = routing.find({j, q.front().type});
        if (it == routing.end()) continue;
        for (const auto& e : it->second) {
          double rate = m.service_rate(j) * e.p;
          moves.push_back({j, e.to_node, e.to_type, rate});
          weights.push_back(rate);
          total += rate;
        }
      }
      double t_next = total > 0.0 ? t + rng.exponential(total) : cfg.horizon;
      double seg_begin = std::max(t, cfg.warmup);
      double seg_end = std::min(t_next, cfg.horizon);
      if (seg_end > seg_begin) acc.add(queues, seg_end - seg_begin);
      if (t_next >= cfg.horizon) break;
      t = t_next;

      const Move& mv = moves[rng.pick(weights, total)];
      auto& from_q = queues[static_cast<std::size_t>(mv.from) - 1];
      from_q.erase(from_q.begin());
      queues[static_cast<std::size_t>(mv.to_node) - 1].push_back({mv.to_type, 1});
      ++rep.events_transfer;

#ifndef NDEBUG
      std::vector<int> now(chains.size(), 0);
      for (std::size_t j = 0; j < queues.size(); ++j)
        for (const auto& tag : queues[j])
          ++now[chain_of.at({static_cast<int>(j) + 1, tag.type})];
      assert(now == chain_pop && "chain populations must be conserved");
#endif
    }
    return rep;
  };

  run_replications(stats, cfg, false, run_one);
  return stats;
}

namespace {

double tv_distance(const std::vector<double>& emp, const std::vector<double>& ana, double ana_tail) {
  std::size_t len = std::max(emp.size(), ana.size()) + 1;
  double tv = 0.0;
  for (std::size_t n = 0; n < len; ++n) {
    double e = n < emp.size() ? emp[n] : 0.0;
    double a = n < ana.size() ? ana[n] : 0.0;
    if (n == len - 1) a += ana_tail;  // analytic mass beyond the listed pmf
    tv += std::abs(e - a);
  }
  return 0.5 * tv;
}

std::vector<double> rep_pmf(const RepStats& rep, int node) {
  const auto& hist = rep.node_hist.at(static_cast<std::size_t>(node) - 1);
  std::vector<double> pmf(hist.size());
  for (std::size_t n = 0; n < hist.size(); ++n) pmf[n] = hist[n] / rep.measured_time;
  return pmf;
}

void fill_spread(ComparisonReport::Node& node) {
  double mean = 0.0;
  for (double tv : node.tv_per_rep) mean += tv;
  mean /= static_cast<double>(node.tv_per_rep.size());
  double var = 0.0;
  for (double tv : node.tv_per_rep) var += (tv - mean) * (tv - mean);
  node.tv_rep_mean = mean;
  node.tv_rep_stddev = node.tv_per_rep.size() > 1
                           ? std::sqrt(var / static_cast<double>(node.tv_per_rep.size() - 1))
                           : 0.0;
}

}  // namespace

ComparisonReport compare_to_analytic(const OccupancyStats& stats, const EquilibriumReport& report) {
  if (stats.model_hash != report.model_hash)
    throw ModelMismatchError("statistics and report come from different models");
  ComparisonReport cmp;
  for (const auto& nd : report.nodes) {
    ComparisonReport::Node out;
    out.node = nd.node;
    out.tv = tv_distance(stats.empirical_pmf(nd.node), nd.pmf, nd.pmf_tail);
    for (const auto& rep : stats.reps)
      out.tv_per_rep.push_back(tv_distance(rep_pmf(rep, nd.node), nd.pmf, nd.pmf_tail));
    fill_spread(out);
    for (const auto& [i, s, p] : nd.composition) {
      double emp = stats.empirical_share(nd.node, i, s);
      out.composition.push_back({i, s, p, emp, std::abs(p - emp)});
      cmp.max_composition_diff = std::max(cmp.max_composition_diff, std::abs(p - emp));
    }
    cmp.max_tv = std::max(cmp.max_tv, out.tv);
    cmp.nodes.push_back(std::move(out));
  }
  return cmp;
}

ComparisonReport compare_to_closed(const OccupancyStats& stats, const StationaryDistribution& dist,
                                   const ClosedNetworkModel& m) {
  if (stats.model_hash != dist.model_hash)
    throw ModelMismatchError("statistics and distribution come from different models");
  ComparisonReport cmp;
  auto margs = marginals_of(dist, m);

  // Analytic per-(node,type) expected counts give the composition shares.
  std::vector<std::vector<double>> mean_counts(
      static_cast<std::size_t>(m.node_count),
      std::vector<double>(static_cast<std::size_t>(m.type_count), 0.0));
  for (std::size_t k = 0; k < dist.states.size(); ++k)
    for (int j = 1; j <= m.node_count; ++j)
      for (int i = 1; i <= m.type_count; ++i)
        mean_counts[static_cast<std::size_t>(j) - 1][static_cast<std::size_t>(i) - 1] +=
            dist.p[k] * dist.states[k].count(j, i);

  for (int j = 1; j <= m.node_count; ++j) {
    ComparisonReport::Node out;
    out.node = j;
    const auto& ana = margs[static_cast<std::size_t>(j) - 1];
    out.tv = tv_distance(stats.empirical_pmf(j), ana, 0.0);
    for (const auto& rep : stats.reps) out.tv_per_rep.push_back(tv_distance(rep_pmf(rep, j), ana, 0.0));
    fill_spread(out);
    double node_mean = 0.0;
    for (int i = 1; i <= m.type_count; ++i)
      node_mean += mean_counts[static_cast<std::size_t>(j) - 1][static_cast<std::size_t>(i) - 1];
    if (node_mean > 0.0) {
      for (int i = 1; i <= m.type_count; ++i) {
        double share =
            mean_counts[static_cast<std::size_t>(j) - 1][static_cast<std::size_t>(i) - 1] / node_mean;
        double emp = stats.empirical_share(j, i, 1);
        out.composition.push_back({i, 1, share, emp, std::abs(share - emp)});
        cmp.max_composition_diff = std::max(cmp.max_composition_diff, std::abs(share - emp));
      }
    }
    cmp.max_tv = std::max(cmp.max_tv, out.tv);
    cmp.nodes.push_back(std::move(out));
  }
  return cmp;
}

namespace {

void write_rep_json(JsonWriter& w, const RepStats& rep) {
  w.begin_object();
  w.field("measured_time", rep.measured_time);
  w.key("node_histograms").begin_array();
  for (const auto& hist : rep.node_hist) {
    w.begin_array();
    for (double x : hist) w.value(x);
    w.end_array();
  }
  w.end_array();
  w.key("occupancy_time").begin_array();
  for (const auto& tags : rep.tag_time) {
    w.begin_array();
    for (double x : tags) w.value(x);
    w.end_array();
  }
  w.end_array();
  w.key("events").begin_object();
  w.field("transfer", rep.events_transfer);
  w.field("depart", rep.events_depart);
  w.field("arrive", rep.events_arrive);
  w.field("rejected_transfer", rep.rejected_transfer);
  w.field("rejected_arrive", rep.rejected_arrive);
  w.end_object();
  w.key("arrivals_by_type").begin_array();
  for (std::uint64_t a : rep.arrivals_by_type) w.value(a);
  w.end_array();
  w.end_object();
}

}  // namespace

void write_stats_json(const OccupancyStats& stats, std::ostream& os) {
  JsonWriter w(os);
  w.begin_object();
  w.field("kind", stats.kind == SimKind::Open ? "open" : "closed");
  w.field("model_hash", hash_hex(stats.model_hash));
  w.key("rng").begin_object();
  w.field("name", kRngName);
  w.field("substreams", kRngSubstreamScheme);
  w.end_object();
  w.field("seed", stats.seed);
  w.field("horizon", stats.horizon);
  w.field("warmup", stats.warmup);
  w.field("replications", static_cast<std::int64_t>(stats.reps.size()));
  w.field("stage_dim", stats.stage_dim);
  w.key("replication_stats").begin_array();
  for (const auto& rep : stats.reps) write_rep_json(w, rep);
  w.end_array();
  w.key("merged");
  write_rep_json(w, stats.merged());
  w.end_object();
  os << "\n";
}

void write_histogram_csv(const OccupancyStats& stats, std::ostream& os) {
  os << "replication,node,n,time_weight\n";
  for (std::size_t r = 0; r < stats.reps.size(); ++r) {
    const auto& rep = stats.reps[r];
    for (std::size_t j = 0; j < rep.node_hist.size(); ++j)
      for (std::size_t n = 0; n < rep.node_hist[j].size(); ++n)
        os << (r + 1) << "," << (j + 1) << "," << n << "," << csv_field(rep.node_hist[j][n]) << "\n";
  }
}

void write_comparison_json(const ComparisonReport& report, std::ostream& os) {
  JsonWriter w(os);
  w.begin_object();
  w.field("max_tv", report.max_tv);
  w.field("max_composition_diff", report.max_composition_diff);
  w.key("nodes").begin_array();
  for (const auto& nd : report.nodes) {
    w.begin_object();
    w.field("node", nd.node);
    w.field("tv", nd.tv);
    w.key("tv_per_rep").begin_array();
    for (double tv : nd.tv_per_rep) w.value(tv);
    w.end_array();
    w.field("tv_rep_mean", nd.tv_rep_mean);
    w.field("tv_rep_stddev", nd.tv_rep_stddev);
    w.key("composition").begin_array();
    for (const auto& c : nd.composition) {
      w.begin_object();
      w.field("type", c.type);
      w.field("stage", c.stage);
      w.field("analytic", c.analytic);
      w.field("empirical", c.empirical);
      w.field("abs_diff", c.abs_diff);
      w.end_object();
    }
    w.end_array();
    w.end_object();
  }
  w.end_array();
  w.end_object();
  os << "\n";
}

}  // namespace kellynet
