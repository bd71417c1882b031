#include "kellynet/verifier.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

#include "kellynet/errors.hpp"
#include "kellynet/json_writer.hpp"
#include "kellynet/open_solver.hpp"

namespace kellynet {

std::vector<DetailedState> interior_states(const OpenNetworkModel& m, int max_total, int margin) {
  if (margin < 1) throw std::invalid_argument("interior margin must be >= 1");
  std::vector<int> limits(static_cast<std::size_t>(m.node_count), -1);
  for (int j = 1; j <= m.node_count; ++j)
    if (m.capacity(j) > 0) limits[static_cast<std::size_t>(j) - 1] = m.capacity(j) - margin;
  return enumerate_detailed_states(m, max_total, limits);
}

BalanceReport balance_check(const OpenNetworkModel& m, const std::vector<DetailedState>& sample,
                            int interior_margin, bool keep_detail) {
  if (interior_margin < 1) throw std::invalid_argument("interior margin must be >= 1");
  OpenEquilibrium eq = make_open_equilibrium(m);

  BalanceReport report;
  report.states_checked = sample.size();
  if (keep_detail) report.residuals.reserve(sample.size());
  for (const auto& C : sample) {
    for (int j = 1; j <= m.node_count; ++j) {
      int cap = m.capacity(j);
      if (cap > 0 && C.length(j) > cap - interior_margin)
        throw std::invalid_argument("sample state outside the interior capacity window at node " +
                                    std::to_string(j));
    }
    double outflow_rate = 0.0;
    for (const auto& ev : enumerate_transitions(m, C)) outflow_rate += ev.rate;
    double outflow = state_probability(m, eq, C) * outflow_rate;
    double inflow = 0.0;
    for (const auto& pred : predecessors(m, C))
      inflow += state_probability(m, eq, pred.state) * pred.event.rate;
    double residual = std::abs(inflow - outflow) / outflow;
    if (keep_detail) report.residuals.push_back(residual);
    if (residual > report.max_relative_residual) {
      report.max_relative_residual = residual;
      report.worst_state = C;
    }
  }
  return report;
}

namespace {

using OrderedState = std::vector<std::vector<int>>;  // per node, queued type ids, head first

// Distinct orderings per node of a population state, multiplied across nodes.
double ordered_count_of(const ClosedNetworkModel& m, const PopulationState& s) {
  double count = 1.0;
  for (int j = 1; j <= m.node_count; ++j) {
    int n = s.node_total(j);
    double node_orderings = 1.0;
    int placed = 0;
    for (int i = 1; i <= m.type_count; ++i) {
      int c = s.count(j, i);
      for (int k = 1; k <= c; ++k) {
        ++placed;
        node_orderings = node_orderings * placed / k;  // running multinomial
      }
    }
    (void)n;
    count *= node_orderings;
  }
  return count;
}

void node_orderings(const std::vector<int>& remaining_in, std::vector<int>& seq,
                    std::vector<std::vector<int>>& out) {
  bool any = false;
  for (std::size_t i = 0; i < remaining_in.size(); ++i) {
    if (remaining_in[i] == 0) continue;
    any = true;
    std::vector<int> remaining = remaining_in;
    --remaining[i];
    seq.push_back(static_cast<int>(i) + 1);
    node_orderings(remaining, seq, out);
    seq.pop_back();
  }
  if (!any) out.push_back(seq);
}

void ordered_states_of(const ClosedNetworkModel& m, const PopulationState& s,
                       std::vector<OrderedState>& out) {
  std::vector<std::vector<std::vector<int>>> per_node;
  for (int j = 1; j <= m.node_count; ++j) {
    std::vector<int> remaining(static_cast<std::size_t>(m.type_count));
    for (int i = 1; i <= m.type_count; ++i) remaining[static_cast<std::size_t>(i) - 1] = s.count(j, i);
    std::vector<std::vector<int>> seqs;
    std::vector<int> seq;
    node_orderings(remaining, seq, seqs);
    per_node.push_back(std::move(seqs));
  }
  OrderedState state(static_cast<std::size_t>(m.node_count));
  std::function<void(std::size_t)> build = [&](std::size_t j) {
    if (j == per_node.size()) {
      out.push_back(state);
      return;
    }
    for (const auto& seq : per_node[j]) {
      state[j] = seq;
      build(j + 1);
    }
  };
  build(0);
}

struct Transition {
  std::size_t from;
  std::size_t to;
  double rate;
};

}  // namespace

OracleResult closed_oracle(const ClosedNetworkModel& m, const OracleOptions& opts) {
  StationaryDistribution product_form = stationary_distribution(m);

  double ordered_total = 0.0;
  for (const auto& s : product_form.states) ordered_total += ordered_count_of(m, s);
  if (ordered_total > static_cast<double>(opts.cap))
    throw StateSpaceTooLargeError(static_cast<std::uint64_t>(ordered_total), opts.cap);

  // Materialize the ordered space in product-form state order.
  std::vector<OrderedState> states;
  std::vector<std::size_t> owner;  // ordered index -> population-state index
  for (std::size_t k = 0; k < product_form.states.size(); ++k) {
    std::vector<OrderedState> block;
    ordered_states_of(m, product_form.states[k], block);
    for (auto& s : block) {
      states.push_back(std::move(s));
      owner.push_back(k);
    }
  }
  std::map<OrderedState, std::size_t> index;
  for (std::size_t a = 0; a < states.size(); ++a) index[states[a]] = a;

  std::map<NodeTypePair, std::vector<SwitchEntry>> routing;
  for (const auto& e : m.switches) routing[{e.from_node, e.from_type}].push_back(e);

  std::vector<Transition> transitions;
  for (std::size_t a = 0; a < states.size(); ++a) {
    for (int j = 1; j <= m.node_count; ++j) {
      const auto& q = states[a][static_cast<std::size_t>(j) - 1];
      if (q.empty()) continue;
      auto it = routing.find({j, q.front()});
      if (it == routing.end()) continue;
      for (const auto& e : it->second) {
        OrderedState next = states[a];
        auto& from_q = next[static_cast<std::size_t>(j) - 1];
        from_q.erase(from_q.begin());
        next[static_cast<std::size_t>(e.to_node) - 1].push_back(e.to_type);
        std::size_t b = index.at(next);
        if (b == a) continue;  // self-loops do not move probability
        transitions.push_back({a, b, m.service_rate(j) * e.p});
      }
    }
  }

  const std::size_t n = states.size();
  Eigen::VectorXd pi(static_cast<Eigen::Index>(n));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  rhs(static_cast<Eigen::Index>(n) - 1) = 1.0;

  if (n <= opts.dense_threshold) {
    // Rows of Q^T, with the last equation replaced by normalization.
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& t : transitions) {
      A(static_cast<Eigen::Index>(t.to), static_cast<Eigen::Index>(t.from)) += t.rate;
      A(static_cast<Eigen::Index>(t.from), static_cast<Eigen::Index>(t.from)) -= t.rate;
    }
    A.row(static_cast<Eigen::Index>(n) - 1).setOnes();
    pi = A.partialPivLu().solve(rhs);
  } else {
    std::vector<Eigen::Triplet<double>> trips;
    std::map<std::pair<std::size_t, std::size_t>, double> acc;
    for (const auto& t : transitions) {
      if (t.to != n - 1) acc[{t.to, t.from}] += t.rate;
      if (t.from != n - 1) acc[{t.from, t.from}] -= t.rate;
    }
    for (std::size_t col = 0; col < n; ++col) acc[{n - 1, col}] += 1.0;
    for (const auto& [pos, val] : acc)
      trips.emplace_back(static_cast<int>(pos.first), static_cast<int>(pos.second), val);
    Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    A.setFromTriplets(trips.begin(), trips.end());

    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> solver;
    solver.setTolerance(opts.iterative_tol);
    solver.compute(A);
    pi = solver.solve(rhs);
    if (solver.info() != Eigen::Success || !pi.allFinite()) {
      Eigen::SparseLU<Eigen::SparseMatrix<double>> direct;
      direct.compute(A);
      if (direct.info() != Eigen::Success)
        throw std::runtime_error("oracle: stationary solve failed");
      pi = direct.solve(rhs);
    }
  }

  // Clean up solver noise, then renormalize.
  for (Eigen::Index a = 0; a < pi.size(); ++a)
    if (pi(a) < 0.0 && pi(a) > -1e-12) pi(a) = 0.0;
  pi /= pi.sum();

  OracleResult result;
  result.ordered_state_count = n;
  result.states = product_form.states;
  result.aggregated.assign(product_form.states.size(), 0.0);
  for (std::size_t a = 0; a < n; ++a) result.aggregated[owner[a]] += pi(static_cast<Eigen::Index>(a));

  Eigen::VectorXd defect = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (const auto& t : transitions) {
    defect(static_cast<Eigen::Index>(t.to)) += pi(static_cast<Eigen::Index>(t.from)) * t.rate;
    defect(static_cast<Eigen::Index>(t.from)) -= pi(static_cast<Eigen::Index>(t.from)) * t.rate;
  }
  result.stationary_residual_inf = defect.cwiseAbs().maxCoeff();

  for (std::size_t k = 0; k < product_form.states.size(); ++k)
    result.max_abs_diff =
        std::max(result.max_abs_diff, std::abs(result.aggregated[k] - product_form.p[k]));
  return result;
}

double independence_check(const OpenNetworkModel& m, int node_a, int node_b, int n_bound) {
  if (node_a == node_b) throw std::invalid_argument("nodes must be distinct");
  OpenEquilibrium eq = make_open_equilibrium(m);
  auto alpha_a = node_tag_alphabet(m, node_a);
  auto alpha_b = node_tag_alphabet(m, node_b);
  QueueLengthPmf pmf_a = queue_length_pmf(m, node_a, n_bound);
  QueueLengthPmf pmf_b = queue_length_pmf(m, node_b, n_bound);

  double other_B = 1.0;
  for (int j = 1; j <= m.node_count; ++j)
    if (j != node_a && j != node_b) other_B *= eq.normalizers[static_cast<std::size_t>(j) - 1].B;

  double worst = 0.0;
  for (int na = 0; na <= n_bound; ++na) {
    if (na > 0 && alpha_a.empty()) break;
    for (int nb = 0; nb <= n_bound; ++nb) {
      if (nb > 0 && alpha_b.empty()) break;
      // Joint law from the detailed densities: every pair of tag sequences.
      double joint = 0.0;
      std::vector<std::size_t> ia(static_cast<std::size_t>(na), 0);
      bool done_a = false;
      while (!done_a) {
        DetailedState C = empty_state(m);
        auto& qa = C.queues[static_cast<std::size_t>(node_a) - 1];
        qa.resize(static_cast<std::size_t>(na));
        for (std::size_t p = 0; p < ia.size(); ++p) qa[p] = alpha_a[ia[p]];

        std::vector<std::size_t> ib(static_cast<std::size_t>(nb), 0);
        bool done_b = false;
        while (!done_b) {
          auto& qb = C.queues[static_cast<std::size_t>(node_b) - 1];
          qb.resize(static_cast<std::size_t>(nb));
          for (std::size_t p = 0; p < ib.size(); ++p) qb[p] = alpha_b[ib[p]];
          joint += state_probability(m, eq, C);
          done_b = true;
          for (std::size_t p = ib.size(); p-- > 0;) {
            if (++ib[p] < alpha_b.size()) {
              done_b = false;
              break;
            }
            ib[p] = 0;
          }
        }
        done_a = true;
        for (std::size_t p = ia.size(); p-- > 0;) {
          if (++ia[p] < alpha_a.size()) {
            done_a = false;
            break;
          }
          ia[p] = 0;
        }
      }
      joint /= other_B;  // marginalize the untouched nodes
      double product = pmf_a.p[static_cast<std::size_t>(na)] * pmf_b.p[static_cast<std::size_t>(nb)];
      worst = std::max(worst, std::abs(joint - product));
    }
  }
  return worst;
}

IndependenceReport independence_check_all(const OpenNetworkModel& m, int n_bound) {
  IndependenceReport report;
  report.n_bound = n_bound;
  for (int a = 1; a <= m.node_count; ++a) {
    for (int b = a + 1; b <= m.node_count; ++b) {
      double err = independence_check(m, a, b, n_bound);
      report.pairs.push_back({a, b, err});
      report.max_abs_error = std::max(report.max_abs_error, err);
    }
  }
  return report;
}

void write_balance_json(const BalanceReport& balance, const IndependenceReport& independence,
                        std::uint64_t model_hash_value, double balance_threshold,
                        double independence_threshold, std::ostream& os) {
  JsonWriter w(os);
  w.begin_object();
  w.field("model_hash", hash_hex(model_hash_value));
  w.key("balance").begin_object();
  w.field("states_checked", static_cast<std::uint64_t>(balance.states_checked));
  w.field("max_relative_residual", balance.max_relative_residual);
  w.field("threshold", balance_threshold);
  w.field("pass", balance.max_relative_residual <= balance_threshold);
  w.key("worst_state");
  write_state_json(w, balance.worst_state);
  if (!balance.residuals.empty()) {
    w.key("residuals").begin_array();
    for (double r : balance.residuals) w.value(r);
    w.end_array();
  }
  w.end_object();
  w.key("independence").begin_object();
  w.field("n_bound", independence.n_bound);
  w.field("max_abs_error", independence.max_abs_error);
  w.field("threshold", independence_threshold);
  w.field("pass", independence.max_abs_error <= independence_threshold);
  w.key("pairs").begin_array();
  for (const auto& p : independence.pairs) {
    w.begin_object();
    w.field("node_a", p.node_a);
    w.field("node_b", p.node_b);
    w.field("max_abs_error", p.max_abs_error);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  w.end_object();
  os << "\n";
}

void write_oracle_json(const OracleResult& oracle, const ClosedNetworkModel& m, double threshold,
                       std::ostream& os) {
  JsonWriter w(os);
  w.begin_object();
  w.field("model_hash", hash_hex(model_hash(m)));
  w.field("ordered_state_count", static_cast<std::uint64_t>(oracle.ordered_state_count));
  w.field("stationary_residual_inf", oracle.stationary_residual_inf);
  w.field("max_abs_diff", oracle.max_abs_diff);
  w.field("threshold", threshold);
  w.field("pass", oracle.stationary_residual_inf <= threshold && oracle.max_abs_diff <= threshold);
  w.key("aggregated").begin_array();
  for (std::size_t k = 0; k < oracle.states.size(); ++k) {
    w.begin_object();
    w.key("counts").begin_array();
    for (int j = 1; j <= m.node_count; ++j) {
      w.begin_array();
      for (int i = 1; i <= m.type_count; ++i) w.value(oracle.states[k].count(j, i));
      w.end_array();
    }
    w.end_array();
    w.field("p", oracle.aggregated[k]);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  os << "\n";
}

}  // namespace kellynet
