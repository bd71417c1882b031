#include "kellynet/open_solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kellynet/errors.hpp"
#include "kellynet/json_writer.hpp"

namespace kellynet {

double VisitRates::alpha(int node, int type, int stage) const {
  for (const auto& [i, s, rate] : support.at(static_cast<std::size_t>(node) - 1))
    if (i == type && s == stage) return rate;
  return 0.0;
}

VisitRates visit_rates(const OpenNetworkModel& m) {
  VisitRates vr;
  vr.b.assign(static_cast<std::size_t>(m.node_count), 0.0);
  vr.support.resize(static_cast<std::size_t>(m.node_count));
  for (int i = 1; i <= m.type_count; ++i) {
    const RouteSpec& r = m.route(i);
    double nu = m.arrival_rate(i);
    for (int s = 1; s <= r.length(); ++s) {
      int j = r.node_at(s);
      vr.support[static_cast<std::size_t>(j) - 1].emplace_back(i, s, nu);
      vr.b[static_cast<std::size_t>(j) - 1] += nu;
    }
  }
  for (auto& sup : vr.support) std::sort(sup.begin(), sup.end());
  return vr;
}

namespace {

bool node_stable(double b, const ServicePolicy& pol) { return b < pol.mu_default; }

// Series terms t(n) = b^n / prod_{l<=n} mu(l) up to n, inclusive.
std::vector<double> series_terms(double b, const ServicePolicy& pol, int up_to) {
  std::vector<double> t(static_cast<std::size_t>(up_to) + 1);
  t[0] = 1.0;
  for (int n = 1; n <= up_to; ++n)
    t[static_cast<std::size_t>(n)] = t[static_cast<std::size_t>(n) - 1] * b / pol.mu(n);
  return t;
}

}  // namespace

NodeNormalizer node_normalizer(double b, const ServicePolicy& pol) {
  if (b < 0.0) throw std::invalid_argument("load must be nonnegative");
  if (!node_stable(b, pol)) throw InstabilityError({});
  int m = static_cast<int>(pol.mu_table.size());
  auto t = series_terms(b, pol, m);
  double rho = b / pol.mu_default;
  double inv = 0.0;
  for (double x : t) inv += x;
  inv += t.back() * rho / (1.0 - rho);  // geometric tail beyond the table
  NodeNormalizer nn;
  nn.B = 1.0 / inv;
  nn.truncation_n = m;
  nn.tail_bound = 0.0;
  return nn;
}

QueueLengthPmf queue_length_pmf(const OpenNetworkModel& m, int node, int n_max) {
  if (n_max < 0) throw std::invalid_argument("n_max must be >= 0");
  VisitRates vr = visit_rates(m);
  const ServicePolicy& pol = m.policy(node);
  double b = vr.b.at(static_cast<std::size_t>(node) - 1);
  NodeNormalizer nn;
  try {
    nn = node_normalizer(b, pol);
  } catch (const InstabilityError&) {
    throw InstabilityError({node});
  }
  int table = static_cast<int>(pol.mu_table.size());
  int top = std::max(n_max, table);
  auto t = series_terms(b, pol, top);
  QueueLengthPmf pmf;
  pmf.p.resize(static_cast<std::size_t>(n_max) + 1);
  for (int n = 0; n <= n_max; ++n) pmf.p[static_cast<std::size_t>(n)] = nn.B * t[static_cast<std::size_t>(n)];
  double rho = b / pol.mu_default;
  double tail_terms = 0.0;
  for (int n = n_max + 1; n <= top; ++n) tail_terms += t[static_cast<std::size_t>(n)];
  tail_terms += t[static_cast<std::size_t>(top)] * rho / (1.0 - rho);
  pmf.tail = nn.B * tail_terms;
  return pmf;
}

double composition_probability(const VisitRates& rates, int node, int type, int stage) {
  double b = rates.b.at(static_cast<std::size_t>(node) - 1);
  if (b <= 0.0)
    throw std::domain_error("node " + std::to_string(node) + " is never visited (b = 0)");
  return rates.alpha(node, type, stage) / b;
}

OpenEquilibrium make_open_equilibrium(const OpenNetworkModel& m) {
  OpenEquilibrium eq;
  eq.rates = visit_rates(m);
  std::vector<int> unstable;
  for (int j = 1; j <= m.node_count; ++j)
    if (!node_stable(eq.rates.b[static_cast<std::size_t>(j) - 1], m.policy(j))) unstable.push_back(j);
  if (!unstable.empty()) throw InstabilityError(unstable);
  for (int j = 1; j <= m.node_count; ++j)
    eq.normalizers.push_back(node_normalizer(eq.rates.b[static_cast<std::size_t>(j) - 1], m.policy(j)));
  return eq;
}

double state_probability(const OpenNetworkModel& m, const OpenEquilibrium& eq,
                         const DetailedState& C) {
  double p = 1.0;
  for (int j = 1; j <= m.node_count; ++j) {
    const ServicePolicy& pol = m.policy(j);
    double node_factor = eq.normalizers[static_cast<std::size_t>(j) - 1].B;
    for (int l = 1; l <= C.length(j); ++l) {
      const CustomerTag& tag = C.tag(j, l);
      node_factor *= eq.rates.alpha(j, tag.type, tag.stage) / pol.mu(l);
    }
    p *= node_factor;
  }
  return p;
}

double detailed_state_probability(const OpenNetworkModel& m, const DetailedState& C) {
  return state_probability(m, make_open_equilibrium(m), C);
}

EquilibriumReport build_equilibrium_report(const OpenNetworkModel& m, int n_max) {
  OpenEquilibrium eq = make_open_equilibrium(m);
  EquilibriumReport rep;
  rep.model_hash = model_hash(m);
  rep.n_max = n_max;
  for (int j = 1; j <= m.node_count; ++j) {
    EquilibriumReport::Node node;
    node.node = j;
    node.b = eq.rates.b[static_cast<std::size_t>(j) - 1];
    node.B = eq.normalizers[static_cast<std::size_t>(j) - 1].B;
    node.stable = true;
    QueueLengthPmf pmf = queue_length_pmf(m, j, n_max);
    node.pmf = std::move(pmf.p);
    node.pmf_tail = pmf.tail;
    if (node.b > 0.0)
      for (const auto& [i, s, rate] : eq.rates.support[static_cast<std::size_t>(j) - 1])
        node.composition.emplace_back(i, s, rate / node.b);
    rep.nodes.push_back(std::move(node));
  }
  return rep;
}

void write_equilibrium_json(const EquilibriumReport& rep, std::ostream& os) {
  JsonWriter w(os);
  w.begin_object();
  w.field("model_hash", hash_hex(rep.model_hash));
  w.field("n_max", rep.n_max);
  w.key("nodes").begin_array();
  for (const auto& nd : rep.nodes) {
    w.begin_object();
    w.field("node", nd.node);
    w.field("b", nd.b);
    w.field("B", nd.B);
    w.field("stable", nd.stable);
    w.key("pmf").begin_array();
    for (double p : nd.pmf) w.value(p);
    w.end_array();
    w.field("pmf_tail", nd.pmf_tail);
    w.key("composition").begin_object();
    for (const auto& [i, s, p] : nd.composition)
      w.field("(" + std::to_string(i) + "," + std::to_string(s) + ")", p);
    w.end_object();
    w.end_object();
  }
  w.end_array();
  w.end_object();
  os << "\n";
}

void write_equilibrium_csv(const EquilibriumReport& rep, std::ostream& os) {
  os << "node,n,p\n";
  for (const auto& nd : rep.nodes)
    for (std::size_t n = 0; n < nd.pmf.size(); ++n)
      os << nd.node << "," << n << "," << csv_field(nd.pmf[n]) << "\n";
}

}  // namespace kellynet
