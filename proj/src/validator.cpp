#include "bivalid/validator.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "bivalid/error.hpp"
#include "bivalid/io.hpp"

namespace bivalid {

Correction parse_correction(std::string_view s) {
  if (s == "bonferroni") return Correction::bonferroni;
  if (s == "fdr") return Correction::fdr;
  throw InputError("unknown correction method '" + std::string(s) + "'");
}

const char* to_string(Correction c) { return c == Correction::bonferroni ? "bonferroni" : "fdr"; }

std::size_t ValidatedNetwork::validated_node_count() const {
  return static_cast<std::size_t>(
      std::count_if(validated_degree.begin(), validated_degree.end(), [](std::uint32_t d) { return d > 0; }));
}

ValidatedNetwork threshold(const CorrectionPolicy& policy, std::span<const PValueResult> pvals,
                           std::size_t node_count) {
  ValidatedNetwork net;
  net.method = policy.method;
  net.epsilon = policy.epsilon;
  net.n_tests = policy.n_tests;
  net.validated_degree.assign(node_count, 0);
  if (!(policy.epsilon > 0.0 && policy.epsilon < 1.0)) throw InputError("epsilon must lie in (0, 1)");
  if (policy.n_tests == 0) return net;
  for (const auto& r : pvals)
    if (!(r.p_value >= 0.0 && r.p_value <= 1.0)) throw InputError("p-value outside [0, 1]");

  const auto n = static_cast<double>(policy.n_tests);
  std::vector<std::size_t> keep;
  if (policy.method == Correction::bonferroni) {
    net.p_star = policy.epsilon / n;
    for (std::size_t i = 0; i < pvals.size(); ++i)
      if (pvals[i].p_value < net.p_star) keep.push_back(i);
  } else {
    std::vector<std::size_t> order(pvals.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return pvals[x].p_value < pvals[y].p_value; });
    std::size_t k = 0;
    for (std::size_t r = 0; r < order.size(); ++r)
      if (pvals[order[r]].p_value <= static_cast<double>(r + 1) * policy.epsilon / n) k = r + 1;
    if (k > 0) {
      net.p_star = static_cast<double>(k) * policy.epsilon / n;
      const double cutoff = pvals[order[k - 1]].p_value;
      for (std::size_t i = 0; i < pvals.size(); ++i)
        if (pvals[i].p_value <= cutoff) keep.push_back(i);
    }
  }
  net.edges.reserve(keep.size());
  for (auto i : keep) {
    const auto& r = pvals[i];
    const index_t a = std::min(r.a, r.b), b = std::max(r.a, r.b);
    net.edges.push_back({a, b, r.overlap, r.p_value});
    const std::size_t need = std::size_t{b} + 1;
    if (net.validated_degree.size() < need) net.validated_degree.resize(need, 0);
    net.validated_degree[a]++;
    net.validated_degree[b]++;
  }
  std::sort(net.edges.begin(), net.edges.end(),
            [](const ValidatedEdge& x, const ValidatedEdge& y) { return x.a != y.a ? x.a < y.a : x.b < y.b; });
  return net;
}

ValidatedNetwork validate_snapshot(const Snapshot& snap, Layer layer, const ValidateOptions& opts,
                                   std::vector<PValueResult>* tested) {
  ValidatedNetwork net;
  if (tested) tested->clear();
  const auto finish = [&](ValidatedNetwork n) {
    n.date = snap.date();
    n.layer = layer;
    n.node_ids = snap.ids(layer);
    n.backend = opts.backend;
    n.method = opts.method;
    n.epsilon = opts.epsilon;
    n.validated_degree.resize(n.node_ids.size(), 0);
    return n;
  };
  if (snap.num_nodes(layer) < 2 || snap.num_nodes(other(layer)) == 0) return finish(std::move(net));

  const auto deg = degree_sequence(snap, layer);
  const auto pairs = overlaps(snap, layer, opts.workers);
  std::vector<PValueResult> pvals;
  double residual = 0.0;
  int iterations = 0;
  if (opts.backend == Backend::hypergeometric) {
    pvals = p_values_hypergeometric(deg, layer, pairs);
  } else {
    const auto sol = fit_bicm(deg, opts.fit);
    residual = sol.residual();
    iterations = sol.iterations();
    pvals = p_values(sol, layer, pairs, opts.backend, opts.workers);
  }
  CorrectionPolicy policy{opts.method, opts.epsilon, pairs.size()};
  net = threshold(policy, pvals, snap.num_nodes(layer));
  net.fit_residual = residual;
  net.fit_iterations = iterations;
  if (tested) *tested = std::move(pvals);
  return finish(std::move(net));
}

void write_edges(std::ostream& out, const ValidatedNetwork& net) {
  out << "node_a,node_b,overlap,p_value\n";
  for (const auto& e : net.edges)
    out << net.node_ids[e.a] << ',' << net.node_ids[e.b] << ',' << e.overlap << ',' << io::format_double(e.p_value)
        << '\n';
}

void write_pvalues(std::ostream& out, const std::vector<std::string>& ids, std::span<const PValueResult> results) {
  out << "node_a,node_b,overlap,p_value,backend\n";
  for (const auto& r : results)
    out << ids[r.a] << ',' << ids[r.b] << ',' << r.overlap << ',' << io::format_double(r.p_value) << ','
        << to_string(r.backend) << '\n';
}

nlohmann::json metadata_json(const ValidatedNetwork& net) {
  return nlohmann::json{{"date", net.date},
                        {"layer", to_string(net.layer)},
                        {"method", to_string(net.method)},
                        {"backend", to_string(net.backend)},
                        {"epsilon", net.epsilon},
                        {"n_tests", net.n_tests},
                        {"p_star", net.p_star},
                        {"fit_residual", net.fit_residual},
                        {"fit_iterations", net.fit_iterations},
                        {"edge_count", net.edges.size()},
                        {"node_count", net.node_count()},
                        {"validated_node_count", net.validated_node_count()}};
}

ValidatedStats validated_stats(const ValidatedNetwork& net, const HolderMeta* labels) {
  ValidatedStats s;
  s.node_count = net.node_count();
  s.edge_count = net.edges.size();
  s.validated_nodes = net.validated_node_count();
  if (s.node_count > 0) s.fraction = static_cast<double>(s.validated_nodes) / s.node_count;
  if (s.validated_nodes > 0) s.average_degree = 2.0 * s.edge_count / s.validated_nodes;
  if (!labels) return s;

  std::map<std::string, std::size_t> degree_sum;
  for (index_t i = 0; i < net.node_ids.size(); ++i) {
    const auto it = labels->find(net.node_ids[i]);
    const std::string label = it == labels->end() ? "other" : it->second;
    auto& g = s.by_label[label];
    g.nodes++;
    if (net.validated(i)) {
      g.validated++;
      degree_sum[label] += net.validated_degree[i];
    }
  }
  for (auto& [label, g] : s.by_label) {
    g.fraction = g.nodes ? static_cast<double>(g.validated) / g.nodes : 0.0;
    g.average_degree = g.validated ? static_cast<double>(degree_sum[label]) / g.validated : 0.0;
  }
  return s;
}

}  // namespace bivalid
