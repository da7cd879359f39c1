#include "bivalid/analytics.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <set>

#include "bivalid/error.hpp"
#include "bivalid/io.hpp"

namespace bivalid {

namespace {

std::size_t distinct_count(std::span<const double> x) {
  std::set<double> s(x.begin(), x.end());
  return s.size();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool id_validated(const ValidatedNetwork& net, const std::string& id) {
  const auto it = std::lower_bound(net.node_ids.begin(), net.node_ids.end(), id);
  if (it == net.node_ids.end() || *it != id) return false;
  return net.validated(static_cast<index_t>(it - net.node_ids.begin()));
}

void require_layer(const ValidatedNetwork& net, Layer layer, std::size_t nodes, const char* what) {
  if (net.layer != layer) throw InputError(std::string(what) + " needs a validated network on the " + to_string(layer) +
                                           " layer");
  if (net.node_ids.size() != nodes) throw InputError(std::string(what) + ": network does not match the snapshot");
}

// Intersection of two ascending index lists, reported through `fn(pos_a, pos_b)`.
template <class Fn>
void intersect(std::span<const index_t> a, std::span<const index_t> b, Fn fn) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      fn(i, j);
      ++i;
      ++j;
    }
  }
}

}  // namespace

OlsFit ols(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("regression inputs differ in length");
  if (distinct_count(x) < 2) throw InputError("regression needs at least two distinct x values");
  const auto n = static_cast<double>(x.size());
  const double xbar = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - xbar) * (x[i] - xbar);
    sxy += (x[i] - xbar) * (y[i] - ybar);
  }
  OlsFit f;
  f.n = x.size();
  f.slope = sxy / sxx;
  f.intercept = ybar - f.slope * xbar;
  if (x.size() > 2) {
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      sse += r * r;
    }
    const double s2 = sse / (n - 2.0);
    f.slope_se = std::sqrt(s2 / sxx);
    f.intercept_se = std::sqrt(s2 * (1.0 / n + xbar * xbar / sxx));
  }
  return f;
}

LogLinearFit fit_log_linear(std::span<const double> x, std::span<const double> y) {
  LogLinearFit out;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0 && std::isfinite(x[i]) && std::isfinite(y[i])) {
      lx.push_back(std::log(x[i]));
      ly.push_back(y[i]);
    } else {
      out.dropped++;
    }
  }
  out.fit = ols(lx, ly);
  return out;
}

std::vector<double> cross_correlation(std::span<const double> x, std::span<const double> y, int max_lag) {
  if (max_lag < 0) throw InputError("max_lag must be non-negative");
  std::vector<double> out(2 * static_cast<std::size_t>(max_lag) + 1, kNaN);
  const auto n = static_cast<long>(std::min(x.size(), y.size()));
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    std::vector<double> a, b;
    for (long t = 0; t < n; ++t) {
      const long u = t + lag;
      if (u < 0 || u >= n) continue;
      a.push_back(x[t]);
      b.push_back(y[u]);
    }
    if (a.size() < 2) continue;
    const double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa > 0.0 && sbb > 0.0) out[static_cast<std::size_t>(lag + max_lag)] = sab / std::sqrt(saa * sbb);
  }
  return out;
}

PortfolioMetrics portfolio_metrics(const Snapshot& snap, const SecurityMetaTable& meta) {
  if (!snap.weighted()) throw InputError("portfolio metrics need share counts; snapshot " + snap.date() + " is binary");
  PortfolioMetrics pm;
  pm.weight.assign(snap.num_links(), kNaN);
  pm.concentration.assign(snap.num_links(), kNaN);
  pm.market_value.assign(snap.num_holders(), kNaN);
  pm.included.assign(snap.num_holders(), 0);

  std::vector<const SecurityMeta*> by_asset(snap.num_assets(), nullptr);
  for (index_t s = 0; s < snap.num_assets(); ++s) {
    const auto it = meta.find(snap.assets()[s]);
    if (it != meta.end()) by_asset[s] = &it->second;
  }

  for (index_t i = 0; i < snap.num_holders(); ++i) {
    const auto assets = snap.assets_of(i);
    const auto shares = snap.shares_of(i);
    const std::size_t base = snap.row_begin(i);
    double mv = 0.0;
    bool priced = true;
    for (std::size_t k = 0; k < assets.size(); ++k) {
      const auto* m = by_asset[assets[k]];
      if (m && m->outstanding && *m->outstanding > 0.0) pm.concentration[base + k] = shares[k] / *m->outstanding;
      if (!m || !m->price) {
        priced = false;
        continue;
      }
      mv += shares[k] * *m->price;
    }
    if (!priced) {
      pm.warnings.push_back("holder " + snap.holders()[i] + " excluded: unpriced asset");
      continue;
    }
    if (!(mv > 0.0)) {
      pm.warnings.push_back("holder " + snap.holders()[i] + " excluded: zero portfolio value");
      continue;
    }
    pm.included[i] = 1;
    pm.market_value[i] = mv;
    pm.total_market_value += mv;
    for (std::size_t k = 0; k < assets.size(); ++k)
      pm.weight[base + k] = shares[k] * *by_asset[assets[k]]->price / mv;
  }
  return pm;
}

ShareSplitReport overlap_share_split(const Snapshot& snap, const ValidatedNetwork& net, const PortfolioMetrics& pm) {
  require_layer(net, Layer::holders, snap.num_holders(), "overlap share split");
  std::vector<std::vector<index_t>> adj(snap.num_holders());
  for (const auto& e : net.edges) {
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }

  ShareSplitReport rep;
  double excess_sum = 0.0, pooled_w = 0.0, pooled_inv = 0.0;
  std::size_t excess_n = 0;
  std::vector<char> overlapping;
  for (index_t i = 0; i < snap.num_holders(); ++i) {
    if (adj[i].empty() || !pm.included[i]) continue;
    const auto assets = snap.assets_of(i);
    overlapping.assign(assets.size(), 0);
    for (auto j : adj[i]) intersect(assets, snap.assets_of(j), [&](std::size_t k, std::size_t) { overlapping[k] = 1; });

    const std::size_t base = snap.row_begin(i);
    const double d = static_cast<double>(assets.size());
    ShareSplit s;
    s.holder = i;
    s.inverse_degree = 1.0 / d;
    double w_in = 0.0, w_out = 0.0;
    for (std::size_t k = 0; k < assets.size(); ++k) {
      if (overlapping[k]) {
        w_in += pm.weight[base + k];
        s.overlapping++;
      } else {
        w_out += pm.weight[base + k];
        s.non_overlapping++;
      }
    }
    if (s.overlapping) s.overlapping_mean = w_in / static_cast<double>(s.overlapping);
    if (s.non_overlapping) s.non_overlapping_mean = w_out / static_cast<double>(s.non_overlapping);
    if (s.overlapping) {
      excess_sum += s.overlapping_mean * d - 1.0;
      excess_n++;
      pooled_w += w_in;
      pooled_inv += static_cast<double>(s.overlapping) / d;
    }
    rep.holders.push_back(s);
  }
  if (excess_n) rep.per_holder_excess = excess_sum / static_cast<double>(excess_n);
  if (pooled_inv > 0.0) rep.pooled_excess = pooled_w / pooled_inv - 1.0;
  return rep;
}

std::vector<SecurityStat> security_validation_stats(const Snapshot& snap, const ValidatedNetwork& net,
                                                    const SecurityMetaTable& meta, const PortfolioMetrics* pm) {
  require_layer(net, Layer::holders, snap.num_holders(), "security validation stats");
  std::vector<std::uint64_t> validated(snap.num_assets(), 0);
  for (const auto& e : net.edges)
    intersect(snap.assets_of(e.a), snap.assets_of(e.b),
              [&](std::size_t k, std::size_t) { validated[snap.assets_of(e.a)[k]]++; });

  std::vector<SecurityStat> out;
  for (index_t s = 0; s < snap.num_assets(); ++s) {
    const auto holders = snap.holders_of(s);
    if (holders.size() < 2) continue;
    SecurityStat st;
    st.asset = s;
    st.degree = static_cast<std::uint32_t>(holders.size());
    st.pairs = std::uint64_t{st.degree} * (st.degree - 1) / 2;
    st.validated_pairs = validated[s];
    st.fraction = static_cast<double>(st.validated_pairs) / static_cast<double>(st.pairs);
    const auto it = meta.find(snap.assets()[s]);
    if (it != meta.end() && it->second.price && it->second.outstanding)
      st.capitalization = *it->second.price * *it->second.outstanding;
    if (pm) {
      double sum = 0.0;
      for (auto i : holders) {
        const auto row = snap.assets_of(i);
        const auto k = static_cast<std::size_t>(std::lower_bound(row.begin(), row.end(), s) - row.begin());
        sum += pm->concentration[snap.row_begin(i) + k];
      }
      st.mean_concentration = sum / static_cast<double>(st.degree);
    }
    out.push_back(st);
  }
  return out;
}

std::vector<SecurityRegression> security_regressions(std::span<const SecurityStat> stats,
                                                     std::span<const std::uint32_t> bucket_edges) {
  std::vector<SecurityRegression> out;
  for (std::size_t b = 0; b + 1 < bucket_edges.size(); ++b) {
    const auto lo = bucket_edges[b], hi = bucket_edges[b + 1];
    for (const char* reg : {"capitalization", "concentration", "degree"}) {
      std::vector<double> x, y;
      for (const auto& st : stats) {
        if (st.degree < lo || st.degree >= hi) continue;
        const std::string_view r = reg;
        x.push_back(r == "capitalization" ? st.capitalization
                    : r == "concentration" ? st.mean_concentration
                                           : static_cast<double>(st.degree));
        y.push_back(st.fraction);
      }
      std::vector<double> usable;
      for (double v : x)
        if (v > 0.0 && std::isfinite(v)) usable.push_back(v);
      if (distinct_count(usable) < 2) continue;
      out.push_back({lo, hi, reg, fit_log_linear(x, y)});
    }
  }
  return out;
}

double node_enrichment(std::span<const char> validated, std::span<const char> distressed) {
  if (validated.size() != distressed.size()) throw InputError("label vectors differ in length");
  std::size_t n = validated.size(), nl = 0, nv = 0, nvl = 0;
  for (std::size_t i = 0; i < n; ++i) {
    nl += distressed[i] != 0;
    nv += validated[i] != 0;
    nvl += validated[i] && distressed[i];
  }
  if (n == 0 || nl == 0 || nv == 0) return kNaN;
  const double l = static_cast<double>(nl) / static_cast<double>(n);
  const double lv = static_cast<double>(nvl) / static_cast<double>(nv);
  return lv / l;
}

DistressReport distress_report(const std::map<std::string, double>& mv_now,
                               const std::map<std::string, double>& mv_next, const ValidatedNetwork& net,
                               std::span<const OverlapRecord> pairs, std::size_t n, double market_return,
                               DistressRanking ranking) {
  if (net.layer != Layer::holders) throw InputError("distress report needs a holder-layer validated network");
  if (n == 0) throw InputError("distressed-set size must be at least 1");
  DistressReport rep;
  rep.date = net.date;
  rep.n_requested = n;
  rep.market_return = market_return;

  struct Drop {
    std::string id;
    double drop;
  };
  std::vector<Drop> pop;
  for (const auto& [id, now] : mv_now) {
    const auto it = mv_next.find(id);
    if (it == mv_next.end()) continue;
    const double d = ranking == DistressRanking::absolute_drop ? now - it->second : (now - it->second) / now;
    pop.push_back({id, d});
  }
  rep.population = pop.size();
  if (pop.empty()) throw InputError("no holders valued at both dates");
  if (n > pop.size()) {
    rep.warnings.push_back("distressed-set size " + std::to_string(n) + " capped at population " +
                           std::to_string(pop.size()));
    n = pop.size();
  }
  std::stable_sort(pop.begin(), pop.end(), [](const Drop& a, const Drop& b) { return a.drop > b.drop; });

  // Per network node: 0 outside the population, 1 inside, 2 distressed.
  std::vector<char> state(net.node_ids.size(), 0);
  const auto node_of = [&](const std::string& id) -> long {
    const auto it = std::lower_bound(net.node_ids.begin(), net.node_ids.end(), id);
    return it != net.node_ids.end() && *it == id ? it - net.node_ids.begin() : -1;
  };
  std::vector<char> validated(pop.size()), distressed(pop.size());
  for (std::size_t k = 0; k < pop.size(); ++k) {
    const long v = node_of(pop[k].id);
    distressed[k] = k < n;
    validated[k] = v >= 0 && net.validated(static_cast<index_t>(v));
    if (v >= 0) state[static_cast<std::size_t>(v)] = k < n ? 2 : 1;
    if (k < n) rep.distressed.push_back(pop[k].id);
  }
  rep.validated_population = static_cast<std::size_t>(std::count(validated.begin(), validated.end(), 1));
  rep.l = static_cast<double>(n) / static_cast<double>(pop.size());
  if (rep.validated_population) {
    std::size_t both = 0;
    for (std::size_t k = 0; k < pop.size(); ++k) both += validated[k] && distressed[k];
    rep.l_v = static_cast<double>(both) / static_cast<double>(rep.validated_population);
    rep.g_i = rep.l_v / rep.l;
  }

  for (const auto& e : net.edges) {
    if (!state[e.a] || !state[e.b]) continue;
    rep.validated_edges++;
    rep.validated_edges_distressed += state[e.a] == 2 && state[e.b] == 2;
  }
  for (const auto& p : pairs) {
    if (p.a >= state.size() || p.b >= state.size()) throw InputError("overlap pair outside the network");
    if (!state[p.a] || !state[p.b]) continue;
    rep.overlapping_pairs++;
    rep.overlapping_pairs_distressed += state[p.a] == 2 && state[p.b] == 2;
  }
  if (rep.validated_edges && rep.overlapping_pairs_distressed)
    rep.r_i = (static_cast<double>(rep.validated_edges_distressed) / static_cast<double>(rep.validated_edges)) /
              (static_cast<double>(rep.overlapping_pairs_distressed) / static_cast<double>(rep.overlapping_pairs));
  return rep;
}

std::map<std::string, double> market_values(const Snapshot& snap, const PortfolioMetrics& pm) {
  std::map<std::string, double> out;
  for (index_t i = 0; i < snap.num_holders(); ++i)
    if (pm.included[i]) out.emplace(snap.holders()[i], pm.market_value[i]);
  return out;
}

DateReturns portfolio_returns(const std::map<std::string, double>& mv_now,
                              const std::map<std::string, double>& mv_next, const ValidatedNetwork& net) {
  DateReturns out;
  out.date = net.date;
  for (const auto& [id, now] : mv_now) {
    const auto it = mv_next.find(id);
    if (it == mv_next.end() || !(now > 0.0)) continue;
    out.returns.push_back(it->second / now - 1.0);
    out.validated.push_back(id_validated(net, id));
  }
  return out;
}

ReturnsRegression returns_regression(std::span<const DateReturns> series, double r_max, bool split_signs) {
  if (!(r_max > 0.0)) throw InputError("r_max must be positive");
  ReturnsRegression rr;
  rr.r_max = r_max;
  rr.split_signs = split_signs;
  std::size_t total = 0, kept = 0;
  for (const auto& d : series) {
    if (d.returns.size() != d.validated.size()) throw InputError("returns and labels differ in length");
    total += d.returns.size();
    const std::vector<int> signs = split_signs ? std::vector<int>{1, -1} : std::vector<int>{0};
    for (int sign : signs) {
      std::vector<double> in, out;
      for (std::size_t k = 0; k < d.returns.size(); ++k) {
        const double r = d.returns[k];
        if (!(std::abs(r) < r_max)) continue;
        if (sign > 0 && r < 0.0) continue;
        if (sign < 0 && r >= 0.0) continue;
        (d.validated[k] ? in : out).push_back(r);
      }
      kept += in.size() + out.size();
      if (in.empty() || out.empty()) continue;
      rr.points.push_back({d.date, sign, mean_of(out), mean_of(in), in.size(), out.size()});
    }
  }
  if (total) rr.included_fraction = static_cast<double>(kept) / static_cast<double>(total);
  if (rr.points.size() < 2) throw InputError("returns regression needs at least two usable dates");

  const auto fit_sign = [&](int sign, bool all) {
    std::vector<double> x, y;
    for (const auto& p : rr.points)
      if (all || p.sign == sign) {
        x.push_back(p.out_mean);
        y.push_back(p.in_mean);
      }
    return ols(x, y);
  };
  rr.fit = fit_sign(0, true);
  if (split_signs) {
    for (int sign : {1, -1}) {
      try {
        (sign > 0 ? rr.fit_positive : rr.fit_negative) = fit_sign(sign, false);
      } catch (const InputError&) {
      }
    }
  }
  return rr;
}

std::vector<ReturnsRegression> slope_curve(std::span<const DateReturns> series, std::span<const double> r_max_values,
                                           bool split_signs) {
  std::vector<ReturnsRegression> out;
  for (double r : r_max_values) {
    try {
      out.push_back(returns_regression(series, r, split_signs));
    } catch (const InputError&) {
      ReturnsRegression empty;
      empty.r_max = r;
      empty.split_signs = split_signs;
      out.push_back(empty);
    }
  }
  return out;
}

std::vector<CategoryInternal> internal_degree(const ValidatedNetwork& net, const SecurityMetaTable& meta) {
  if (net.layer != Layer::assets) throw InputError("internal degree needs an asset-layer validated network");
  std::vector<std::string> cat(net.node_ids.size());
  std::map<std::string, CategoryInternal> by;
  for (std::size_t v = 0; v < net.node_ids.size(); ++v) {
    const auto it = meta.find(net.node_ids[v]);
    cat[v] = it == meta.end() || it->second.category.empty() ? "other" : it->second.category;
    auto& c = by[cat[v]];
    c.category = cat[v];
    c.nodes++;
    c.validated_nodes += net.validated(static_cast<index_t>(v));
  }
  for (const auto& e : net.edges)
    if (cat[e.a] == cat[e.b]) by[cat[e.a]].internal_links++;
  std::vector<CategoryInternal> out;
  for (auto& [name, c] : by) {
    c.validated_fraction = c.nodes ? static_cast<double>(c.validated_nodes) / static_cast<double>(c.nodes) : 0.0;
    c.mean_internal_degree =
        c.validated_nodes ? 2.0 * static_cast<double>(c.internal_links) / static_cast<double>(c.validated_nodes) : 0.0;
    out.push_back(c);
  }
  return out;
}

TimeseriesRow timeseries_row(const Snapshot& snap, const ValidatedNetwork& net, const HolderMeta* types,
                             const PortfolioMetrics* pm) {
  TimeseriesRow row;
  row.date = snap.date();
  row.holders = snap.num_holders();
  row.assets = snap.num_assets();
  row.links = snap.num_links();
  if (pm) row.market_value = pm->total_market_value;
  const auto st = validated_stats(net, types);
  row.validated_nodes = st.validated_nodes;
  row.validated_fraction = st.fraction;
  row.average_degree = st.average_degree;
  row.edge_count = st.edge_count;
  for (const auto& [label, g] : st.by_label) row.validated_by_type[label] = g.validated;
  return row;
}

void write_timeseries(std::ostream& out, std::span<const TimeseriesRow> rows, const std::vector<std::string>& types) {
  out << "date,holders,assets,links,market_value,validated_nodes,validated_fraction,average_degree,edge_count";
  for (const auto& t : types) out << ",validated_" << t;
  out << '\n';
  for (const auto& r : rows) {
    out << r.date << ',' << r.holders << ',' << r.assets << ',' << r.links << ','
        << (std::isnan(r.market_value) ? std::string() : io::format_double(r.market_value)) << ','
        << r.validated_nodes << ',' << io::format_double(r.validated_fraction) << ','
        << io::format_double(r.average_degree) << ',' << r.edge_count;
    for (const auto& t : types) {
      const auto it = r.validated_by_type.find(t);
      out << ',' << (it == r.validated_by_type.end() ? 0 : it->second);
    }
    out << '\n';
  }
}

}  // namespace bivalid
