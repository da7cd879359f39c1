#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <numeric>
#include <sstream>

#include "bivalid/analytics.hpp"
#include "bivalid/error.hpp"
#include "bivalid/synth.hpp"
#include "bivalid/validator.hpp"
#include "support.hpp"

using namespace bivalid;

namespace {

SecurityMetaTable priced(const Snapshot& snap, double price = 1.0, double outstanding = 1e9) {
  SecurityMetaTable m;
  for (const auto& id : snap.assets()) m[id] = {price, outstanding, "other"};
  return m;
}

ValidatedNetwork network(const std::vector<std::string>& ids, std::vector<std::pair<index_t, index_t>> edges,
                         Layer layer = Layer::holders) {
  ValidatedNetwork net;
  net.layer = layer;
  net.node_ids = ids;
  net.validated_degree.assign(ids.size(), 0);
  for (auto [a, b] : edges) {
    net.edges.push_back({std::min(a, b), std::max(a, b), 1, 0.0});
    net.validated_degree[a]++;
    net.validated_degree[b]++;
  }
  std::sort(net.edges.begin(), net.edges.end(),
            [](const ValidatedEdge& x, const ValidatedEdge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  return net;
}

}  // namespace

TEST_SUITE("analytics") {
  TEST_CASE("portfolio weights") {
    const auto snap = testing::parse("holder_id,asset_id,shares\nA,x,10\nB,x,5\nB,y,25\nC,z,7\n");
    SecurityMetaTable meta{{"x", {5.0, 10.0, "E"}}, {"y", {2.0, 100.0, "E"}}};
    const auto pm = portfolio_metrics(snap, meta);
    CHECK(pm.weight[0] == 1.0);  // single asset
    CHECK(pm.weight[1] == doctest::Approx(25.0 / 75));
    CHECK(pm.weight[2] == doctest::Approx(50.0 / 75));
    CHECK(pm.concentration[0] == 1.0);  // A owns all of x
    CHECK(pm.market_value[1] == doctest::Approx(75.0));
    CHECK_FALSE(pm.included[2]);  // z has no price
    CHECK(std::isnan(pm.weight[3]));
    CHECK(pm.warnings.size() == 1);
    CHECK(pm.total_market_value == doctest::Approx(125.0));
    CHECK_THROWS_AS(portfolio_metrics(testing::parse("holder_id,asset_id\nA,x\n"), meta), InputError);
  }

  TEST_CASE("zero-value portfolios are excluded") {
    const auto snap = testing::parse("holder_id,asset_id,shares\nA,x,10\n");
    const auto pm = portfolio_metrics(snap, SecurityMetaTable{{"x", {0.0, 100.0, "E"}}});
    CHECK_FALSE(pm.included[0]);
    CHECK(pm.warnings.size() == 1);
  }

  TEST_CASE("weights sum to one and average 1/d") {
    const auto fx = generate_fixture([] {
      SynthSpec s;
      s.holders = 40;
      s.assets = 120;
      s.holder_law = {DegreeLaw::Kind::power_law, 1, 2.0, 2, 60, {}};
      s.asset_law = {DegreeLaw::Kind::regular, 2, 2.5, 1, 0, {}};
      s.weighted = true;
      s.seed = 3;
      return s;
    }());
    const auto& snap = fx.snapshot;
    const auto meta = generate_security_meta(snap, 3);
    const auto pm = portfolio_metrics(snap, meta);
    for (index_t i = 0; i < snap.num_holders(); ++i) {
      REQUIRE(pm.included[i]);
      const auto d = snap.assets_of(i).size();
      double sum = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const double c = pm.concentration[snap.row_begin(i) + k];
        REQUIRE(c >= 0.0);
        REQUIRE(c <= 1.0);
        sum += pm.weight[snap.row_begin(i) + k];
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
      CHECK(std::abs(sum / d - 1.0 / d) <= 1e-12);
    }
  }

  TEST_CASE("overlap share split") {
    // A and B share x and y; A also holds z.
    const auto snap = testing::parse("holder_id,asset_id,shares\nA,x,1\nA,y,1\nA,z,2\nB,x,1\nB,y,1\nC,z,1\n");
    const auto pm = portfolio_metrics(snap, priced(snap));
    const auto rep = overlap_share_split(snap, network(snap.holders(), {{0, 1}}), pm);
    REQUIRE(rep.holders.size() == 2);
    const auto& a = rep.holders[0];
    CHECK(a.overlapping == 2);
    CHECK(a.overlapping_mean == doctest::Approx(0.25));
    CHECK(a.non_overlapping_mean == doctest::Approx(0.5));
    CHECK(a.inverse_degree == doctest::Approx(1.0 / 3));
    const auto& b = rep.holders[1];  // whole portfolio overlaps
    CHECK(b.overlapping_mean == doctest::Approx(0.5));
    CHECK(std::isnan(b.non_overlapping_mean));
    CHECK(rep.per_holder_excess == doctest::Approx(((0.25 * 3 - 1) + 0.0) / 2));
    CHECK(rep.pooled_excess == doctest::Approx((0.5 + 1.0) / (2.0 / 3 + 1.0) - 1));
  }

  TEST_CASE("uniform portfolios split evenly") {
    const auto snap = testing::from_dense(testing::random_dense(20, 40, 0.3, 5));
    const auto pm = portfolio_metrics(snap, priced(snap));
    const auto rep = overlap_share_split(snap, network(snap.holders(), {{0, 1}, {2, 3}, {1, 5}}), pm);
    for (const auto& s : rep.holders) {
      CHECK(s.overlapping_mean == doctest::Approx(s.inverse_degree));
      if (s.non_overlapping) CHECK(s.non_overlapping_mean == doctest::Approx(s.inverse_degree));
    }
  }

  TEST_CASE("double-weighted planted assets raise the overlapping share") {
    SynthSpec s;
    s.holders = 60;
    s.assets = 200;
    s.holder_law = {DegreeLaw::Kind::regular, 10, 2.5, 1, 0, {}};
    s.asset_law = {DegreeLaw::Kind::regular, 3, 2.5, 1, 0, {}};
    s.blocks = {{8, 20, 1.0}};
    s.seed = 8;
    const auto fx = generate_fixture(s);
    const auto& b = fx.snapshot;
    std::set<std::string> planted(fx.block_assets[0].begin(), fx.block_assets[0].end());
    std::vector<Entry> es;
    for (const auto& t : b.triplets())
      es.push_back({b.holders()[t.holder], b.assets()[t.asset], planted.count(b.assets()[t.asset]) ? 2.0 : 1.0});
    const auto snap = Snapshot::from_entries("t", es);
    const auto net = validate_snapshot(snap, Layer::holders, {});
    const auto rep = overlap_share_split(snap, net, portfolio_metrics(snap, priced(snap)));
    REQUIRE_FALSE(rep.holders.empty());
    CHECK(rep.per_holder_excess > 0.0);
    CHECK(rep.pooled_excess > 0.0);
  }

  TEST_CASE("security validation fractions") {
    // x: held by the validated pair only; y: by A and C, not linked.
    const auto snap = testing::parse("holder_id,asset_id,shares\nA,x,1\nB,x,1\nA,y,1\nC,y,1\n");
    const auto net = network(snap.holders(), {{0, 1}});
    const auto st = security_validation_stats(snap, net, priced(snap, 2.0, 10.0), nullptr);
    REQUIRE(st.size() == 2);
    CHECK(st[0].fraction == 1.0);
    CHECK(st[1].fraction == 0.0);
    CHECK(st[0].pairs == 1);
    CHECK(st[0].capitalization == 20.0);
    CHECK(std::isnan(st[0].mean_concentration));
    const auto pm = portfolio_metrics(snap, priced(snap, 2.0, 10.0));
    const auto st2 = security_validation_stats(snap, net, priced(snap, 2.0, 10.0), &pm);
    CHECK(st2[0].mean_concentration == doctest::Approx(0.1));
  }

  TEST_CASE("security fractions recomputed from scratch") {
    const auto snap = testing::from_dense(testing::random_dense(25, 50, 0.3, 17));
    const auto net = validate_snapshot(snap, Layer::holders, {Correction::fdr, 0.2});
    const auto st = security_validation_stats(snap, net, {}, nullptr);
    std::set<std::pair<index_t, index_t>> e;
    for (const auto& x : net.edges) e.insert({x.a, x.b});
    for (const auto& s : st) {
      const auto hs = snap.holders_of(s.asset);
      std::uint64_t v = 0;
      for (std::size_t i = 0; i < hs.size(); ++i)
        for (std::size_t j = i + 1; j < hs.size(); ++j) v += e.count({hs[i], hs[j]});
      CHECK(s.validated_pairs == v);
      CHECK(s.fraction >= 0.0);
      CHECK(s.fraction <= 1.0);
    }
  }

  TEST_CASE("planted assets have higher validated fractions") {
    SynthSpec s;
    s.holders = 80;
    s.assets = 300;
    s.holder_law = {DegreeLaw::Kind::power_law, 1, 2.0, 4, 80, {}};
    s.asset_law = {DegreeLaw::Kind::power_law, 1, 2.5, 1, 40, {}};
    s.blocks = {{10, 30, 1.0}};
    s.seed = 2;
    const auto fx = generate_fixture(s);
    const auto net = validate_snapshot(fx.snapshot, Layer::holders, {});
    const auto st = security_validation_stats(fx.snapshot, net, {}, nullptr);
    std::set<std::string> planted(fx.block_assets[0].begin(), fx.block_assets[0].end());
    double in = 0, out = 0;
    std::size_t ni = 0, no = 0;
    for (const auto& x : st) {
      if (planted.count(fx.snapshot.assets()[x.asset])) {
        in += x.fraction;
        ni++;
      } else {
        out += x.fraction;
        no++;
      }
    }
    REQUIRE(ni > 0);
    REQUIRE(no > 0);
    CHECK(in / ni > out / no);
  }

  TEST_CASE("log-linear regressions drop non-positive regressors") {
    std::vector<SecurityStat> st;
    for (std::uint32_t k = 0; k < 10; ++k) {
      SecurityStat s;
      s.degree = 3 + k;
      s.capitalization = k == 0 ? 0.0 : std::exp(double(k));
      s.fraction = 0.1 * k;
      st.push_back(s);
    }
    const std::vector<std::uint32_t> edges{2, 100};
    const auto regs = security_regressions(st, edges);
    REQUIRE(regs.size() == 2);  // capitalization and degree; concentration all NaN
    CHECK(regs[0].regressor == "capitalization");
    CHECK(regs[0].fit.dropped == 1);
    CHECK(regs[0].fit.fit.slope == doctest::Approx(0.1));
  }

  TEST_CASE("ordinary least squares") {
    const std::vector<double> x{1, 2, 3, 4, 5}, y{3.1, 4.9, 7.2, 8.8, 11.1};
    const auto f = ols(x, y);
    CHECK(f.slope == doctest::Approx(1.99));
    CHECK(f.intercept == doctest::Approx(1.05));
    CHECK(f.slope_se > 0.0);
    const std::vector<double> same{1, 1, 1};
    CHECK_THROWS_AS(ols(same, same), InputError);
    const std::vector<double> two_x{0, 1}, two_y{1, 3};
    const auto g = ols(two_x, two_y);
    CHECK(g.slope == 2.0);
    CHECK(std::isnan(g.slope_se));
  }

  TEST_CASE("node enrichment") {
    // every validated holder distressed, l = 0.5 -> G = 2
    const std::vector<char> v{1, 1, 0, 0}, d{1, 1, 0, 0};
    CHECK(node_enrichment(v, d) == doctest::Approx(2.0));
    const std::vector<char> none{0, 0, 0, 0};
    CHECK(std::isnan(node_enrichment(v, none)));
  }

  TEST_CASE("enrichment under random labels averages one") {
    Rng rng(1);
    const std::size_t n = 500;
    std::vector<char> validated(n);
    for (auto& v : validated) v = rng.bernoulli(0.3);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> g;
    for (int k = 0; k < 200; ++k) {
      rng.shuffle(idx.begin(), idx.end());
      std::vector<char> distressed(n, 0);
      for (std::size_t j = 0; j < 50; ++j) distressed[idx[j]] = 1;
      g.push_back(node_enrichment(validated, distressed));
    }
    const double mean = std::accumulate(g.begin(), g.end(), 0.0) / g.size();
    double var = 0;
    for (double x : g) var += (x - mean) * (x - mean);
    const double se = std::sqrt(var / (g.size() - 1) / g.size());
    CHECK(std::abs(mean - 1.0) <= 3 * se);
  }

  TEST_CASE("distress report") {
    std::map<std::string, double> now{{"A", 100}, {"B", 100}, {"C", 100}, {"D", 100}, {"E", 5}};
    std::map<std::string, double> next{{"A", 50}, {"B", 60}, {"C", 100}, {"D", 110}};
    auto net = network({"A", "B", "C", "D", "E"}, {{0, 1}, {0, 4}});
    const std::vector<OverlapRecord> pairs{{0, 1, 3}, {0, 2, 1}, {1, 3, 2}, {2, 3, 1}, {0, 4, 1}};
    const auto rep = distress_report(now, next, net, pairs, 2, -0.1);
    CHECK(rep.population == 4);
    CHECK(rep.distressed == std::vector<std::string>{"A", "B"});
    CHECK(rep.l == doctest::Approx(0.5));
    CHECK(rep.validated_population == 2);
    CHECK(rep.l_v == doctest::Approx(1.0));
    CHECK(rep.g_i == doctest::Approx(2.0));
    CHECK(rep.validated_edges == 1);  // the A-E edge leaves the population
    CHECK(rep.validated_edges_distressed == 1);
    CHECK(rep.overlapping_pairs == 4);
    CHECK(rep.overlapping_pairs_distressed == 1);
    CHECK(rep.r_i == doctest::Approx(4.0));
    CHECK(rep.market_return == -0.1);

    const auto capped = distress_report(now, next, net, pairs, 10, 0.0);
    CHECK(capped.distressed.size() == 4);
    CHECK(capped.warnings.size() == 1);

    // return ranking prefers the relative loser
    std::map<std::string, double> now2{{"A", 1000}, {"B", 10}}, next2{{"A", 900}, {"B", 5}};
    const auto by_ret = distress_report(now2, next2, network({"A", "B"}, {}), {}, 1, 0.0, DistressRanking::return_drop);
    CHECK(by_ret.distressed == std::vector<std::string>{"B"});
    const auto by_abs = distress_report(now2, next2, network({"A", "B"}, {}), {}, 1, 0.0);
    CHECK(by_abs.distressed == std::vector<std::string>{"A"});
  }

  TEST_CASE("returns regression on symmetric and scaled fixtures") {
    Rng rng(4);
    std::vector<DateReturns> same, scaled;
    for (int t = 0; t < 40; ++t) {
      const double m = 0.05 * rng.normal();
      DateReturns d{"d" + std::to_string(t), {}, {}}, e = d;
      for (int i = 0; i < 400; ++i) {
        const bool v = i < 100;
        d.returns.push_back(m + 0.001 * rng.normal());
        d.validated.push_back(v);
        e.returns.push_back((v ? 1.2 * m : m) + 0.001 * rng.normal());
        e.validated.push_back(v);
      }
      same.push_back(d);
      scaled.push_back(e);
    }
    const auto a = returns_regression(same, 0.5);
    CHECK(a.fit.slope == doctest::Approx(1.0).epsilon(0.05));
    CHECK(std::abs(a.fit.intercept) < 0.005);
    CHECK(a.points.size() == 40);
    const auto b = returns_regression(scaled, 0.5);
    CHECK(std::abs(b.fit.slope - 1.2) <= 0.05);
    const auto split = returns_regression(scaled, 0.5, true);
    CHECK(split.split_signs);
    CHECK(std::abs(split.fit_positive.slope - 1.2) <= 0.1);
    CHECK(std::abs(split.fit_negative.slope - 1.2) <= 0.1);
    CHECK_THROWS_AS(returns_regression(std::span(same).first(1), 0.5), InputError);
    const std::vector<double> grid{1e-6, 0.5};
    const auto curve = slope_curve(same, grid);
    REQUIRE(curve.size() == 2);
    CHECK(curve[0].points.empty());
    CHECK(std::isnan(curve[0].fit.slope));
  }

  TEST_CASE("r_max filters both sides") {
    std::vector<DateReturns> s{{"a", {0.1, 0.9, 0.2, -0.95}, {1, 1, 0, 0}}, {"b", {0.3, 0.1}, {1, 0}}};
    const auto r = returns_regression(s, 0.5);
    CHECK(r.points[0].in_mean == doctest::Approx(0.1));
    CHECK(r.points[0].n_out == 1);
    CHECK(r.included_fraction == doctest::Approx(4.0 / 6));
  }

  TEST_CASE("portfolio returns use holders valued at both dates") {
    std::map<std::string, double> now{{"A", 100}, {"B", 50}, {"C", 10}}, next{{"A", 110}, {"B", 25}};
    const auto r = portfolio_returns(now, next, network({"A", "B", "C"}, {{0, 2}}));
    REQUIRE(r.returns.size() == 2);
    CHECK(r.returns[0] == doctest::Approx(0.1));
    CHECK(r.returns[1] == -0.5);
    CHECK(r.validated == std::vector<char>{1, 0});
  }

  TEST_CASE("internal degree by category") {
    SecurityMetaTable meta{{"a", {1.0, 1.0, "X"}}, {"b", {1.0, 1.0, "X"}}, {"c", {1.0, 1.0, "Y"}}};
    const auto all = internal_degree(network({"a", "b"}, {{0, 1}}, Layer::assets), meta);
    REQUIRE(all.size() == 1);
    CHECK(all[0].internal_links == 1);
    const auto across = internal_degree(network({"a", "c", "d"}, {{0, 1}, {1, 2}}, Layer::assets), meta);
    for (const auto& c : across) CHECK(c.internal_links == 0);
    CHECK(across.back().category == "other");
    CHECK_THROWS_AS(internal_degree(network({"a"}, {}), meta), InputError);
  }

  TEST_CASE("planted same-category clique dominates internal degree") {
    SynthSpec s;
    s.holders = 200;
    s.assets = 120;
    s.holder_law = {DegreeLaw::Kind::regular, 3, 2.5, 1, 0, {}};
    s.asset_law = {DegreeLaw::Kind::regular, 5, 2.5, 1, 0, {}};
    s.blocks = {{30, 8, 1.0}};
    s.seed = 6;
    const auto fx = generate_fixture(s);
    SecurityMetaTable meta;
    const char* cats[] = {"A", "B", "C"};
    for (std::size_t k = 0; k < fx.snapshot.assets().size(); ++k)
      meta[fx.snapshot.assets()[k]] = {1.0, 1.0, cats[k % 3]};
    for (const auto& id : fx.block_assets[0]) meta[id].category = "P";
    const auto net = validate_snapshot(fx.snapshot, Layer::assets, {});
    const auto rows = internal_degree(net, meta);
    double planted = 0, best_other = 0;
    for (const auto& r : rows)
      (r.category == "P" ? planted : best_other) =
          std::max(r.category == "P" ? planted : best_other, r.mean_internal_degree);
    CHECK(planted > best_other);
    CHECK(planted >= 7.0);
  }

  TEST_CASE("cross-correlation of a shifted series peaks at lag one") {
    const std::vector<double> buy{1, 3, 2, 5, 4, 6, 2, 7};
    std::vector<double> sell(buy.size());
    sell[0] = 0;
    for (std::size_t t = 1; t < buy.size(); ++t) sell[t] = buy[t - 1];
    const auto cc = cross_correlation(buy, sell, 3);
    const auto best = std::max_element(cc.begin(), cc.end()) - cc.begin();
    CHECK(best - 3 == 1);
    CHECK(cc[4] == doctest::Approx(1.0));
  }

  TEST_CASE("timeseries rows") {
    const auto snap = testing::parse("holder_id,asset_id,shares\nA,x,1\nB,x,1\n", "2001Q1");
    auto net = network(snap.holders(), {{0, 1}});
    HolderMeta types{{"A", "Bank"}};
    const auto row = timeseries_row(snap, net, &types, nullptr);
    CHECK(row.validated_by_type.at("Bank") == 1);
    CHECK(row.validated_by_type.at("other") == 1);
    std::ostringstream a, b;
    const std::vector<TimeseriesRow> rows{row};
    write_timeseries(a, rows, {"Bank"});
    write_timeseries(b, rows, {"Bank"});
    CHECK(a.str() == b.str());
    CHECK(a.str() ==
          "date,holders,assets,links,market_value,validated_nodes,validated_fraction,average_degree,edge_count,"
          "validated_Bank\n2001Q1,2,1,2,,2,1,1,1,1\n");
  }
}
