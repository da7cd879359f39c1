#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "bivalid/error.hpp"
#include "bivalid/synth.hpp"
#include "bivalid/validator.hpp"
#include "support.hpp"

using namespace bivalid;

namespace {

std::vector<PValueResult> results(const std::vector<double>& p) {
  std::vector<PValueResult> out;
  for (std::size_t k = 0; k < p.size(); ++k)
    out.push_back({index_t(k), index_t(k + 1), 1, p[k], Backend::exact, false});
  return out;
}

std::set<std::pair<index_t, index_t>> edge_set(const ValidatedNetwork& n) {
  std::set<std::pair<index_t, index_t>> s;
  for (const auto& e : n.edges) s.insert({e.a, e.b});
  return s;
}

bool subset(const std::set<std::pair<index_t, index_t>>& a, const std::set<std::pair<index_t, index_t>>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

TEST_SUITE("validator") {
  TEST_CASE("bonferroni keeps p strictly below epsilon / n") {
    const auto r = results({1e-4, 2.5e-4, 2.4999e-4, 0.5});
    const auto net = threshold({Correction::bonferroni, 1e-3, 4}, r, 6);
    CHECK(net.p_star == doctest::Approx(2.5e-4));
    REQUIRE(net.edges.size() == 2);
    CHECK(net.edges[0].p_value == 1e-4);
    CHECK(net.edges[1].p_value == 2.4999e-4);
    CHECK(net.validated_node_count() == 4);
    CHECK(net.validated_degree.size() == 6);
  }

  TEST_CASE("benjamini-hochberg reference example") {
    const auto r = results({0.001, 0.008, 0.039, 0.041, 0.042, 0.06, 0.074, 0.205, 0.212, 0.216});
    const auto net = threshold({Correction::fdr, 0.05, 10}, r, 12);
    CHECK(net.edges.size() == 2);
    CHECK(net.p_star == doctest::Approx(0.01));
    const auto all = threshold({Correction::fdr, 0.5, 10}, r, 12);
    CHECK(all.edges.size() == 10);
    // a later rank passing pulls in earlier ones that fail their own cutoff
    const auto step = threshold({Correction::fdr, 0.1, 4}, results({0.03, 0.04, 0.06, 0.07}), 6);
    CHECK(step.edges.size() == 4);
  }

  TEST_CASE("edge cases") {
    CHECK(threshold({Correction::bonferroni, 1e-3, 0}, {}, 3).edges.empty());
    CHECK_THROWS_AS(threshold({Correction::bonferroni, 0.0, 1}, results({0.1}), 2), InputError);
    CHECK_THROWS_AS(threshold({Correction::bonferroni, 1.0, 1}, results({0.1}), 2), InputError);
    CHECK_THROWS_AS(threshold({Correction::fdr, 0.1, 1}, results({1.5}), 2), InputError);
    CHECK(parse_correction("fdr") == Correction::fdr);
    CHECK_THROWS_AS(parse_correction("holm"), InputError);
  }

  TEST_CASE("monotone in epsilon and in the test count; fdr contains bonferroni") {
    Rng rng(99);
    for (int k = 0; k < 200; ++k) {
      std::vector<double> p(1 + rng.below(60));
      for (auto& v : p) v = std::pow(rng.uniform(), 1 + 6 * rng.uniform());
      const auto r = results(p);
      const double e1 = 1e-4 + 0.1 * rng.uniform(), e2 = e1 * (1 + rng.uniform());
      for (Correction m : {Correction::bonferroni, Correction::fdr}) {
        const auto n1 = threshold({m, e1, p.size()}, r, p.size() + 1);
        const auto n2 = threshold({m, e2, p.size()}, r, p.size() + 1);
        REQUIRE(subset(edge_set(n1), edge_set(n2)));
        const auto more = threshold({m, e1, p.size() + 5}, r, p.size() + 1);
        REQUIRE(subset(edge_set(more), edge_set(n1)));
      }
      const auto b = threshold({Correction::bonferroni, e1, p.size()}, r, p.size() + 1);
      const auto f = threshold({Correction::fdr, e1, p.size()}, r, p.size() + 1);
      REQUIRE(subset(edge_set(b), edge_set(f)));
    }
  }

  TEST_CASE("validated set shrinks as p-values grow") {
    Rng rng(3);
    for (int k = 0; k < 100; ++k) {
      std::vector<double> p(20);
      for (auto& v : p) v = std::pow(rng.uniform(), 4);
      auto q = p;
      for (auto& v : q) v = std::min(1.0, v * (1 + rng.uniform()));
      for (Correction m : {Correction::bonferroni, Correction::fdr}) {
        const auto a = threshold({m, 0.05, 20}, results(p), 21);
        const auto b = threshold({m, 0.05, 20}, results(q), 21);
        REQUIRE(subset(edge_set(b), edge_set(a)));
      }
    }
  }

  TEST_CASE("validate a planted block") {
    SynthSpec spec;
    spec.holders = 60;
    spec.assets = 200;
    spec.holder_law = {DegreeLaw::Kind::regular, 8, 2.5, 1, 0, {}};
    spec.asset_law = {DegreeLaw::Kind::regular, 2, 2.5, 1, 0, {}};
    spec.blocks = {{6, 25, 1.0}};
    spec.seed = 12;
    const auto fx = generate_fixture(spec);
    std::vector<PValueResult> tested;
    const auto net = validate_snapshot(fx.snapshot, Layer::holders, {}, &tested);
    CHECK(net.n_tests == tested.size());
    CHECK(net.node_ids == fx.snapshot.holders());
    CHECK(net.fit_residual <= 1e-8);
    std::set<std::pair<std::string, std::string>> found;
    for (const auto& e : net.edges) found.insert({net.node_ids[e.a], net.node_ids[e.b]});
    const auto& members = fx.block_holders[0];
    for (std::size_t i = 0; i < members.size(); ++i)
      for (std::size_t j = i + 1; j < members.size(); ++j) CHECK(found.count({members[i], members[j]}) == 1);

    ValidateOptions hyper;
    hyper.backend = Backend::hypergeometric;
    const auto hn = validate_snapshot(fx.snapshot, Layer::holders, hyper);
    CHECK(hn.fit_iterations == 0);
    CHECK(hn.backend == Backend::hypergeometric);

    std::ostringstream os;
    write_edges(os, net);
    CHECK(os.str().rfind("node_a,node_b,overlap,p_value\n", 0) == 0);
    const auto meta = metadata_json(net);
    CHECK(meta["method"] == "bonferroni");
    CHECK(meta["p_star"].get<double>() == doctest::Approx(1e-3 / net.n_tests));
    CHECK(meta["edge_count"] == net.edges.size());
  }

  TEST_CASE("tiny snapshots give empty networks") {
    const auto one = testing::from_dense({{1, 1, 1}});
    const auto net = validate_snapshot(one, Layer::holders, {});
    CHECK(net.edges.empty());
    CHECK(net.node_count() == 1);
  }

  TEST_CASE("validated stats with labels") {
    ValidatedNetwork net;
    net.node_ids = {"A", "B", "C", "D"};
    net.edges = {{0, 1, 3, 1e-9}, {1, 2, 2, 1e-9}};
    net.validated_degree = {1, 2, 1, 0};
    HolderMeta labels{{"A", "Bank"}, {"B", "Bank"}, {"C", "Hedge Fund"}};
    const auto s = validated_stats(net, &labels);
    CHECK(s.validated_nodes == 3);
    CHECK(s.fraction == doctest::Approx(0.75));
    CHECK(s.average_degree == doctest::Approx(4.0 / 3));
    CHECK(s.by_label.at("Bank").validated == 2);
    CHECK(s.by_label.at("Bank").average_degree == doctest::Approx(1.5));
    CHECK(s.by_label.at("other").nodes == 1);
    CHECK(s.by_label.at("other").validated == 0);
  }

  TEST_CASE("dedicated planted clique gives its members validated degree 9") {
    SynthSpec s;
    s.holders = 200;
    s.assets = 1000;
    s.holder_law = {DegreeLaw::Kind::regular, 25, 2.5, 1, 0, {}};
    s.asset_law = {DegreeLaw::Kind::regular, 5, 2.5, 1, 0, {}};
    s.blocks = {{10, 40, 1.0, true}};
    s.seed = 31;
    const auto fx = generate_fixture(s);
    const auto net = validate_snapshot(fx.snapshot, Layer::holders, {});
    double sum = 0;
    for (const auto& id : fx.block_holders[0]) sum += net.validated_degree[fx.snapshot.index_of(Layer::holders, id)];
    CHECK(sum / 10 == 9.0);
    CHECK(net.edges.size() == 45);
  }
}
