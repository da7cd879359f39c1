#include "bivalid/synth.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "bivalid/error.hpp"

namespace bivalid {

namespace {

DegreeLaw law_from_json(const nlohmann::json& j) {
  DegreeLaw law;
  const auto kind = j.value("law", std::string("regular"));
  if (kind == "regular") {
    law.kind = DegreeLaw::Kind::regular;
    law.degree = j.at("degree").get<std::uint32_t>();
  } else if (kind == "power_law") {
    law.kind = DegreeLaw::Kind::power_law;
    law.exponent = j.value("exponent", 2.5);
    law.min_degree = j.value("min_degree", 1u);
    law.max_degree = j.value("max_degree", 0u);
    if (!(law.exponent > 1.0)) throw InputError("power-law exponent must exceed 1");
  } else if (kind == "explicit") {
    law.kind = DegreeLaw::Kind::explicit_list;
    law.list = j.at("degrees").get<std::vector<std::uint32_t>>();
  } else {
    throw InputError("unknown degree law '" + kind + "'");
  }
  return law;
}

nlohmann::json law_to_json(const DegreeLaw& law) {
  switch (law.kind) {
    case DegreeLaw::Kind::regular: return {{"law", "regular"}, {"degree", law.degree}};
    case DegreeLaw::Kind::power_law:
      return {{"law", "power_law"},
              {"exponent", law.exponent},
              {"min_degree", law.min_degree},
              {"max_degree", law.max_degree}};
    case DegreeLaw::Kind::explicit_list: return {{"law", "explicit"}, {"degrees", law.list}};
  }
  return {};
}

std::vector<std::string> make_ids(char prefix, std::uint32_t n) {
  const auto width = std::to_string(n > 0 ? n - 1 : 0).size();
  std::vector<std::string> ids(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto digits = std::to_string(i);
    ids[i] = std::string(1, prefix) + std::string(width - digits.size(), '0') + digits;
  }
  return ids;
}

// Moves the asset degree sum onto the holder degree sum, one unit at a time
// on randomly chosen assets that stay within [1, holders].
void reconcile(const std::vector<std::uint32_t>& hd, std::vector<std::uint32_t>& ad, std::uint32_t holders,
               Rng& rng) {
  std::int64_t diff = 0;
  for (auto d : hd) diff += d;
  for (auto d : ad) diff -= d;
  std::vector<std::uint32_t> eligible;
  while (diff != 0) {
    eligible.clear();
    for (std::uint32_t s = 0; s < ad.size(); ++s)
      if (diff > 0 ? ad[s] < holders : ad[s] > 1) eligible.push_back(s);
    if (eligible.empty()) throw InputError("infeasible degree request: degree sums cannot be reconciled");
    const auto s = eligible[rng.below(eligible.size())];
    if (diff > 0) {
      ad[s]++;
      diff--;
    } else {
      ad[s]--;
      diff++;
    }
  }
}

}  // namespace

SynthSpec spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.holders = j.at("holders").get<std::uint32_t>();
  s.assets = j.at("assets").get<std::uint32_t>();
  s.holder_law = law_from_json(j.at("holder_degrees"));
  s.asset_law = law_from_json(j.at("asset_degrees"));
  if (j.contains("blocks")) {
    for (const auto& b : j.at("blocks"))
      s.blocks.push_back({b.at("holders").get<std::uint32_t>(), b.at("assets").get<std::uint32_t>(),
                          b.value("fill", 1.0), b.value("dedicated", false)});
  }
  s.seed = j.value("seed", std::uint64_t{1});
  s.weighted = j.value("weighted", false);
  s.date = j.value("date", std::string("synthetic"));
  return s;
}

nlohmann::json to_json(const SynthSpec& spec) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : spec.blocks) blocks.push_back({{"holders", b.holders}, {"assets", b.assets}, {"fill", b.fill}, {"dedicated", b.dedicated}});
  return {{"holders", spec.holders},
          {"assets", spec.assets},
          {"holder_degrees", law_to_json(spec.holder_law)},
          {"asset_degrees", law_to_json(spec.asset_law)},
          {"blocks", blocks},
          {"seed", spec.seed},
          {"weighted", spec.weighted},
          {"date", spec.date}};
}

std::vector<std::uint32_t> draw_degrees(const DegreeLaw& law, std::uint32_t count, std::uint32_t opposite,
                                        Rng& rng) {
  std::vector<std::uint32_t> d(count);
  switch (law.kind) {
    case DegreeLaw::Kind::regular:
      std::fill(d.begin(), d.end(), law.degree);
      break;
    case DegreeLaw::Kind::power_law: {
      const std::uint32_t cap = law.max_degree ? std::min(law.max_degree, opposite) : opposite;
      const double lo = std::max(1u, law.min_degree);
      for (auto& k : d) {
        const double u = 1.0 - rng.uniform();  // (0, 1]
        const double x = std::floor(lo * std::pow(u, -1.0 / (law.exponent - 1.0)));
        k = static_cast<std::uint32_t>(std::min<double>(x, cap));
      }
      break;
    }
    case DegreeLaw::Kind::explicit_list:
      if (law.list.size() != count) throw InputError("explicit degree list has the wrong length");
      d = law.list;
      break;
  }
  for (auto k : d)
    if (k == 0 || k > opposite) throw InputError("infeasible degree request: degree " + std::to_string(k) +
                                                 " outside [1, " + std::to_string(opposite) + "]");
  return d;
}

SynthResult generate_fixture(const SynthSpec& spec) {
  if (spec.holders == 0 || spec.assets == 0) throw InputError("synthetic spec needs both layers non-empty");
  Rng deg_rng(derive_seed(spec.seed, 1));
  auto hd = draw_degrees(spec.holder_law, spec.holders, spec.assets, deg_rng);
  auto ad = draw_degrees(spec.asset_law, spec.assets, spec.holders, deg_rng);
  reconcile(hd, ad, spec.holders, deg_rng);

  // Greedy realization: each holder, largest degree first, takes the assets
  // with the most remaining stubs. Succeeds iff the sequences are bigraphic.
  Rng build_rng(derive_seed(spec.seed, 2));
  std::vector<std::uint32_t> holder_order(spec.holders), asset_order(spec.assets);
  std::iota(holder_order.begin(), holder_order.end(), 0);
  std::iota(asset_order.begin(), asset_order.end(), 0);
  build_rng.shuffle(holder_order.begin(), holder_order.end());
  build_rng.shuffle(asset_order.begin(), asset_order.end());
  std::stable_sort(holder_order.begin(), holder_order.end(),
                   [&](std::uint32_t x, std::uint32_t y) { return hd[x] > hd[y]; });
  std::vector<std::uint32_t> remaining = ad;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (auto h : holder_order) {
    std::stable_sort(asset_order.begin(), asset_order.end(),
                     [&](std::uint32_t x, std::uint32_t y) { return remaining[x] > remaining[y]; });
    for (std::uint32_t k = 0; k < hd[h]; ++k) {
      const auto s = asset_order[k];
      if (remaining[s] == 0) throw InputError("infeasible degree request: sequences are not bigraphic");
      remaining[s]--;
      edges.emplace_back(h, s);
    }
  }

  // Degree-preserving randomization.
  Rng swap_rng(derive_seed(spec.seed, 3));
  const auto key = [&](std::uint32_t h, std::uint32_t s) { return std::uint64_t{h} * spec.assets + s; };
  std::unordered_set<std::uint64_t> present;
  present.reserve(edges.size() * 2);
  for (const auto& [h, s] : edges) present.insert(key(h, s));
  if (edges.size() >= 2) {
    const std::uint64_t attempts = 10 * edges.size();
    for (std::uint64_t t = 0; t < attempts; ++t) {
      const auto i = swap_rng.below(edges.size()), j = swap_rng.below(edges.size());
      auto& [h1, s1] = edges[i];
      auto& [h2, s2] = edges[j];
      if (h1 == h2 || s1 == s2) continue;
      if (present.count(key(h1, s2)) || present.count(key(h2, s1))) continue;
      present.erase(key(h1, s1));
      present.erase(key(h2, s2));
      present.insert(key(h1, s2));
      present.insert(key(h2, s1));
      std::swap(s1, s2);
    }
  }

  SynthResult result;
  auto hids = make_ids('h', spec.holders);
  auto aids = make_ids('a', spec.assets);
  Rng block_rng(derive_seed(spec.seed, 4));
  for (const auto& b : spec.blocks) {
    if (b.holders > spec.holders || b.assets > spec.assets) throw InputError("planted block larger than the layer");
    std::vector<std::uint32_t> hs(spec.holders), as(spec.assets);
    std::iota(hs.begin(), hs.end(), 0);
    std::iota(as.begin(), as.end(), 0);
    block_rng.shuffle(hs.begin(), hs.end());
    block_rng.shuffle(as.begin(), as.end());
    hs.resize(b.holders);
    as.resize(b.assets);
    std::sort(hs.begin(), hs.end());
    std::sort(as.begin(), as.end());
    if (b.dedicated) {
      const std::unordered_set<std::uint32_t> chosen(as.begin(), as.end());
      std::erase_if(edges, [&](const auto& e) {
        if (!chosen.count(e.second)) return false;
        present.erase(key(e.first, e.second));
        return true;
      });
    }
    for (auto h : hs)
      for (auto s : as)
        if (block_rng.uniform() < b.fill && present.insert(key(h, s)).second) edges.emplace_back(h, s);
    std::vector<std::string> bh, ba;
    for (auto h : hs) bh.push_back(hids[h]);
    for (auto s : as) ba.push_back(aids[s]);
    result.block_holders.push_back(std::move(bh));
    result.block_assets.push_back(std::move(ba));
  }

  std::sort(edges.begin(), edges.end());
  Rng weight_rng(derive_seed(spec.seed, 5));
  std::vector<Triplet> ts;
  ts.reserve(edges.size());
  for (const auto& [h, s] : edges) {
    double w = 1.0;
    if (spec.weighted) w = std::floor(std::exp(8.0 + 1.5 * weight_rng.normal())) + 1.0;
    ts.push_back({h, s, w});
  }
  result.snapshot = Snapshot::from_triplets(spec.date, std::move(hids), std::move(aids), std::move(ts), spec.weighted);
  return result;
}

SecurityMetaTable generate_security_meta(const Snapshot& snap, std::uint64_t seed) {
  static const char* kSectors[] = {"Communications", "Consumer Discretionary", "Consumer Staples", "Energy",
                                   "Financials",     "Health Care",            "Industrials",      "Materials",
                                   "Technology",     "Utilities",              "other"};
  Rng rng(derive_seed(seed, 11));
  SecurityMetaTable meta;
  for (index_t s = 0; s < snap.num_assets(); ++s) {
    double held = 0.0;
    for (auto h : snap.holders_of(s)) held += snap.shares(h, s);
    SecurityMeta m;
    m.price = std::round(std::exp(3.0 + 0.8 * rng.normal()) * 100.0) / 100.0 + 0.01;
    m.outstanding = std::ceil(held * (1.5 + 3.0 * rng.uniform()));
    m.category = kSectors[rng.below(std::size(kSectors))];
    meta.emplace(snap.assets()[s], m);
  }
  return meta;
}

// ---------------------------------------------------------------------------

std::vector<std::uint64_t> mc_overlap_histogram(const BicmSolution& sol, Layer layer, index_t a, index_t b,
                                                std::uint64_t samples, std::uint64_t seed) {
  const auto n_opp = static_cast<index_t>(sol.num_nodes(other(layer)));
  if (a >= sol.num_nodes(layer) || b >= sol.num_nodes(layer)) throw InputError("oracle pair references an unknown node");
  auto q = [&](index_t node, index_t s) {
    return layer == Layer::holders ? sol.connection_probability(node, s) : sol.connection_probability(s, node);
  };
  std::uint32_t forced = 0;
  std::vector<std::uint64_t> thresholds;
  for (index_t s = 0; s < n_opp; ++s) {
    const double p = q(a, s) * q(b, s);
    if (p >= 1.0) {
      ++forced;
    } else if (p > 0.0) {
      // P(u < t) = t / 2^64 for a raw 64-bit draw u.
      thresholds.push_back(static_cast<std::uint64_t>(std::ldexp(p, 64)));
    }
  }
  const std::uint32_t support = forced + static_cast<std::uint32_t>(thresholds.size());
  constexpr std::uint64_t kChunks = 64;
  std::vector<std::vector<std::uint64_t>> partial(kChunks, std::vector<std::uint64_t>(support + 1, 0));
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(kChunks); ++c) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    const std::uint64_t n = samples / kChunks + (static_cast<std::uint64_t>(c) < samples % kChunks ? 1 : 0);
    auto& hist = partial[c];
    // A trial compares a 32-bit uniform with the threshold's high word and,
    // on a tie, fresh bits with its low word: the same law as one 64-bit
    // comparison, at half the engine calls.
    const auto trial = [&rng](std::uint64_t t, std::uint32_t u) -> std::uint32_t {
      const auto hi = static_cast<std::uint32_t>(t >> 32);
      if (u != hi) return u < hi;
      return (rng.next() >> 32) < (t & 0xffffffffu);
    };
    const std::size_t m = thresholds.size();
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint32_t x = forced;
      std::size_t k = 0;
      for (; k + 1 < m; k += 2) {
        const std::uint64_t r = rng.next();
        x += trial(thresholds[k], static_cast<std::uint32_t>(r >> 32));
        x += trial(thresholds[k + 1], static_cast<std::uint32_t>(r));
      }
      if (k < m) x += trial(thresholds[k], static_cast<std::uint32_t>(rng.next() >> 32));
      hist[x]++;
    }
  }
  std::vector<std::uint64_t> hist(support + 1, 0);
  for (const auto& p : partial)
    for (std::size_t x = 0; x <= support; ++x) hist[x] += p[x];
  return hist;
}

OracleResult mc_tail(const std::vector<std::uint64_t>& histogram, std::uint32_t observed) {
  OracleResult r;
  r.method = OracleResult::Method::monte_carlo;
  for (auto c : histogram) r.samples += c;
  r.low_sample_warning = r.samples < 1000;
  if (observed == 0) {
    r.estimate = 1.0;
    return r;
  }
  std::uint64_t hits = 0;
  for (std::size_t x = observed; x < histogram.size(); ++x) hits += histogram[x];
  if (r.samples == 0) return r;
  r.estimate = static_cast<double>(hits) / r.samples;
  r.std_error = std::sqrt(r.estimate * (1.0 - r.estimate) / r.samples);
  return r;
}

OracleResult mc_pvalue_oracle(const BicmSolution& sol, Layer layer, index_t a, index_t b, std::uint32_t observed,
                              std::uint64_t samples, std::uint64_t seed) {
  return mc_tail(mc_overlap_histogram(sol, layer, a, b, samples, seed), observed);
}

namespace {

struct Enumerator {
  const std::vector<double>& p;
  std::vector<double> sum, comp;

  void add(std::size_t x, double v) {
    const double s = sum[x] + v;
    comp[x] += std::abs(sum[x]) >= std::abs(v) ? (sum[x] - s) + v : (v - s) + sum[x];
    sum[x] = s;
  }

  void walk(std::size_t i, std::size_t successes, double prob) {
    if (i == p.size()) {
      add(successes, prob);
      return;
    }
    walk(i + 1, successes, prob * (1.0 - p[i]));
    walk(i + 1, successes + 1, prob * p[i]);
  }
};

}  // namespace

std::vector<double> exhaustive_overlap_oracle(const DegreeClassTable& table) {
  if (table.total_trials() > kExhaustiveTrialCap)
    throw InputError("exhaustive oracle is capped at " + std::to_string(kExhaustiveTrialCap) +
                     " trials; use the Monte-Carlo oracle instead");
  std::vector<double> trials;
  for (const auto& t : table.terms)
    for (std::uint32_t k = 0; k < t.trials; ++k) trials.push_back(t.q);
  Enumerator e{trials, std::vector<double>(trials.size() + 1, 0.0), std::vector<double>(trials.size() + 1, 0.0)};
  e.walk(0, 0, 1.0);
  std::vector<double> pi(trials.size() + 1);
  for (std::size_t x = 0; x < pi.size(); ++x) pi[x] = e.sum[x] + e.comp[x];
  return pi;
}

}  // namespace bivalid
