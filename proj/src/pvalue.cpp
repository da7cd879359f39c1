#include "bivalid/pvalue.hpp"

#include <omp.h>

#include <boost/math/distributions/hypergeometric.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bivalid/error.hpp"

namespace bivalid {

Backend parse_backend(std::string_view s) {
  if (s == "exact") return Backend::exact;
  if (s == "normal") return Backend::normal;
  if (s == "hypergeometric") return Backend::hypergeometric;
  throw InputError("unknown p-value backend '" + std::string(s) + "'");
}

const char* to_string(Backend b) {
  switch (b) {
    case Backend::exact: return "exact";
    case Backend::normal: return "normal";
    case Backend::hypergeometric: return "hypergeometric";
  }
  return "?";
}

std::uint64_t DegreeClassTable::total_trials() const {
  std::uint64_t n = 0;
  for (const auto& t : terms) n += t.trials;
  return n;
}

double DegreeClassTable::mean() const {
  double m = 0.0;
  for (const auto& t : terms) m += t.trials * t.q;
  return m;
}

double DegreeClassTable::variance() const {
  double v = 0.0;
  for (const auto& t : terms) v += t.trials * t.q * (1.0 - t.q);
  return v;
}

DegreeClassTable pair_class_table(const BicmSolution& sol, Layer layer, std::uint32_t class_a,
                                  std::uint32_t class_b) {
  const auto& opp = sol.classes(other(layer));
  DegreeClassTable t;
  t.terms.reserve(opp.size());
  for (std::uint32_t h = 0; h < opp.size(); ++h) {
    const double q = sol.q_class(layer, class_a, h) * sol.q_class(layer, class_b, h);
    t.terms.push_back({opp[h].multiplicity, std::clamp(q, 0.0, 1.0)});
  }
  return t;
}

std::vector<double> binomial_pmf(std::uint32_t n, double q, std::uint32_t x_max) {
  const std::uint32_t kmax = std::min(n, x_max);
  std::vector<double> b(kmax + 1, 0.0);
  const double log_b0 = n * std::log1p(-q);
  const double log_ratio = std::log(q) - std::log1p(-q);
  if (log_b0 > -700.0) {
    const double ratio = q / (1.0 - q);
    b[0] = std::exp(log_b0);
    for (std::uint32_t x = 1; x <= kmax; ++x)
      b[x] = b[x - 1] * (static_cast<double>(n - x + 1) / x) * ratio;
  } else {
    double lb = log_b0;
    b[0] = std::exp(lb);
    for (std::uint32_t x = 1; x <= kmax; ++x) {
      lb += std::log(static_cast<double>(n - x + 1) / x) + log_ratio;
      b[x] = std::exp(lb);
    }
  }
  return b;
}

OverlapDistribution convolve_classes(const DegreeClassTable& table, std::uint32_t x_max) {
  OverlapDistribution d;
  d.cap = x_max;
  d.pmf.assign(std::size_t{x_max} + 1, 0.0);

  std::uint64_t shift = 0;
  for (const auto& t : table.terms)
    if (t.trials > 0 && t.q >= 1.0) shift += t.trials;

  if (shift <= x_max) {
    const auto cap = static_cast<std::uint32_t>(x_max - shift);
    std::vector<double> cur(std::size_t{cap} + 1, 0.0), next(std::size_t{cap} + 1, 0.0);
    cur[0] = 1.0;
    std::uint32_t len = 1;  // cur[x] == 0 for x >= len
    for (const auto& t : table.terms) {
      if (t.trials == 0 || t.q <= 0.0 || t.q >= 1.0) continue;
      const auto b = binomial_pmf(t.trials, t.q, cap);
      const auto kmax = static_cast<std::uint32_t>(b.size() - 1);
      const std::uint32_t new_len = std::min<std::uint32_t>(cap + 1, len + kmax);
      for (std::uint32_t x = 0; x < new_len; ++x) {
        // Neumaier-compensated sum over k of cur[x - k] * b[k].
        double sum = 0.0, comp = 0.0;
        const std::uint32_t k_lo = x >= len ? x - len + 1 : 0;
        const std::uint32_t k_hi = std::min(x, kmax);
        for (std::uint32_t k = k_lo; k <= k_hi; ++k) {
          const double term = cur[x - k] * b[k];
          const double s = sum + term;
          comp += std::abs(sum) >= std::abs(term) ? (sum - s) + term : (term - s) + sum;
          sum = s;
        }
        next[x] = sum + comp;
      }
      std::fill(next.begin() + new_len, next.end(), 0.0);
      cur.swap(next);
      len = new_len;
    }
    for (std::uint32_t x = 0; x <= cap; ++x) d.pmf[x + shift] = cur[x];
  }

  double cdf = 0.0;
  for (std::uint32_t x = 0; x < x_max; ++x) cdf += d.pmf[x];
  d.cdf_at_cap = cdf;
  return d;
}

namespace {

std::uint32_t class_with_degree(const BicmSolution& sol, Layer layer, std::uint32_t degree) {
  const auto& cls = sol.classes(layer);
  for (std::uint32_t c = 0; c < cls.size(); ++c)
    if (cls[c].degree == degree) return c;
  throw InputError("no node of degree " + std::to_string(degree) + " on layer " + to_string(layer));
}

}  // namespace

OverlapDistribution overlap_distribution(const BicmSolution& sol, Layer layer, std::uint32_t degree_a,
                                         std::uint32_t degree_b, std::uint32_t x_max) {
  const auto ca = class_with_degree(sol, layer, degree_a);
  const auto cb = class_with_degree(sol, layer, degree_b);
  return convolve_classes(pair_class_table(sol, layer, std::min(ca, cb), std::max(ca, cb)), x_max);
}

double tail_from_distribution(const OverlapDistribution& dist, std::uint32_t overlap, bool* underflow) {
  if (underflow) *underflow = false;
  if (overlap == 0) return 1.0;
  if (overlap > dist.cap) throw InputError("distribution cap is below the observed overlap");
  double cdf = 0.0;
  for (std::uint32_t x = 0; x < overlap; ++x) cdf += dist.pmf[x];
  double p = std::clamp(1.0 - cdf, 0.0, 1.0);
  if (p < kPValueFloor) {
    p = 0.0;
    if (underflow) *underflow = true;
  }
  return p;
}

double normal_tail(double mean, double variance, std::uint32_t overlap) {
  if (overlap == 0) return 1.0;
  const double z = (overlap - 0.5 - mean) / std::sqrt(2.0 * variance);
  return std::clamp(0.5 * std::erfc(z), 0.0, 1.0);
}

double hypergeometric_tail(std::uint32_t universe, std::uint32_t d_a, std::uint32_t d_b, std::uint32_t overlap) {
  if (d_a > universe || d_b > universe) throw InputError("degree exceeds the universe size");
  if (overlap > std::min(d_a, d_b)) throw InputError("overlap exceeds the smaller degree");
  const std::uint32_t lower = d_a + d_b > universe ? d_a + d_b - universe : 0;
  if (overlap <= lower) return 1.0;
  boost::math::hypergeometric_distribution<double> dist(d_a, d_b, universe);
  return std::clamp(boost::math::cdf(boost::math::complement(dist, overlap - 1)), 0.0, 1.0);
}

// ---------------------------------------------------------------------------

std::pair<std::uint32_t, std::uint32_t> PValueEngine::classes_of(const OverlapRecord& pair) const {
  const auto& cls = sol_->class_of(layer_);
  if (pair.a >= cls.size() || pair.b >= cls.size()) throw InputError("pair references an unknown node");
  const auto ca = cls[pair.a], cb = cls[pair.b];
  return {std::min(ca, cb), std::max(ca, cb)};
}

std::shared_ptr<const OverlapDistribution> PValueEngine::distribution(std::uint32_t class_a, std::uint32_t class_b,
                                                                      std::uint32_t cap) const {
  const auto key = std::make_pair(std::min(class_a, class_b), std::max(class_a, class_b));
  {
    std::lock_guard lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end() && it->second->cap >= cap) return it->second;
  }
  auto dist = std::make_shared<const OverlapDistribution>(
      convolve_classes(pair_class_table(*sol_, layer_, key.first, key.second), cap));
  std::lock_guard lock(mu_);
  auto& slot = cache_[key];
  if (!slot || slot->cap < dist->cap) slot = dist;
  return slot;
}

std::size_t PValueEngine::cache_size() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

PValueResult PValueEngine::exact(const OverlapRecord& pair) const {
  PValueResult r{pair.a, pair.b, pair.overlap, 1.0, Backend::exact, false};
  const auto [ca, cb] = classes_of(pair);
  if (pair.overlap == 0) return r;
  const auto dist = distribution(ca, cb, pair.overlap);
  r.p_value = tail_from_distribution(*dist, pair.overlap, &r.underflow);
  return r;
}

PValueResult PValueEngine::normal(const OverlapRecord& pair) const {
  const auto [ca, cb] = classes_of(pair);
  const auto table = pair_class_table(*sol_, layer_, ca, cb);
  const double var = table.variance();
  if (!(var > 0.0)) return exact(pair);
  return {pair.a, pair.b, pair.overlap, normal_tail(table.mean(), var, pair.overlap), Backend::normal, false};
}

PValueResult PValueEngine::evaluate(const OverlapRecord& pair, Backend backend) const {
  switch (backend) {
    case Backend::exact: return exact(pair);
    case Backend::normal: return normal(pair);
    case Backend::hypergeometric: break;
  }
  throw InputError("the hypergeometric baseline needs a degree sequence, not a fitted model");
}

// ---------------------------------------------------------------------------

namespace {

struct Group {
  std::uint32_t ca, cb;
  std::size_t begin, end;  // range in `order`
};

std::vector<PValueResult> batch(const BicmSolution& sol, Layer layer, std::span<const OverlapRecord> pairs,
                                Backend backend, int workers) {
  if (backend == Backend::hypergeometric)
    throw InputError("the hypergeometric baseline needs a degree sequence, not a fitted model");
  const auto& cls = sol.class_of(layer);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> key(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].a >= cls.size() || pairs[i].b >= cls.size()) throw InputError("pair references an unknown node");
    const auto ca = cls[pairs[i].a], cb = cls[pairs[i].b];
    key[i] = {std::min(ca, cb), std::max(ca, cb)};
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return key[x] < key[y]; });
  std::vector<Group> groups;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && key[order[j]] == key[order[i]]) ++j;
    groups.push_back({key[order[i]].first, key[order[i]].second, i, j});
    i = j;
  }

  std::vector<PValueResult> out(pairs.size());
  auto run_group = [&](const Group& g) {
    const auto table = pair_class_table(sol, layer, g.ca, g.cb);
    bool use_exact = backend == Backend::exact;
    double mean = 0.0, var = 0.0;
    if (!use_exact) {
      mean = table.mean();
      var = table.variance();
      use_exact = !(var > 0.0);
    }
    if (use_exact) {
      std::uint32_t cap = 0;
      for (std::size_t k = g.begin; k < g.end; ++k) cap = std::max(cap, pairs[order[k]].overlap);
      const auto dist = convolve_classes(table, cap);
      for (std::size_t k = g.begin; k < g.end; ++k) {
        const auto& p = pairs[order[k]];
        auto& r = out[order[k]];
        r = {p.a, p.b, p.overlap, 1.0, Backend::exact, false};
        r.p_value = tail_from_distribution(dist, p.overlap, &r.underflow);
      }
    } else {
      for (std::size_t k = g.begin; k < g.end; ++k) {
        const auto& p = pairs[order[k]];
        out[order[k]] = {p.a, p.b, p.overlap, normal_tail(mean, var, p.overlap), Backend::normal, false};
      }
    }
  };

  if (workers <= 1) {
    for (const auto& g : groups) run_group(g);
  } else {
    const auto ng = static_cast<std::ptrdiff_t>(groups.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (std::ptrdiff_t gi = 0; gi < ng; ++gi) run_group(groups[gi]);
  }
  return out;
}

}  // namespace

std::vector<PValueResult> p_values_serial(const BicmSolution& sol, Layer layer,
                                          std::span<const OverlapRecord> pairs, Backend backend) {
  return batch(sol, layer, pairs, backend, 1);
}

std::vector<PValueResult> p_values(const BicmSolution& sol, Layer layer, std::span<const OverlapRecord> pairs,
                                   Backend backend, int workers) {
  return batch(sol, layer, pairs, backend, workers);
}

std::vector<PValueResult> p_values_hypergeometric(const DegreeSequence& deg, Layer layer,
                                                  std::span<const OverlapRecord> pairs) {
  const auto& d = deg.degrees(layer);
  const auto universe = static_cast<std::uint32_t>(deg.degrees(other(layer)).size());
  std::vector<PValueResult> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.a >= d.size() || p.b >= d.size()) throw InputError("pair references an unknown node");
    out.push_back({p.a, p.b, p.overlap, hypergeometric_tail(universe, d[p.a], d[p.b], p.overlap),
                   Backend::hypergeometric, false});
  }
  return out;
}

}  // namespace bivalid
