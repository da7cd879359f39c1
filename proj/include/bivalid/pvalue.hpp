#pragma once

// Null distribution of a pair's overlap and its upper-tail p-value
//
//   P[o] = 1 - sum_{x < o} pi(x)
//
// where pi is the distribution of a sum of independent Bernoulli trials, one
// per node of the summed layer, with success probability Q_a,s * Q_b,s.
// Nodes of equal degree share a probability, so pi is a convolution of one
// binomial per degree class. Every convolution is truncated at the observed
// overlap, which is all the tail needs.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string_view>
#include <vector>

#include "bivalid/bicm.hpp"
#include "bivalid/snapshot.hpp"

namespace bivalid {

enum class Backend { exact, normal, hypergeometric };
Backend parse_backend(std::string_view s);
const char* to_string(Backend b);

struct ClassTerm {
  std::uint32_t trials = 0;  // nodes in the class
  double q = 0.0;            // per-trial success probability for the pair
};

struct DegreeClassTable {
  std::vector<ClassTerm> terms;

  std::uint64_t total_trials() const;
  double mean() const;
  double variance() const;
};

// Per-class success probabilities for two classes of `layer`, summed over the
// classes of the opposite layer.
DegreeClassTable pair_class_table(const BicmSolution& sol, Layer layer, std::uint32_t class_a,
                                  std::uint32_t class_b);

struct OverlapDistribution {
  std::uint32_t cap = 0;    // pmf covers x = 0..cap
  std::vector<double> pmf;  // size cap + 1
  double cdf_at_cap = 0.0;  // sum of pmf[x] for x < cap
};

// Truncated convolution of binomials. Classes with q = 1 shift the support;
// classes with q = 0 are skipped.
OverlapDistribution convolve_classes(const DegreeClassTable& table, std::uint32_t x_max);

// Binomial(n, q) pmf for x = 0..min(n, x_max) through the ratio recurrence
// pmf(x) = pmf(x-1) * (n-x+1)/x * q/(1-q), starting from (1-q)^n. The start
// value is taken in log space when it would underflow. Requires 0 < q < 1.
std::vector<double> binomial_pmf(std::uint32_t n, double q, std::uint32_t x_max);

// Distribution for the pair of degrees (d_a, d_b) on `layer`.
OverlapDistribution overlap_distribution(const BicmSolution& sol, Layer layer, std::uint32_t degree_a,
                                         std::uint32_t degree_b, std::uint32_t x_max);

struct PValueResult {
  index_t a = 0;
  index_t b = 0;
  std::uint32_t overlap = 0;
  double p_value = 1.0;
  Backend backend = Backend::exact;
  // p fell below the representable floor and is reported as 0.
  bool underflow = false;
};

inline constexpr double kPValueFloor = 1e-300;

// Tail at `overlap` from a distribution whose cap is at least `overlap`,
// clamped to [0, 1].
double tail_from_distribution(const OverlapDistribution& dist, std::uint32_t overlap, bool* underflow = nullptr);

// Upper tail of a Normal(mean, var) at overlap - 1/2.
double normal_tail(double mean, double variance, std::uint32_t overlap);

// P(X >= overlap) for X ~ Hypergeometric(universe, d_a, d_b). Throws
// InputError when overlap > min(d_a, d_b) or a degree exceeds the universe.
double hypergeometric_tail(std::uint32_t universe, std::uint32_t d_a, std::uint32_t d_b, std::uint32_t overlap);

// Memoizing single-pair p-value evaluator. Distributions are cached per
// degree-class pair and grown when a larger overlap is requested; cached
// values below the old cap are unchanged by growth. Safe for concurrent use.
class PValueEngine {
 public:
  PValueEngine(const BicmSolution& sol, Layer layer) : sol_(&sol), layer_(layer) {}

  PValueResult exact(const OverlapRecord& pair) const;
  PValueResult normal(const OverlapRecord& pair) const;
  PValueResult evaluate(const OverlapRecord& pair, Backend backend) const;

  std::shared_ptr<const OverlapDistribution> distribution(std::uint32_t class_a, std::uint32_t class_b,
                                                          std::uint32_t cap) const;
  std::size_t cache_size() const;

 private:
  std::pair<std::uint32_t, std::uint32_t> classes_of(const OverlapRecord& pair) const;

  const BicmSolution* sol_;
  Layer layer_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<std::uint32_t, std::uint32_t>, std::shared_ptr<const OverlapDistribution>> cache_;
};

// Batch p-values in input order for the exact or normal backend. Pairs are
// grouped by degree-class pair and each group's distribution is computed once
// up to the group's largest overlap. The parallel kernel distributes groups
// over `workers` OpenMP threads and returns the same values as the serial one.
std::vector<PValueResult> p_values(const BicmSolution& sol, Layer layer, std::span<const OverlapRecord> pairs,
                                   Backend backend, int workers = 1);
std::vector<PValueResult> p_values_serial(const BicmSolution& sol, Layer layer,
                                          std::span<const OverlapRecord> pairs, Backend backend);

// Baseline ignoring degree heterogeneity of the summed layer.
std::vector<PValueResult> p_values_hypergeometric(const DegreeSequence& deg, Layer layer,
                                                  std::span<const OverlapRecord> pairs);

}  // namespace bivalid
