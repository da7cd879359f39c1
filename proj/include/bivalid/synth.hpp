#pragma once

// Synthetic bipartite fixtures and independent oracles for the overlap null
// distribution.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bivalid/bicm.hpp"
#include "bivalid/pvalue.hpp"
#include "bivalid/rng.hpp"
#include "bivalid/snapshot.hpp"

namespace bivalid {

struct DegreeLaw {
  enum class Kind { regular, power_law, explicit_list };
  Kind kind = Kind::regular;
  std::uint32_t degree = 1;        // regular
  double exponent = 2.5;           // power law: P(k) ~ k^-exponent
  std::uint32_t min_degree = 1;    // power law
  std::uint32_t max_degree = 0;    // power law; 0 = size of the opposite layer
  std::vector<std::uint32_t> list; // explicit
};

struct PlantedBlock {
  std::uint32_t holders = 0;
  std::uint32_t assets = 0;
  double fill = 1.0;
  bool dedicated = false;  // block assets lose their background links
};

struct SynthSpec {
  std::uint32_t holders = 0;
  std::uint32_t assets = 0;
  DegreeLaw holder_law;
  DegreeLaw asset_law;
  std::vector<PlantedBlock> blocks;
  std::uint64_t seed = 1;
  bool weighted = false;  // log-normal share counts when true
  std::string date = "synthetic";
};

SynthSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);

struct SynthResult {
  Snapshot snapshot;
  // Ids of the members of each planted block, in spec order.
  std::vector<std::vector<std::string>> block_holders;
  std::vector<std::vector<std::string>> block_assets;
};

// Background with exactly the requested degrees (after reconciling the two
// degree sums), randomized by degree-preserving swaps, then planted blocks
// overlaid. Same spec and seed give the same snapshot on every platform.
// Throws InputError when the degree request cannot be realized.
SynthResult generate_fixture(const SynthSpec& spec);
inline Snapshot generate(const SynthSpec& spec) { return generate_fixture(spec).snapshot; }

// Degree sequences drawn for the spec, before graph construction.
std::vector<std::uint32_t> draw_degrees(const DegreeLaw& law, std::uint32_t count, std::uint32_t opposite,
                                        Rng& rng);

// Price, outstanding shares and a sector label for every asset of `snap`;
// outstanding always exceeds the total held.
SecurityMetaTable generate_security_meta(const Snapshot& snap, std::uint64_t seed);

// --- oracles ----------------------------------------------------------------

struct OracleResult {
  enum class Method { exhaustive, monte_carlo };
  double estimate = 0.0;
  double std_error = 0.0;
  std::uint64_t samples = 0;
  Method method = Method::monte_carlo;
  bool low_sample_warning = false;  // fewer than 1000 samples
};

// Histogram of the overlap of nodes a and b over `samples` independent draws
// of their rows. Each opposite-layer node is drawn on its own with
// probability Q_a,s * Q_b,s taken from connection_probability.
std::vector<std::uint64_t> mc_overlap_histogram(const BicmSolution& sol, Layer layer, index_t a, index_t b,
                                                std::uint64_t samples, std::uint64_t seed);

// Frequency of {overlap >= observed} in a histogram, with its binomial
// standard error.
OracleResult mc_tail(const std::vector<std::uint64_t>& histogram, std::uint32_t observed);

OracleResult mc_pvalue_oracle(const BicmSolution& sol, Layer layer, index_t a, index_t b, std::uint32_t observed,
                              std::uint64_t samples, std::uint64_t seed);

inline constexpr std::uint32_t kExhaustiveTrialCap = 25;

// Full overlap distribution by enumerating all 2^n outcomes of the trials in
// `table` (n <= 25). Throws InputError above the cap.
std::vector<double> exhaustive_overlap_oracle(const DegreeClassTable& table);

}  // namespace bivalid
