#pragma once

// Subcommand implementations behind the bivalid executable. Each run_* loads
// every input before writing any output and returns the process exit code.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bivalid/analytics.hpp"
#include "bivalid/pvalue.hpp"
#include "bivalid/snapshot.hpp"
#include "bivalid/synth.hpp"
#include "bivalid/validator.hpp"

namespace bivalid {

enum ExitCode : int { kExitOk = 0, kExitInput = 1, kExitNumerical = 2, kExitOracle = 3 };

struct RunConfig {
  std::vector<std::string> snapshots;  // files or directories of *.csv
  std::string holder_meta;
  std::string security_meta;
  std::string market_returns;  // date,return
  std::string spec;            // synth / oracle fixture JSON
  std::string out_dir = "out";

  Layer layer = Layer::holders;
  Correction method = Correction::bonferroni;
  double epsilon = 1e-3;
  Backend backend = Backend::exact;
  std::size_t distress_n = 300;
  double r_max = 0.2;
  int dt = 1;  // distress and returns compare date t with date t + dt
  bool split_signs = false;
  DistressRanking ranking = DistressRanking::absolute_drop;
  bool by_type = false;
  bool buy_sell = false;
  bool write_pvalues = false;

  std::uint64_t seed = 1;
  bool seed_set = false;  // --seed given explicitly
  int workers = 1;

  // oracle
  std::uint64_t samples = 1'000'000;
  bool exhaustive = false;
  bool inject_fault = false;  // corrupts the exact backend; negative control
};

// Throws InputError when a field is out of range.
void check_config(const RunConfig& cfg);

// Expands directories into their *.csv files; result sorted by file stem.
std::vector<std::string> resolve_snapshot_paths(const std::vector<std::string>& inputs);

int run_validate(const RunConfig& cfg, std::ostream& log);
int run_fit(const RunConfig& cfg, std::ostream& log);
int run_timeseries(const RunConfig& cfg, std::ostream& log);
int run_analyze(const RunConfig& cfg, std::ostream& log);
int run_delta(const RunConfig& cfg, std::ostream& log);
int run_synth(const RunConfig& cfg, std::ostream& log);
int run_oracle(const RunConfig& cfg, std::ostream& log);

// Wraps a run_* call, mapping InputError to 1, NumericalError to 2 and
// anything else to 1, with the message on `log`.
int guarded(int (*fn)(const RunConfig&, std::ostream&), const RunConfig& cfg, std::ostream& log);

// --- oracle comparison ---------------------------------------------------------

// The 20 x 50 heterogeneous fixture used when no spec is given.
SynthSpec default_oracle_spec();

struct OracleRow {
  index_t a = 0;
  index_t b = 0;
  std::uint32_t overlap = 0;
  double exact = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;  // used for the SE multiple
  double se_multiple = 0.0;
};

struct OracleReport {
  std::vector<OracleRow> rows;
  double max_abs_deviation = 0.0;
  double max_se_multiple = 0.0;
  std::uint64_t samples = 0;
  std::size_t histograms = 0;  // distinct degree-class pairs sampled
};

// Monte-Carlo check of every pair of `layer` with nonzero observed overlap
// against `exact` (one p-value per pair, same order as `pairs`). Pairs sharing
// a degree-class pair share one histogram. The SE is computed from the
// estimate when it lies strictly inside (0, 1) and from the exact value
// otherwise.
OracleReport mc_compare(const BicmSolution& sol, Layer layer, std::span<const OverlapRecord> pairs,
                        std::span<const double> exact, std::uint64_t samples, std::uint64_t seed);

}  // namespace bivalid
