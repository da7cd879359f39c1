#pragma once

// Diagnostics of validated networks: portfolio weights and concentration,
// per-security validated fractions, distressed-institution enrichment, return
// regressions, category internal degree and per-date time series.

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bivalid/snapshot.hpp"
#include "bivalid/validator.hpp"

namespace bivalid {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// --- regression helpers ------------------------------------------------------

struct OlsFit {
  double slope = kNaN;
  double intercept = kNaN;
  double slope_se = kNaN;
  double intercept_se = kNaN;
  std::size_t n = 0;
};

// Ordinary least squares y = slope * x + intercept. Throws InputError with
// fewer than two distinct x values.
OlsFit ols(std::span<const double> x, std::span<const double> y);

struct LogLinearFit {
  OlsFit fit;            // y against ln(x)
  std::size_t dropped = 0;  // rows with x <= 0 or non-finite values
};
LogLinearFit fit_log_linear(std::span<const double> x, std::span<const double> y);

// Pearson correlation of x[t] with y[t + lag] for lag in [-max_lag, max_lag].
// Entry max_lag + lag holds the value for `lag`; NaN where undefined.
std::vector<double> cross_correlation(std::span<const double> x, std::span<const double> y, int max_lag);

// --- portfolio metrics -------------------------------------------------------

// Entry-aligned with the snapshot's row-major entries.
struct PortfolioMetrics {
  std::vector<double> weight;         // p_s W_is / MV_i; NaN for excluded holders
  std::vector<double> concentration;  // W_is / outstanding_s; NaN when unknown
  std::vector<double> market_value;   // per holder; NaN when excluded
  std::vector<char> included;         // per holder
  double total_market_value = 0.0;    // over included holders
  std::vector<std::string> warnings;
};

// Holders with an unpriced asset or zero portfolio value are excluded and
// named in `warnings`. Throws InputError for a binary-only snapshot.
PortfolioMetrics portfolio_metrics(const Snapshot& snap, const SecurityMetaTable& meta);

struct ShareSplit {
  index_t holder = 0;
  double overlapping_mean = kNaN;      // mean w over assets shared with a validated neighbor
  double non_overlapping_mean = kNaN;  // NaN when every asset overlaps
  double inverse_degree = 0.0;         // mean w over all assets, 1 / d_i
  std::size_t overlapping = 0;
  std::size_t non_overlapping = 0;
};

struct ShareSplitReport {
  std::vector<ShareSplit> holders;
  // Mean over holders of (overlapping_mean * d_i - 1).
  double per_holder_excess = kNaN;
  // Pooled over all overlapping positions: sum w / sum (1 / d_i) - 1.
  double pooled_excess = kNaN;
};

ShareSplitReport overlap_share_split(const Snapshot& snap, const ValidatedNetwork& net, const PortfolioMetrics& pm);

// --- security validation -----------------------------------------------------

struct SecurityStat {
  index_t asset = 0;
  std::uint32_t degree = 0;
  std::uint64_t pairs = 0;            // d_s (d_s - 1) / 2
  std::uint64_t validated_pairs = 0;  // holder pairs of s joined by a validated edge
  double fraction = 0.0;              // f_s
  double capitalization = kNaN;       // p_s * outstanding_s
  double mean_concentration = kNaN;   // sum_i c_is / d_s
};

// Assets with at least two holders. `pm` may be null for binary snapshots, in
// which case concentration stays NaN.
std::vector<SecurityStat> security_validation_stats(const Snapshot& snap, const ValidatedNetwork& net,
                                                    const SecurityMetaTable& meta, const PortfolioMetrics* pm);

struct SecurityRegression {
  std::uint32_t degree_lo = 0;  // bucket [lo, hi)
  std::uint32_t degree_hi = 0;
  std::string regressor;        // capitalization | concentration | degree
  LogLinearFit fit;
};

// f_s regressed on the natural log of each regressor, per degree bucket.
// Buckets with fewer than two usable points are omitted.
std::vector<SecurityRegression> security_regressions(std::span<const SecurityStat> stats,
                                                     std::span<const std::uint32_t> bucket_edges);

// --- distressed institutions -------------------------------------------------

enum class DistressRanking { absolute_drop, return_drop };

struct DistressReport {
  std::string date;
  std::size_t n_requested = 0;
  std::size_t population = 0;            // holders with a value at both dates
  std::size_t validated_population = 0;  // of which validated
  std::vector<std::string> distressed;   // L_n, largest drop first
  double l = kNaN;
  double l_v = kNaN;
  double g_i = kNaN;
  std::size_t validated_edges = 0;
  std::size_t validated_edges_distressed = 0;
  std::size_t overlapping_pairs = 0;
  std::size_t overlapping_pairs_distressed = 0;
  double r_i = kNaN;
  double market_return = kNaN;
  std::vector<std::string> warnings;
};

// G_I = P[distressed | validated] / P[distressed] over a population.
double node_enrichment(std::span<const char> validated, std::span<const char> distressed);

// `mv_now` and `mv_next` are per-holder market values keyed by id; `net` and
// `pairs` are the validated network and nonzero-overlap pairs at the earlier
// date, on the holder layer. R_I counts only pairs whose endpoints are both in
// the population.
DistressReport distress_report(const std::map<std::string, double>& mv_now,
                               const std::map<std::string, double>& mv_next, const ValidatedNetwork& net,
                               std::span<const OverlapRecord> pairs, std::size_t n, double market_return,
                               DistressRanking ranking = DistressRanking::absolute_drop);

// Market value per included holder, keyed by id.
std::map<std::string, double> market_values(const Snapshot& snap, const PortfolioMetrics& pm);

// --- returns regression ------------------------------------------------------

struct DateReturns {
  std::string date;
  std::vector<double> returns;
  std::vector<char> validated;
};

// MV_i(next) / MV_i(now) - 1 for holders valued at both dates, labelled by
// membership in `net` (validated at the earlier date).
DateReturns portfolio_returns(const std::map<std::string, double>& mv_now,
                              const std::map<std::string, double>& mv_next, const ValidatedNetwork& net);

struct RegressionPoint {
  std::string date;
  int sign = 0;  // 0: all returns; +1 / -1: split by sign
  double out_mean = kNaN;
  double in_mean = kNaN;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
};

struct ReturnsRegression {
  double r_max = 0.0;
  bool split_signs = false;
  std::vector<RegressionPoint> points;
  OlsFit fit;  // in_mean = slope * out_mean + intercept, over all points
  // Split mode only: fits over the points of each sign; NaN when a sign has
  // fewer than two distinct x values.
  OlsFit fit_positive;
  OlsFit fit_negative;
  double included_fraction = kNaN;
};

// Only returns with |r| < r_max enter; a date contributes a point when both
// sides are non-empty. Throws InputError with fewer than two usable points.
// In split mode returns r >= 0 and r < 0 give separate points per date.
ReturnsRegression returns_regression(std::span<const DateReturns> series, double r_max, bool split_signs = false);

// One regression per cutoff; cutoffs leaving fewer than two points yield a
// regression with no points and a NaN fit instead of throwing.
std::vector<ReturnsRegression> slope_curve(std::span<const DateReturns> series, std::span<const double> r_max_values,
                                           bool split_signs = false);

// --- securities layer categories --------------------------------------------

struct CategoryInternal {
  std::string category;
  std::size_t nodes = 0;
  std::size_t validated_nodes = 0;
  double validated_fraction = 0.0;
  std::size_t internal_links = 0;
  double mean_internal_degree = 0.0;  // over validated nodes of the category
};

// Assets without metadata fall under "other".
std::vector<CategoryInternal> internal_degree(const ValidatedNetwork& net, const SecurityMetaTable& meta);

// --- time series -------------------------------------------------------------

struct TimeseriesRow {
  std::string date;
  std::size_t holders = 0;
  std::size_t assets = 0;
  std::size_t links = 0;
  double market_value = kNaN;
  std::size_t validated_nodes = 0;
  double validated_fraction = 0.0;
  double average_degree = 0.0;
  std::size_t edge_count = 0;
  std::map<std::string, std::size_t> validated_by_type;
};

TimeseriesRow timeseries_row(const Snapshot& snap, const ValidatedNetwork& net, const HolderMeta* types,
                             const PortfolioMetrics* pm);

// Header `date,holders,assets,links,market_value,validated_nodes,
// validated_fraction,average_degree,edge_count` plus `validated_<type>`
// columns for the given types.
void write_timeseries(std::ostream& out, std::span<const TimeseriesRow> rows, const std::vector<std::string>& types);

}  // namespace bivalid
