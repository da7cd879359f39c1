#pragma once

// Multiple-testing correction and the validated monopartite projection.

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bivalid/bicm.hpp"
#include "bivalid/pvalue.hpp"
#include "bivalid/snapshot.hpp"

namespace bivalid {

enum class Correction { bonferroni, fdr };
Correction parse_correction(std::string_view s);
const char* to_string(Correction c);

struct CorrectionPolicy {
  Correction method = Correction::bonferroni;
  double epsilon = 1e-3;
  std::size_t n_tests = 0;  // pairs with nonzero overlap
};

struct ValidatedEdge {
  index_t a = 0;
  index_t b = 0;
  std::uint32_t overlap = 0;
  double p_value = 1.0;
};

struct ValidatedNetwork {
  std::string date;
  Layer layer = Layer::holders;
  std::vector<std::string> node_ids;  // every node of the projected layer
  std::vector<ValidatedEdge> edges;   // sorted by (a, b)
  std::vector<std::uint32_t> validated_degree;  // per node; 0 = not validated

  Correction method = Correction::bonferroni;
  Backend backend = Backend::exact;
  double epsilon = 0.0;
  std::size_t n_tests = 0;
  // Bonferroni: epsilon / n_tests, compared strictly. FDR: the
  // Benjamini-Hochberg cutoff k * epsilon / n_tests (0 when nothing passes).
  double p_star = 0.0;
  double fit_residual = 0.0;
  int fit_iterations = 0;

  std::size_t node_count() const { return node_ids.size(); }
  std::size_t validated_node_count() const;
  bool validated(index_t node) const { return node < validated_degree.size() && validated_degree[node] > 0; }
};

// Keeps the pairs passing the policy. Bonferroni: p < epsilon / n_tests.
// FDR: Benjamini-Hochberg at level epsilon over n_tests hypotheses.
// n_tests == 0 yields an empty network.
ValidatedNetwork threshold(const CorrectionPolicy& policy, std::span<const PValueResult> pvals,
                           std::size_t node_count);

struct ValidateOptions {
  Correction method = Correction::bonferroni;
  double epsilon = 1e-3;
  Backend backend = Backend::exact;
  int workers = 1;
  BicmOptions fit;
};

// degree_sequence -> fit_bicm -> overlaps -> p-values -> threshold. When
// `tested` is non-null it receives the p-value of every nonzero-overlap pair.
ValidatedNetwork validate_snapshot(const Snapshot& snap, Layer layer, const ValidateOptions& opts,
                                   std::vector<PValueResult>* tested = nullptr);

// `node_a,node_b,overlap,p_value`
void write_edges(std::ostream& out, const ValidatedNetwork& net);
// `node_a,node_b,overlap,p_value,backend`
void write_pvalues(std::ostream& out, const std::vector<std::string>& ids, std::span<const PValueResult> results);
nlohmann::json metadata_json(const ValidatedNetwork& net);

struct GroupStats {
  std::size_t nodes = 0;
  std::size_t validated = 0;
  double fraction = 0.0;
  double average_degree = 0.0;  // over validated nodes of the group
};

struct ValidatedStats {
  std::size_t node_count = 0;
  std::size_t validated_nodes = 0;
  std::size_t edge_count = 0;
  double fraction = 0.0;
  double average_degree = 0.0;  // 2E / validated nodes
  std::map<std::string, GroupStats> by_label;
};

// `labels` maps node ids to a type or category; nodes without a label are
// grouped under "other". Pass nullptr to skip the breakdown.
ValidatedStats validated_stats(const ValidatedNetwork& net,
                               const HolderMeta* labels = nullptr);

}  // namespace bivalid
