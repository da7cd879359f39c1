#pragma once

// Bipartite Configuration Model: maximum-entropy ensemble of bipartite graphs
// whose expected degrees equal the observed ones. Edges are independent with
// Q_is = x_i y_s / (1 + x_i y_s), one multiplier per degree class.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "bivalid/snapshot.hpp"

namespace bivalid {

struct BicmOptions {
  double tol = 1e-8;  // max relative degree error
  int max_iter = 10000;
  // Fixed point counts as stalled when the residual improves by less than
  // this fraction over `stall_window` accepted iterations.
  double stall_improvement = 1e-3;
  int stall_window = 50;
  // Testing hook: run only the fixed-point iteration.
  bool allow_newton = true;
};

// Full-degree nodes (linked to every active node of the other layer) and
// nodes left with no residual links are peeled before fitting. A peeled
// node's links are forced (Q = 1 for full, Q = 0 for empty) against every node
// still active when it was peeled.
enum class ClassState : std::uint8_t { core, full, empty };

struct ClassInfo {
  std::uint32_t degree = 0;        // observed degree
  std::uint32_t multiplicity = 0;  // nodes sharing it
  ClassState state = ClassState::core;
  std::uint32_t peel_step = 0;      // meaningful for full/empty
  std::uint32_t core_degree = 0;    // residual degree inside the core
  double theta = 0.0;               // core multiplier; +inf for full, 0 for empty
};

class BicmSolution {
 public:
  const std::vector<ClassInfo>& classes(Layer layer) const {
    return layer == Layer::holders ? holder_classes_ : asset_classes_;
  }
  const std::vector<std::uint32_t>& class_of(Layer layer) const {
    return layer == Layer::holders ? holder_class_of_ : asset_class_of_;
  }
  std::size_t num_nodes(Layer layer) const { return class_of(layer).size(); }

  // Connection probability between a class of `layer` and a class of the
  // opposite layer.
  double q_class(Layer layer, std::uint32_t cls, std::uint32_t other_cls) const;
  // Q for (holder, asset) node indices; throws InputError when out of range.
  double connection_probability(index_t holder, index_t asset) const;
  double expected_degree(Layer layer, index_t node) const;

  double residual() const { return residual_; }
  int iterations() const { return iterations_; }
  int newton_steps() const { return newton_steps_; }
  const std::vector<double>& residual_history() const { return history_; }

 private:
  friend BicmSolution fit_bicm(const DegreeSequence&, const BicmOptions&);
  std::vector<ClassInfo> holder_classes_, asset_classes_;
  std::vector<std::uint32_t> holder_class_of_, asset_class_of_;
  double residual_ = 0.0;
  int iterations_ = 0;
  int newton_steps_ = 0;
  std::vector<double> history_;
};

// Throws InputError on an empty layer or a zero degree, NumericalError (with
// the achieved residual) when the tolerance is not reached.
BicmSolution fit_bicm(const DegreeSequence& deg, const BicmOptions& opts = {});

// Expected overlap of two nodes of `layer`: sum over the opposite layer of
// Q_a,s * Q_b,s, evaluated per degree class.
double expected_overlap(const BicmSolution& sol, Layer layer, index_t a, index_t b);

// One draw from the ensemble: independent Bernoulli(Q) per (holder, asset).
std::vector<Triplet> sample_triplets(const BicmSolution& sol, std::uint64_t seed);
// Same draw as a binary snapshot over the ids of `like` (isolated ids drop out).
Snapshot sample_graph(const BicmSolution& sol, const Snapshot& like, std::uint64_t seed);

// `layer,degree,theta` rows followed by a `# residual=... iterations=...` line.
void write_solution(std::ostream& out, const BicmSolution& sol);

}  // namespace bivalid
