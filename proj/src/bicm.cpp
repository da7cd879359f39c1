#include "bivalid/bicm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "bivalid/error.hpp"
#include "bivalid/io.hpp"
#include "bivalid/rng.hpp"

namespace bivalid {

namespace {

struct PeelSide {
  std::vector<std::int64_t> residual;
  std::vector<std::uint32_t> mult;
  std::vector<ClassInfo>* info = nullptr;
  std::vector<char> active;

  std::int64_t active_nodes() const {
    std::int64_t n = 0;
    for (std::size_t c = 0; c < mult.size(); ++c)
      if (active[c]) n += mult[c];
    return n;
  }
};

// Peels full and empty classes layer by layer until both layers are stable.
// Returns the number of steps taken.
std::uint32_t peel(PeelSide& holders, PeelSide& assets) {
  std::uint32_t step = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int side = 0; side < 2; ++side) {
      PeelSide& me = side == 0 ? holders : assets;
      PeelSide& opp = side == 0 ? assets : holders;
      ++step;
      const std::int64_t opp_active = opp.active_nodes();
      std::int64_t forced = 0;
      for (std::size_t c = 0; c < me.mult.size(); ++c) {
        if (!me.active[c]) continue;
        auto& ci = (*me.info)[c];
        if (me.residual[c] > opp_active || me.residual[c] < 0)
          throw InputError("degree sequence is not realizable as a bipartite graph");
        if (me.residual[c] == 0) {
          ci.state = ClassState::empty;
        } else if (me.residual[c] == opp_active) {
          ci.state = ClassState::full;
          forced += me.mult[c];
        } else {
          continue;
        }
        ci.peel_step = step;
        me.active[c] = 0;
        changed = true;
      }
      if (forced > 0)
        for (std::size_t c = 0; c < opp.mult.size(); ++c)
          if (opp.active[c]) opp.residual[c] -= forced;
    }
  }
  return step;
}

// Reduced core system in log-multipliers: u for holder classes, v for asset
// classes.
struct CoreSystem {
  std::vector<double> k, n;  // holder class residual degree, multiplicity
  std::vector<double> m, nt;  // asset class residual degree, multiplicity

  std::size_t nh() const { return k.size(); }
  std::size_t na() const { return m.size(); }

  static double q(double u, double v) { return 1.0 / (1.0 + std::exp(-(u + v))); }

  void expected(const std::vector<double>& u, const std::vector<double>& v, std::vector<double>& eh,
                std::vector<double>& ea) const {
    eh.assign(nh(), 0.0);
    ea.assign(na(), 0.0);
    std::vector<double> y(na());
    for (std::size_t h = 0; h < na(); ++h) y[h] = std::exp(v[h]);
    for (std::size_t c = 0; c < nh(); ++c) {
      const double x = std::exp(u[c]);
      for (std::size_t h = 0; h < na(); ++h) {
        const double p = 1.0 / (1.0 + 1.0 / (x * y[h]));
        eh[c] += nt[h] * p;
        ea[h] += n[c] * p;
      }
    }
  }

  double residual(const std::vector<double>& u, const std::vector<double>& v) const {
    std::vector<double> eh, ea;
    expected(u, v, eh, ea);
    double r = 0.0;
    for (std::size_t c = 0; c < nh(); ++c) r = std::max(r, std::abs(eh[c] - k[c]) / k[c]);
    for (std::size_t h = 0; h < na(); ++h) r = std::max(r, std::abs(ea[h] - m[h]) / m[h]);
    return std::isfinite(r) ? r : std::numeric_limits<double>::infinity();
  }

  // One Gauss-Seidel sweep of x_c = k_c / sum_h n_h y_h / (1 + x_c y_h).
  void fixed_point(const std::vector<double>& u, const std::vector<double>& v, std::vector<double>& u2,
                   std::vector<double>& v2) const {
    u2.resize(nh());
    v2.resize(na());
    std::vector<double> inv_y(na()), x2(nh());
    for (std::size_t h = 0; h < na(); ++h) inv_y[h] = std::exp(-v[h]);
    for (std::size_t c = 0; c < nh(); ++c) {
      const double x = std::exp(u[c]);
      double s = 0.0;
      for (std::size_t h = 0; h < na(); ++h) s += nt[h] / (inv_y[h] + x);
      u2[c] = std::log(k[c]) - std::log(s);
      x2[c] = std::exp(-u2[c]);
    }
    for (std::size_t h = 0; h < na(); ++h) {
      const double y = std::exp(v[h]);
      double s = 0.0;
      for (std::size_t c = 0; c < nh(); ++c) s += n[c] / (x2[c] + y);
      v2[h] = std::log(m[h]) - std::log(s);
    }
  }

  // Newton direction on F(u, v) = expected - observed; the gauge direction
  // (u + t, v - t) is left out by the minimum-norm solve.
  void newton_direction(const std::vector<double>& u, const std::vector<double>& v, std::vector<double>& du,
                        std::vector<double>& dv) const {
    const auto H = static_cast<Eigen::Index>(nh()), A = static_cast<Eigen::Index>(na());
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(H + A, H + A);
    Eigen::VectorXd F(H + A);
    for (Eigen::Index c = 0; c < H; ++c) F(c) = -k[c];
    for (Eigen::Index h = 0; h < A; ++h) F(H + h) = -m[h];
    for (Eigen::Index c = 0; c < H; ++c) {
      for (Eigen::Index h = 0; h < A; ++h) {
        const double p = q(u[c], v[h]);
        const double w = p * (1.0 - p);
        F(c) += nt[h] * p;
        F(H + h) += n[c] * p;
        J(c, c) += nt[h] * w;
        J(c, H + h) += nt[h] * w;
        J(H + h, c) += n[c] * w;
        J(H + h, H + h) += n[c] * w;
      }
    }
    const Eigen::VectorXd step = J.completeOrthogonalDecomposition().solve(-F);
    du.resize(nh());
    dv.resize(na());
    for (Eigen::Index c = 0; c < H; ++c) du[c] = step(c);
    for (Eigen::Index h = 0; h < A; ++h) dv[h] = step(H + h);
  }
};

}  // namespace

BicmSolution fit_bicm(const DegreeSequence& deg, const BicmOptions& opts) {
  if (deg.holder_degrees.empty() || deg.asset_degrees.empty())
    throw InputError("cannot fit the null model on an empty layer");
  for (auto d : deg.holder_degrees)
    if (d == 0) throw InputError("zero-degree holder; drop isolated nodes before fitting");
  for (auto d : deg.asset_degrees)
    if (d == 0) throw InputError("zero-degree asset; drop isolated nodes before fitting");

  BicmSolution sol;
  sol.holder_class_of_ = deg.holder_classes.class_of;
  sol.asset_class_of_ = deg.asset_classes.class_of;

  auto init_side = [](const DegreeClasses& dc, std::vector<ClassInfo>& info, PeelSide& side) {
    info.resize(dc.size());
    side.info = &info;
    side.residual.resize(dc.size());
    side.mult = dc.multiplicity;
    side.active.assign(dc.size(), 1);
    for (std::size_t c = 0; c < dc.size(); ++c) {
      info[c].degree = dc.degree[c];
      info[c].multiplicity = dc.multiplicity[c];
      side.residual[c] = dc.degree[c];
    }
  };
  PeelSide hp, ap;
  init_side(deg.holder_classes, sol.holder_classes_, hp);
  init_side(deg.asset_classes, sol.asset_classes_, ap);
  peel(hp, ap);

  CoreSystem sys;
  std::vector<std::size_t> core_h, core_a;
  for (std::size_t c = 0; c < hp.mult.size(); ++c) {
    if (!hp.active[c]) continue;
    core_h.push_back(c);
    sys.k.push_back(static_cast<double>(hp.residual[c]));
    sys.n.push_back(hp.mult[c]);
  }
  for (std::size_t c = 0; c < ap.mult.size(); ++c) {
    if (!ap.active[c]) continue;
    core_a.push_back(c);
    sys.m.push_back(static_cast<double>(ap.residual[c]));
    sys.nt.push_back(ap.mult[c]);
  }
  for (auto& ci : sol.holder_classes_) {
    if (ci.state == ClassState::full) ci.theta = std::numeric_limits<double>::infinity();
  }
  for (auto& ci : sol.asset_classes_) {
    if (ci.state == ClassState::full) ci.theta = std::numeric_limits<double>::infinity();
  }
  if (core_h.empty() || core_a.empty()) return sol;

  double links = 0.0;
  for (std::size_t c = 0; c < sys.nh(); ++c) links += sys.k[c] * sys.n[c];
  std::vector<double> u(sys.nh()), v(sys.na());
  for (std::size_t c = 0; c < sys.nh(); ++c) u[c] = std::log(sys.k[c] / std::sqrt(links));
  for (std::size_t h = 0; h < sys.na(); ++h) v[h] = std::log(sys.m[h] / std::sqrt(links));

  double res = sys.residual(u, v);
  sol.history_.push_back(res);
  bool newton = false;
  double alpha_fp = 1.0;
  std::vector<double> u2, v2, ut(sys.nh()), vt(sys.na());

  auto try_step = [&](const std::vector<double>& du, const std::vector<double>& dv, double alpha,
                      double min_alpha) -> double {
    for (; alpha >= min_alpha; alpha *= 0.5) {
      for (std::size_t c = 0; c < sys.nh(); ++c) ut[c] = u[c] + alpha * du[c];
      for (std::size_t h = 0; h < sys.na(); ++h) vt[h] = v[h] + alpha * dv[h];
      const double r = sys.residual(ut, vt);
      if (r < res) {
        u.swap(ut);
        v.swap(vt);
        res = r;
        return alpha;
      }
    }
    return 0.0;
  };

  std::vector<double> du(sys.nh()), dv(sys.na());
  while (res > opts.tol && sol.iterations_ < opts.max_iter) {
    if (!newton) {
      sys.fixed_point(u, v, u2, v2);
      for (std::size_t c = 0; c < sys.nh(); ++c) du[c] = u2[c] - u[c];
      for (std::size_t h = 0; h < sys.na(); ++h) dv[h] = v2[h] - v[h];
      const double a = try_step(du, dv, alpha_fp, 1.0 / 1024);
      if (a == 0.0) {
        if (!opts.allow_newton) break;
        newton = true;
        continue;
      }
      alpha_fp = std::min(1.0, 2.0 * a);
      ++sol.iterations_;
      sol.history_.push_back(res);
      const auto w = static_cast<std::size_t>(opts.stall_window);
      if (opts.allow_newton && sol.history_.size() > w &&
          res > (1.0 - opts.stall_improvement) * sol.history_[sol.history_.size() - 1 - w])
        newton = true;
    } else {
      sys.newton_direction(u, v, du, dv);
      if (try_step(du, dv, 1.0, 1e-9) == 0.0) break;
      ++sol.iterations_;
      ++sol.newton_steps_;
      sol.history_.push_back(res);
    }
  }
  sol.residual_ = res;
  if (!(res <= opts.tol)) {
    throw NumericalError("null model did not converge: residual " + io::format_double(res) + " after " +
                             std::to_string(sol.iterations_) + " iterations",
                         res);
  }

  // Balance the gauge so both layers have the same mean log-multiplier.
  double su = 0.0, sv = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t c = 0; c < sys.nh(); ++c) {
    su += sys.n[c] * u[c];
    nu += sys.n[c];
  }
  for (std::size_t h = 0; h < sys.na(); ++h) {
    sv += sys.nt[h] * v[h];
    nv += sys.nt[h];
  }
  const double shift = 0.5 * (sv / nv - su / nu);
  for (std::size_t c = 0; c < sys.nh(); ++c) {
    auto& ci = sol.holder_classes_[core_h[c]];
    ci.core_degree = static_cast<std::uint32_t>(sys.k[c]);
    ci.theta = std::exp(u[c] + shift);
  }
  for (std::size_t h = 0; h < sys.na(); ++h) {
    auto& ci = sol.asset_classes_[core_a[h]];
    ci.core_degree = static_cast<std::uint32_t>(sys.m[h]);
    ci.theta = std::exp(v[h] - shift);
  }
  return sol;
}

double BicmSolution::q_class(Layer layer, std::uint32_t cls, std::uint32_t other_cls) const {
  const ClassInfo& a = classes(layer)[cls];
  const ClassInfo& b = classes(other(layer))[other_cls];
  if (a.state == ClassState::core && b.state == ClassState::core) {
    const double x = a.theta * b.theta;
    return x / (1.0 + x);
  }
  const ClassInfo& first =
      (a.state != ClassState::core && (b.state == ClassState::core || a.peel_step < b.peel_step)) ? a : b;
  return first.state == ClassState::full ? 1.0 : 0.0;
}

double BicmSolution::connection_probability(index_t holder, index_t asset) const {
  if (holder >= holder_class_of_.size() || asset >= asset_class_of_.size())
    throw InputError("node index out of range for the fitted model");
  return q_class(Layer::holders, holder_class_of_[holder], asset_class_of_[asset]);
}

double BicmSolution::expected_degree(Layer layer, index_t node) const {
  if (node >= num_nodes(layer)) throw InputError("node index out of range for the fitted model");
  const auto cls = class_of(layer)[node];
  double e = 0.0;
  const auto& opp = classes(other(layer));
  for (std::uint32_t h = 0; h < opp.size(); ++h) e += opp[h].multiplicity * q_class(layer, cls, h);
  return e;
}

double expected_overlap(const BicmSolution& sol, Layer layer, index_t a, index_t b) {
  if (a >= sol.num_nodes(layer) || b >= sol.num_nodes(layer))
    throw InputError("node index out of range for the fitted model");
  const auto ca = sol.class_of(layer)[a], cb = sol.class_of(layer)[b];
  const auto& opp = sol.classes(other(layer));
  double e = 0.0;
  for (std::uint32_t h = 0; h < opp.size(); ++h)
    e += opp[h].multiplicity * sol.q_class(layer, ca, h) * sol.q_class(layer, cb, h);
  return e;
}

std::vector<Triplet> sample_triplets(const BicmSolution& sol, std::uint64_t seed) {
  Rng rng(seed);
  const auto& hc = sol.class_of(Layer::holders);
  const auto& ac = sol.class_of(Layer::assets);
  const auto& acls = sol.classes(Layer::assets);
  std::vector<double> row(acls.size());
  std::vector<Triplet> out;
  for (index_t i = 0; i < hc.size(); ++i) {
    for (std::uint32_t h = 0; h < acls.size(); ++h) row[h] = sol.q_class(Layer::holders, hc[i], h);
    for (index_t s = 0; s < ac.size(); ++s) {
      if (rng.bernoulli(row[ac[s]])) out.push_back({i, s, 1.0});
    }
  }
  return out;
}

Snapshot sample_graph(const BicmSolution& sol, const Snapshot& like, std::uint64_t seed) {
  if (like.num_holders() != sol.num_nodes(Layer::holders) || like.num_assets() != sol.num_nodes(Layer::assets))
    throw InputError("snapshot does not match the fitted model");
  return Snapshot::from_triplets(like.date(), like.holders(), like.assets(), sample_triplets(sol, seed), false);
}

void write_solution(std::ostream& out, const BicmSolution& sol) {
  out << "layer,degree,theta\n";
  for (Layer layer : {Layer::holders, Layer::assets}) {
    for (const auto& ci : sol.classes(layer))
      out << to_string(layer) << ',' << ci.degree << ',' << io::format_double(ci.theta) << '\n';
  }
  out << "# residual=" << io::format_double(sol.residual()) << " iterations=" << sol.iterations() << '\n';
}

}  // namespace bivalid
