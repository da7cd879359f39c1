#include "bivalid/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "bivalid/error.hpp"
#include "bivalid/io.hpp"
#include "bivalid/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace bivalid {

namespace {

std::string fmt(double v) { return std::isnan(v) ? std::string() : io::format_double(v); }

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json fit_json(const OlsFit& f) {
  return {{"slope", num(f.slope)},
          {"intercept", num(f.intercept)},
          {"slope_se", num(f.slope_se)},
          {"intercept_se", num(f.intercept_se)},
          {"n", f.n}};
}

// Output files are staged in memory and committed together at the end, so a
// failing run leaves nothing behind.
class Outputs {
 public:
  Outputs(const RunConfig& cfg, std::string command) : cfg_(cfg), command_(std::move(command)) {}

  void input(const std::string& path) {
    if (!path.empty()) inputs_[path] = io::sha256_file(path);
  }
  void add(std::string name, std::string content) { files_.emplace_back(std::move(name), std::move(content)); }
  void warn(std::ostream& log, const std::string& msg) {
    log << "warning: " << msg << '\n';
    warnings_.push_back(msg);
  }
  json& parameters() { return params_; }
  json& extra() { return extra_; }

  void commit(std::ostream& log) {
    fs::create_directories(cfg_.out_dir);
    json outputs = json::array();
    for (const auto& [name, content] : files_) {
      io::write_file_atomic(fs::path(cfg_.out_dir) / name, content);
      outputs.push_back({{"path", name}, {"sha256", io::sha256_hex(content)}});
    }
    json inputs = json::array();
    for (const auto& [path, digest] : inputs_) inputs.push_back({{"path", path}, {"sha256", digest}});
    json m{{"command", command_}, {"parameters", params_}, {"inputs", inputs}, {"outputs", outputs},
           {"warnings", warnings_}};
    for (auto it = extra_.begin(); it != extra_.end(); ++it) m[it.key()] = it.value();
    const auto name = "manifest_" + command_ + ".json";
    io::write_file_atomic(fs::path(cfg_.out_dir) / name, m.dump(2) + "\n");
    log << "wrote " << files_.size() << " file(s) and " << name << " to " << cfg_.out_dir << '\n';
  }

 private:
  const RunConfig& cfg_;
  std::string command_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::pair<std::string, std::string>> files_;
  std::vector<std::string> warnings_;
  json params_ = json::object();
  json extra_ = json::object();
};

// Worker count is left out on purpose: outputs must not depend on it.
json base_parameters(const RunConfig& cfg) {
  return {{"layer", to_string(cfg.layer)},
          {"method", to_string(cfg.method)},
          {"epsilon", cfg.epsilon},
          {"backend", to_string(cfg.backend)},
          {"seed", cfg.seed}};
}

std::vector<Snapshot> load_snapshots(const RunConfig& cfg, Outputs& out, std::ostream& log) {
  const auto paths = resolve_snapshot_paths(cfg.snapshots);
  if (paths.empty()) throw InputError("no snapshot files given");
  std::vector<Snapshot> snaps;
  std::set<std::string> dates;
  for (const auto& p : paths) {
    auto snap = load_snapshot_file(p);
    if (!dates.insert(snap.date()).second) throw InputError("duplicate snapshot date " + snap.date());
    log << "loaded " << p << ": " << snap.num_holders() << " holders, " << snap.num_assets() << " assets, "
        << snap.num_links() << " links\n";
    out.input(p);
    snaps.push_back(std::move(snap));
  }
  return snaps;
}

HolderMeta load_holder_meta_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return load_holder_meta(in);
}

SecurityMetaTable load_security_meta_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return load_security_meta(in);
}

std::map<std::string, double> load_market_returns(const std::string& path) {
  const auto table = io::read_table_file(path);
  const int dc = table.column("date"), rc = table.column("return");
  if (dc < 0 || rc < 0) throw InputError(path + ": expected columns date,return");
  std::map<std::string, double> out;
  for (const auto& row : table.rows) out[row.fields[dc]] = io::parse_double(row.fields[rc], row.line, "return");
  return out;
}

ValidateOptions validate_options(const RunConfig& cfg) {
  ValidateOptions o;
  o.method = cfg.method;
  o.epsilon = cfg.epsilon;
  o.backend = cfg.backend;
  o.workers = cfg.workers;
  return o;
}

std::string edges_string(const ValidatedNetwork& net) {
  std::ostringstream os;
  write_edges(os, net);
  return os.str();
}

std::string prefix(const std::string& date, Layer layer) { return date + "_" + to_string(layer); }

SynthSpec load_spec(const RunConfig& cfg, Outputs& out) {
  SynthSpec spec = default_oracle_spec();
  if (!cfg.spec.empty()) {
    std::ifstream in(cfg.spec);
    if (!in) throw InputError("cannot open " + cfg.spec);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw InputError(cfg.spec + ": " + e.what());
    }
    try {
      spec = spec_from_json(j);
    } catch (const json::exception& e) {
      throw InputError(cfg.spec + ": " + e.what());
    }
    out.input(cfg.spec);
  }
  if (cfg.seed_set) spec.seed = cfg.seed;
  return spec;
}

std::string security_meta_string(const Snapshot& snap, const SecurityMetaTable& meta) {
  std::ostringstream os;
  os << "asset_id,price,outstanding,category\n";
  for (const auto& id : snap.assets()) {
    const auto& m = meta.at(id);
    os << id << ',' << (m.price ? io::format_double(*m.price) : "") << ','
       << (m.outstanding ? io::format_double(*m.outstanding) : "") << ',' << m.category << '\n';
  }
  return os.str();
}

}  // namespace

void check_config(const RunConfig& cfg) {
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) throw InputError("epsilon must lie in (0, 1)");
  if (cfg.distress_n < 1) throw InputError("distress n must be at least 1");
  if (cfg.workers < 1) throw InputError("worker count must be at least 1");
  if (!(cfg.r_max > 0.0)) throw InputError("r_max must be positive");
  if (cfg.dt < 1) throw InputError("dt must be at least 1");
  if (cfg.samples < 1) throw InputError("samples must be at least 1");
}

std::vector<std::string> resolve_snapshot_paths(const std::vector<std::string>& inputs) {
  std::vector<fs::path> found;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".csv") found.push_back(e.path());
    } else if (fs::is_regular_file(p)) {
      found.push_back(p);
    } else {
      throw InputError("cannot read snapshot " + in);
    }
  }
  std::sort(found.begin(), found.end(), [](const fs::path& a, const fs::path& b) {
    return a.stem() != b.stem() ? a.stem() < b.stem() : a < b;
  });
  std::vector<std::string> out;
  for (const auto& p : found) out.push_back(p.string());
  return out;
}

int guarded(int (*fn)(const RunConfig&, std::ostream&), const RunConfig& cfg, std::ostream& log) {
  try {
    check_config(cfg);
    return fn(cfg, log);
  } catch (const InputError& e) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    log << "numerical failure: " << e.what() << " (residual " << e.residual() << ")\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

int run_validate(const RunConfig& cfg, std::ostream& log) {
  Outputs out(cfg, "validate");
  const auto snaps = load_snapshots(cfg, out, log);
  out.parameters() = base_parameters(cfg);
  int code = kExitOk;
  json failed = json::array();
  for (const auto& snap : snaps) {
    std::vector<PValueResult> tested;
    ValidatedNetwork net;
    try {
      net = validate_snapshot(snap, cfg.layer, validate_options(cfg), cfg.write_pvalues ? &tested : nullptr);
    } catch (const NumericalError& e) {
      out.warn(log, snap.date() + ": " + e.what());
      failed.push_back(snap.date());
      code = kExitNumerical;
      continue;
    }
    log << snap.date() << ": " << net.edges.size() << " validated links among " << net.validated_node_count()
        << " of " << net.node_count() << " nodes (n_tests " << net.n_tests << ")\n";
    const auto p = prefix(snap.date(), cfg.layer);
    out.add(p + "_edges.csv", edges_string(net));
    out.add(p + "_meta.json", metadata_json(net).dump(2) + "\n");
    if (cfg.write_pvalues) {
      std::ostringstream os;
      write_pvalues(os, net.node_ids, tested);
      out.add(p + "_pvalues.csv", os.str());
    }
  }
  out.extra()["failed_dates"] = failed;
  out.commit(log);
  return code;
}

int run_fit(const RunConfig& cfg, std::ostream& log) {
  Outputs out(cfg, "fit");
  const auto snaps = load_snapshots(cfg, out, log);
  out.parameters() = {{"layer", to_string(cfg.layer)}};
  int code = kExitOk;
  for (const auto& snap : snaps) {
    try {
      const auto sol = fit_bicm(degree_sequence(snap, cfg.layer));
      log << snap.date() << ": residual " << sol.residual() << " after " << sol.iterations() << " iterations\n";
      std::ostringstream os;
      write_solution(os, sol);
      out.add(snap.date() + "_fit.csv", os.str());
    } catch (const NumericalError& e) {
      out.warn(log, snap.date() + ": " + e.what());
      code = kExitNumerical;
    }
  }
  out.commit(log);
  return code;
}

int run_timeseries(const RunConfig& cfg, std::ostream& log) {
  Outputs out(cfg, "timeseries");
  const auto snaps = load_snapshots(cfg, out, log);
  HolderMeta types;
  SecurityMetaTable sec;
  if (!cfg.holder_meta.empty()) {
    types = load_holder_meta_file(cfg.holder_meta);
    out.input(cfg.holder_meta);
  }
  if (!cfg.security_meta.empty()) {
    sec = load_security_meta_file(cfg.security_meta);
    out.input(cfg.security_meta);
  }
  out.parameters() = base_parameters(cfg);
  out.parameters()["buy_sell"] = cfg.buy_sell;

  bool breakdown = cfg.by_type;
  if (breakdown && cfg.holder_meta.empty()) {
    out.warn(log, "type breakdown requested without holder metadata; writing aggregate table only");
    breakdown = false;
  }
  if (breakdown && cfg.layer != Layer::holders) {
    out.warn(log, "type breakdown applies to the holder layer only; skipped");
    breakdown = false;
  }
  std::vector<std::string> type_names;
  if (breakdown) {
    std::set<std::string> s;
    for (const auto& [id, t] : types) s.insert(t);
    s.insert("other");
    type_names.assign(s.begin(), s.end());
  }
  const HolderMeta* labels = breakdown ? &types : nullptr;

  int code = kExitOk;
  const auto row_for = [&](const Snapshot& snap, std::vector<TimeseriesRow>& rows) {
    try {
      const auto net = validate_snapshot(snap, cfg.layer, validate_options(cfg));
      std::optional<PortfolioMetrics> pm;
      if (!cfg.security_meta.empty() && snap.weighted()) pm = portfolio_metrics(snap, sec);
      rows.push_back(timeseries_row(snap, net, labels, pm ? &*pm : nullptr));
    } catch (const NumericalError& e) {
      out.warn(log, snap.date() + ": " + e.what());
      code = kExitNumerical;
    }
  };

  if (!cfg.buy_sell) {
    std::vector<TimeseriesRow> rows;
    for (const auto& snap : snaps) row_for(snap, rows);
    std::ostringstream os;
    write_timeseries(os, rows, type_names);
    out.add(std::string("timeseries_") + to_string(cfg.layer) + ".csv", os.str());
  } else {
    if (snaps.size() < 2) throw InputError("buy/sell mode needs at least two dates");
    std::vector<TimeseriesRow> buy, sell;
    for (std::size_t k = 1; k < snaps.size(); ++k) {
      const auto d = delta_networks(snaps[k - 1], snaps[k]);
      row_for(d.buy, buy);
      row_for(d.sell, sell);
    }
    std::ostringstream ob, osl;
    write_timeseries(ob, buy, type_names);
    write_timeseries(osl, sell, type_names);
    out.add(std::string("timeseries_buy_") + to_string(cfg.layer) + ".csv", ob.str());
    out.add(std::string("timeseries_sell_") + to_string(cfg.layer) + ".csv", osl.str());
    if (buy.size() == sell.size() && buy.size() >= 2) {
      std::vector<double> x, y;
      for (const auto& r : buy) x.push_back(r.average_degree);
      for (const auto& r : sell) y.push_back(r.average_degree);
      const int max_lag = static_cast<int>(std::min<std::size_t>(4, buy.size() - 1));
      const auto cc = cross_correlation(x, y, max_lag);
      std::ostringstream oc;
      oc << "lag,correlation\n";
      for (int lag = -max_lag; lag <= max_lag; ++lag) oc << lag << ',' << fmt(cc[lag + max_lag]) << '\n';
      out.add(std::string("buy_sell_xcorr_") + to_string(cfg.layer) + ".csv", oc.str());
    }
  }
  out.commit(log);
  return code;
}

int run_analyze(const RunConfig& cfg, std::ostream& log) {
  Outputs out(cfg, "analyze");
  const auto snaps = load_snapshots(cfg, out, log);
  SecurityMetaTable sec;
  if (!cfg.security_meta.empty()) {
    sec = load_security_meta_file(cfg.security_meta);
    out.input(cfg.security_meta);
  }
  std::map<std::string, double> market;
  if (!cfg.market_returns.empty()) {
    market = load_market_returns(cfg.market_returns);
    out.input(cfg.market_returns);
  }
  out.parameters() = base_parameters(cfg);
  out.parameters().update({{"distress_n", cfg.distress_n},
                           {"r_max", cfg.r_max},
                           {"dt", cfg.dt},
                           {"split_signs", cfg.split_signs},
                           {"ranking", cfg.ranking == DistressRanking::absolute_drop ? "absolute" : "return"}});

  if (cfg.layer == Layer::assets) {
    if (cfg.security_meta.empty()) out.warn(log, "no security metadata; every asset falls under \"other\"");
    for (const auto& snap : snaps) {
      const auto net = validate_snapshot(snap, Layer::assets, validate_options(cfg));
      std::ostringstream os;
      os << "category,nodes,validated_nodes,validated_fraction,internal_links,mean_internal_degree\n";
      for (const auto& c : internal_degree(net, sec))
        os << c.category << ',' << c.nodes << ',' << c.validated_nodes << ',' << fmt(c.validated_fraction) << ','
           << c.internal_links << ',' << fmt(c.mean_internal_degree) << '\n';
      out.add(snap.date() + "_internal_degree.csv", os.str());
    }
    out.commit(log);
    return kExitOk;
  }

  if (cfg.security_meta.empty()) throw InputError("analyze on the holder layer needs --security-meta");
  std::vector<ValidatedNetwork> nets;
  std::vector<std::map<std::string, double>> mvs;
  std::vector<std::vector<OverlapRecord>> pair_lists;
  const std::vector<std::uint32_t> buckets{2, 5, 10, 20, 50, 100, 1000000};

  for (const auto& snap : snaps) {
    const auto net = validate_snapshot(snap, Layer::holders, validate_options(cfg));
    const auto pm = portfolio_metrics(snap, sec);
    for (const auto& w : pm.warnings) out.warn(log, snap.date() + ": " + w);
    const auto& d = snap.date();

    std::ostringstream ow;
    ow << "holder_id,asset_id,weight,concentration\n";
    for (index_t i = 0; i < snap.num_holders(); ++i) {
      const auto assets = snap.assets_of(i);
      for (std::size_t k = 0; k < assets.size(); ++k)
        ow << snap.holders()[i] << ',' << snap.assets()[assets[k]] << ',' << fmt(pm.weight[snap.row_begin(i) + k])
           << ',' << fmt(pm.concentration[snap.row_begin(i) + k]) << '\n';
    }
    out.add(d + "_weights.csv", ow.str());

    const auto split = overlap_share_split(snap, net, pm);
    std::ostringstream os;
    os << "holder_id,degree,overlapping,non_overlapping,overlapping_mean,non_overlapping_mean,inverse_degree\n";
    for (const auto& s : split.holders)
      os << snap.holders()[s.holder] << ',' << snap.assets_of(s.holder).size() << ',' << s.overlapping << ','
         << s.non_overlapping << ',' << fmt(s.overlapping_mean) << ',' << fmt(s.non_overlapping_mean) << ','
         << fmt(s.inverse_degree) << '\n';
    out.add(d + "_share_split.csv", os.str());

    const auto stats = security_validation_stats(snap, net, sec, &pm);
    std::ostringstream oss;
    oss << "asset_id,degree,pairs,validated_pairs,fraction,capitalization,mean_concentration\n";
    for (const auto& st : stats)
      oss << snap.assets()[st.asset] << ',' << st.degree << ',' << st.pairs << ',' << st.validated_pairs << ','
          << fmt(st.fraction) << ',' << fmt(st.capitalization) << ',' << fmt(st.mean_concentration) << '\n';
    out.add(d + "_securities.csv", oss.str());

    std::ostringstream orr;
    orr << "degree_lo,degree_hi,regressor,slope,intercept,slope_se,intercept_se,n,dropped\n";
    for (const auto& r : security_regressions(stats, buckets))
      orr << r.degree_lo << ',' << r.degree_hi << ',' << r.regressor << ',' << fmt(r.fit.fit.slope) << ','
          << fmt(r.fit.fit.intercept) << ',' << fmt(r.fit.fit.slope_se) << ',' << fmt(r.fit.fit.intercept_se) << ','
          << r.fit.fit.n << ',' << r.fit.dropped << '\n';
    out.add(d + "_security_regressions.csv", orr.str());

    json summary{{"date", d},
                 {"total_market_value", pm.total_market_value},
                 {"per_holder_excess", num(split.per_holder_excess)},
                 {"pooled_excess", num(split.pooled_excess)},
                 {"validated_holders", net.validated_node_count()},
                 {"edge_count", net.edges.size()}};
    out.add(d + "_summary.json", summary.dump(2) + "\n");

    nets.push_back(net);
    mvs.push_back(market_values(snap, pm));
    pair_lists.push_back(overlaps(snap, Layer::holders, cfg.workers));
  }

  const auto dt = static_cast<std::size_t>(cfg.dt);
  if (snaps.size() <= dt) {
    out.warn(log, "distress and returns analysis need more than dt dates; skipped");
    out.commit(log);
    return kExitOk;
  }

  std::ostringstream od;
  od << "date,next_date,n,population,validated_population,l,l_v,g_i,validated_edges,validated_edges_distressed,"
        "overlapping_pairs,overlapping_pairs_distressed,r_i,market_return\n";
  std::vector<DateReturns> series;
  for (std::size_t k = 0; k + dt < snaps.size(); ++k) {
    const auto it = market.find(snaps[k].date());
    const double r = it == market.end() ? kNaN : it->second;
    const auto rep = distress_report(mvs[k], mvs[k + dt], nets[k], pair_lists[k], cfg.distress_n, r, cfg.ranking);
    for (const auto& w : rep.warnings) out.warn(log, snaps[k].date() + ": " + w);
    od << rep.date << ',' << snaps[k + dt].date() << ',' << rep.distressed.size() << ',' << rep.population << ','
       << rep.validated_population << ',' << fmt(rep.l) << ',' << fmt(rep.l_v) << ',' << fmt(rep.g_i) << ','
       << rep.validated_edges << ',' << rep.validated_edges_distressed << ',' << rep.overlapping_pairs << ','
       << rep.overlapping_pairs_distressed << ',' << fmt(rep.r_i) << ',' << fmt(rep.market_return) << '\n';
    series.push_back(portfolio_returns(mvs[k], mvs[k + dt], nets[k]));
  }
  out.add("distress.csv", od.str());

  try {
    const auto rr = returns_regression(series, cfg.r_max, cfg.split_signs);
    std::ostringstream op;
    op << "date,sign,out_mean,in_mean,n_out,n_in\n";
    for (const auto& p : rr.points)
      op << p.date << ',' << p.sign << ',' << fmt(p.out_mean) << ',' << fmt(p.in_mean) << ',' << p.n_out << ','
         << p.n_in << '\n';
    out.add("returns_points.csv", op.str());
    json fit{{"r_max", rr.r_max},
             {"split_signs", rr.split_signs},
             {"fit", fit_json(rr.fit)},
             {"included_fraction", num(rr.included_fraction)}};
    if (rr.split_signs) {
      fit["fit_positive"] = fit_json(rr.fit_positive);
      fit["fit_negative"] = fit_json(rr.fit_negative);
    }
    out.add("returns_fit.json", fit.dump(2) + "\n");

    std::vector<double> grid;
    for (int k = 1; k <= 10; ++k) grid.push_back(0.05 * k);
    std::ostringstream oc;
    oc << "r_max,slope,intercept,slope_se,points,included_fraction\n";
    for (const auto& c : slope_curve(series, grid, cfg.split_signs))
      oc << fmt(c.r_max) << ',' << fmt(c.fit.slope) << ',' << fmt(c.fit.intercept) << ',' << fmt(c.fit.slope_se)
         << ',' << c.points.size() << ',' << fmt(c.included_fraction) << '\n';
    out.add("slope_curve.csv", oc.str());
  } catch (const InputError& e) {
    out.warn(log, std::string("returns regression skipped: ") + e.what());
  }
  out.commit(log);
  return kExitOk;
}

int run_delta(const RunConfig& cfg, std::ostream& log) {
  Outputs out(cfg, "delta");
  const auto snaps = load_snapshots(cfg, out, log);
  if (snaps.size() < 2) throw InputError("delta needs at least two dates");
  for (std::size_t k = 1; k < snaps.size(); ++k) {
    const auto d = delta_networks(snaps[k - 1], snaps[k]);
    log << snaps[k].date() << ": " << d.buy.num_links() << " buy links, " << d.sell.num_links() << " sell links\n";
    out.add(snaps[k].date() + "_buy.csv", snapshot_to_string(d.buy));
    out.add(snaps[k].date() + "_sell.csv", snapshot_to_string(d.sell));
  }
  out.commit(log);
  return kExitOk;
}

int run_synth(const RunConfig& cfg, std::ostream& log) {
  Outputs out(cfg, "synth");
  const auto spec = load_spec(cfg, out);
  const auto res = generate_fixture(spec);
  const auto& snap = res.snapshot;
  log << "generated " << snap.num_holders() << " x " << snap.num_assets() << " with " << snap.num_links()
      << " links\n";
  out.parameters() = {{"seed", spec.seed}};
  out.add(spec.date + ".csv", snapshot_to_string(snap));
  json blocks = json::array();
  for (std::size_t b = 0; b < res.block_holders.size(); ++b)
    blocks.push_back({{"holders", res.block_holders[b]}, {"assets", res.block_assets[b]}});
  out.add(spec.date + "_spec.json", json{{"spec", to_json(spec)}, {"blocks", blocks}}.dump(2) + "\n");
  if (spec.weighted)
    out.add(spec.date + "_securities.csv",
            security_meta_string(snap, generate_security_meta(snap, derive_seed(spec.seed, 1))));
  out.commit(log);
  return kExitOk;
}

SynthSpec default_oracle_spec() {
  SynthSpec s;
  s.holders = 20;
  s.assets = 50;
  s.holder_law.kind = DegreeLaw::Kind::power_law;
  s.holder_law.exponent = 1.8;
  s.holder_law.min_degree = 3;
  s.holder_law.max_degree = 35;
  s.asset_law.kind = DegreeLaw::Kind::power_law;
  s.asset_law.exponent = 2.0;
  s.asset_law.min_degree = 1;
  s.asset_law.max_degree = 15;
  s.seed = 20;
  s.date = "oracle";
  return s;
}

OracleReport mc_compare(const BicmSolution& sol, Layer layer, std::span<const OverlapRecord> pairs,
                        std::span<const double> exact, std::uint64_t samples, std::uint64_t seed) {
  if (exact.size() != pairs.size()) throw InputError("one exact p-value per pair expected");
  const auto& cls = sol.class_of(layer);
  std::map<std::pair<std::uint32_t, std::uint32_t>, OverlapRecord> reps;
  for (const auto& p : pairs) {
    auto key = std::minmax(cls[p.a], cls[p.b]);
    reps.emplace(std::pair{key.first, key.second}, p);
  }
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::uint64_t>> hists;
  std::uint64_t stream = 0;
  for (const auto& [key, p] : reps)
    hists[key] = mc_overlap_histogram(sol, layer, p.a, p.b, samples, derive_seed(seed, stream++));

  OracleReport rep;
  rep.samples = samples;
  rep.histograms = hists.size();
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    const auto key = std::minmax(cls[p.a], cls[p.b]);
    const auto mc = mc_tail(hists.at({key.first, key.second}), p.overlap);
    OracleRow row{p.a, p.b, p.overlap, exact[k], mc.estimate, mc.std_error, 0.0};
    const double base = mc.estimate > 0.0 && mc.estimate < 1.0 ? mc.estimate : exact[k];
    row.std_error = std::sqrt(std::clamp(base, 0.0, 1.0) * (1.0 - std::clamp(base, 0.0, 1.0)) /
                              static_cast<double>(mc.samples));
    const double dev = std::abs(row.exact - row.estimate);
    if (dev > 0.0) row.se_multiple = row.std_error > 0.0 ? dev / row.std_error : std::numeric_limits<double>::infinity();
    rep.max_abs_deviation = std::max(rep.max_abs_deviation, dev);
    rep.max_se_multiple = std::max(rep.max_se_multiple, row.se_multiple);
    rep.rows.push_back(row);
  }
  return rep;
}

int run_oracle(const RunConfig& cfg, std::ostream& log) {
  Outputs out(cfg, "oracle");
  const auto spec = load_spec(cfg, out);
  const auto snap = generate(spec);
  const auto sol = fit_bicm(degree_sequence(snap, cfg.layer));
  const auto pairs = overlaps(snap, cfg.layer, cfg.workers);
  out.parameters() = {{"layer", to_string(cfg.layer)},
                      {"seed", spec.seed},
                      {"samples", cfg.samples},
                      {"mode", cfg.exhaustive ? "exhaustive" : "monte_carlo"},
                      {"inject_fault", cfg.inject_fault}};
  const auto& ids = snap.ids(cfg.layer);
  const auto& cls = sol.class_of(cfg.layer);

  if (cfg.exhaustive) {
    std::ostringstream os;
    os << "node_a,node_b,trials,max_abs_deviation\n";
    double worst = 0.0;
    std::size_t checked = 0;
    for (const auto& p : pairs) {
      auto table = pair_class_table(sol, cfg.layer, cls[p.a], cls[p.b]);
      if (table.total_trials() > kExhaustiveTrialCap) continue;
      const auto enumerated = exhaustive_overlap_oracle(table);
      const auto n = static_cast<std::uint32_t>(table.total_trials());
      auto grouped = convolve_classes(table, n);
      if (cfg.inject_fault) grouped.pmf[0] *= 1.01;
      double dev = 0.0;
      for (std::uint32_t x = 0; x <= n; ++x) dev = std::max(dev, std::abs(grouped.pmf[x] - enumerated[x]));
      worst = std::max(worst, dev);
      ++checked;
      os << ids[p.a] << ',' << ids[p.b] << ',' << n << ',' << io::format_double(dev) << '\n';
    }
    if (checked == 0)
      throw InputError("every pair exceeds the exhaustive cap of " + std::to_string(kExhaustiveTrialCap) +
                       " trials; use the Monte-Carlo oracle");
    const bool ok = worst <= 1e-12;
    log << "exhaustive oracle: " << checked << " pairs, max abs deviation " << worst << (ok ? " (ok)" : " (FAIL)")
        << '\n';
    out.add("oracle_exhaustive.csv", os.str());
    out.extra()["summary"] = {{"pairs", checked}, {"max_abs_deviation", worst}, {"pass", ok}};
    out.commit(log);
    return ok ? kExitOk : kExitOracle;
  }

  const auto pv = p_values(sol, cfg.layer, pairs, Backend::exact, cfg.workers);
  std::vector<double> exact;
  for (const auto& r : pv) exact.push_back(cfg.inject_fault ? r.p_value * 0.5 : r.p_value);
  const auto rep = mc_compare(sol, cfg.layer, pairs, exact, cfg.samples, derive_seed(spec.seed, 2));
  std::ostringstream os;
  os << "node_a,node_b,overlap,exact,estimate,std_error,se_multiple\n";
  for (const auto& r : rep.rows)
    os << ids[r.a] << ',' << ids[r.b] << ',' << r.overlap << ',' << io::format_double(r.exact) << ','
       << io::format_double(r.estimate) << ',' << io::format_double(r.std_error) << ','
       << io::format_double(r.se_multiple) << '\n';
  const bool ok = rep.max_se_multiple <= 4.0;
  log << "monte-carlo oracle: " << rep.rows.size() << " pairs, " << rep.histograms << " histograms of "
      << rep.samples << " samples, max " << rep.max_se_multiple << " SE" << (ok ? " (ok)" : " (FAIL)") << '\n';
  if (cfg.samples < 1000) out.warn(log, "fewer than 1000 samples; standard errors are unreliable");
  out.add("oracle_mc.csv", os.str());
  out.extra()["summary"] = {{"pairs", rep.rows.size()},
                            {"histograms", rep.histograms},
                            {"max_abs_deviation", rep.max_abs_deviation},
                            {"max_se_multiple", num(rep.max_se_multiple)},
                            {"pass", ok}};
  out.commit(log);
  return ok ? kExitOk : kExitOracle;
}

}  // namespace bivalid
