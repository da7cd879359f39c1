#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "bivalid/cli.hpp"

using namespace bivalid;

namespace {

struct Raw {
  std::string layer = "holders";
  std::string method = "bonferroni";
  std::string backend = "exact";
  std::string ranking = "absolute";
};

void add_common(CLI::App* cmd, RunConfig& cfg, Raw& raw, bool snapshots) {
  if (snapshots) cmd->add_option("snapshots", cfg.snapshots, "snapshot CSV files or directories")->required();
  cmd->add_option("-o,--out", cfg.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--layer", raw.layer, "projected layer: holders | assets")->capture_default_str();
  cmd->add_option("--workers", cfg.workers, "OpenMP worker threads")->capture_default_str();
}

void add_validation(CLI::App* cmd, RunConfig& cfg, Raw& raw) {
  cmd->add_option("--epsilon", cfg.epsilon, "family-wise / FDR level")->capture_default_str();
  cmd->add_option("--method", raw.method, "bonferroni | fdr")->capture_default_str();
  cmd->add_option("--backend", raw.backend, "exact | normal | hypergeometric")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Statistically validated projections of bipartite ownership networks"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");

  RunConfig cfg;
  Raw raw;
  auto* seed = app.add_option("--seed", cfg.seed, "seed for every random stream")->capture_default_str();

  auto* validate = app.add_subcommand("validate", "validated network per snapshot");
  add_common(validate, cfg, raw, true);
  add_validation(validate, cfg, raw);
  validate->add_flag("--pvalues", cfg.write_pvalues, "also write every tested pair's p-value");

  auto* fit = app.add_subcommand("fit", "fit the null model only");
  add_common(fit, cfg, raw, true);

  auto* ts = app.add_subcommand("timeseries", "per-date summary table");
  add_common(ts, cfg, raw, true);
  add_validation(ts, cfg, raw);
  ts->add_option("--holder-meta", cfg.holder_meta, "holder_id,type CSV");
  ts->add_option("--security-meta", cfg.security_meta, "asset_id,price,outstanding,category CSV");
  ts->add_flag("--by-type", cfg.by_type, "validated counts per holder type");
  ts->add_flag("--buy-sell", cfg.buy_sell, "tables for the buy and sell networks of consecutive dates");

  auto* analyze = app.add_subcommand("analyze", "weights, security stats, distress and returns");
  add_common(analyze, cfg, raw, true);
  add_validation(analyze, cfg, raw);
  analyze->add_option("--security-meta", cfg.security_meta, "asset_id,price,outstanding,category CSV");
  analyze->add_option("--market-returns", cfg.market_returns, "date,return CSV");
  analyze->add_option("--distress-n", cfg.distress_n, "size of the distressed set")->capture_default_str();
  analyze->add_option("--r-max", cfg.r_max, "absolute return cutoff")->capture_default_str();
  analyze->add_option("--dt", cfg.dt, "date offset for distress and returns")->capture_default_str();
  analyze->add_flag("--split-signs", cfg.split_signs, "regress positive and negative returns separately");
  analyze->add_option("--ranking", raw.ranking, "distress ranking: absolute | return")->capture_default_str();

  auto* delta = app.add_subcommand("delta", "buy/sell networks of consecutive dates");
  add_common(delta, cfg, raw, true);

  auto* synth = app.add_subcommand("synth", "generate a synthetic snapshot");
  add_common(synth, cfg, raw, false);
  synth->add_option("--spec", cfg.spec, "fixture spec JSON (default: 20 x 50 oracle fixture)");

  auto* oracle = app.add_subcommand("oracle", "check exact p-values against independent oracles");
  add_common(oracle, cfg, raw, false);
  oracle->add_option("--spec", cfg.spec, "fixture spec JSON (default: 20 x 50 oracle fixture)");
  oracle->add_option("--samples", cfg.samples, "Monte-Carlo samples per histogram")->capture_default_str();
  oracle->add_flag("--exhaustive", cfg.exhaustive, "compare full distributions by enumeration");
  oracle->add_flag("--inject-fault", cfg.inject_fault, "corrupt the exact backend (negative control)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  cfg.seed_set = seed->count() > 0;
  try {
    cfg.layer = parse_layer(raw.layer);
    cfg.method = parse_correction(raw.method);
    cfg.backend = parse_backend(raw.backend);
    if (raw.ranking == "absolute")
      cfg.ranking = DistressRanking::absolute_drop;
    else if (raw.ranking == "return")
      cfg.ranking = DistressRanking::return_drop;
    else
      throw std::runtime_error("unknown ranking '" + raw.ranking + "'");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }

  const std::map<CLI::App*, int (*)(const RunConfig&, std::ostream&)> commands{
      {validate, run_validate}, {fit, run_fit},     {ts, run_timeseries}, {analyze, run_analyze},
      {delta, run_delta},       {synth, run_synth}, {oracle, run_oracle}};
  for (const auto& [cmd, fn] : commands)
    if (cmd->parsed()) return guarded(fn, cfg, std::cerr);
  return kExitInput;
}
