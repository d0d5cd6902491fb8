#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "spatarch/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "spatarch: simulation, estimation and Monte Carlo study of a dynamic "
      "spatiotemporal volatility model"};
  app.require_subcommand(1);

  spatarch::cli::SimulateArgs sim_args;
  std::uint64_t sim_seed = 0;
  auto* sim = app.add_subcommand(
      "simulate", "simulate one panel from a config file");
  sim->add_option("--config", sim_args.config, "INI file with [simulate] and [model ...] sections")
      ->required();
  sim->add_option("--out", sim_args.out_prefix,
                  "output prefix for <prefix>.panel.csv and <prefix>.effects.csv")
      ->required();
  auto* sim_seed_opt =
      sim->add_option("--seed", sim_seed, "override the config seed");

  spatarch::cli::EstimateArgs est_args;
  auto* est = app.add_subcommand("estimate", "fit one panel");
  est->add_option("--panel", est_args.panel, "panel CSV (header i,t,y,x1,...)")
      ->required();
  est->add_option("--weights", est_args.weights,
                  "'lattice:<side>' or a CSV with an n x n weight matrix")
      ->required();
  est->add_option("--method", est_args.method,
                  "qml-transformed, qml-direct or gmm")
      ->required();
  est->add_option("--out", est_args.out, "write a one-row result CSV");
  est->add_flag("--jackknife", est_args.jackknife,
                "half-panel jackknife bias correction (likelihood methods)");
  est->add_flag("--time-effects", est_args.time_effects,
                "qml-direct: fit time fixed effects along with unit effects");

  spatarch::cli::McArgs mc_args;
  int mc_workers = 0;
  std::uint64_t mc_seed = 0;
  int mc_reps = 0;
  auto* mc = app.add_subcommand("mc", "run the Monte Carlo study");
  auto* mc_config =
      mc->add_option("--config", mc_args.config, "study INI file");
  auto* mc_quick = mc->add_flag("--quick", mc_args.quick,
                                "small built-in smoke-test design");
  mc_config->excludes(mc_quick);
  mc->add_option("--out", mc_args.out_dir, "output directory")->required();
  auto* mc_workers_opt = mc->add_option(
      "--workers", mc_workers,
      "worker threads (0 = hardware; SPATARCH_THREADS overrides)");
  auto* mc_seed_opt =
      mc->add_option("--seed", mc_seed, "override the base seed");
  auto* mc_reps_opt = mc->add_option("--replications", mc_reps,
                                     "override the replication count");

  spatarch::cli::ReportArgs rep_args;
  auto* rep = app.add_subcommand(
      "report", "rebuild tables and plots from a finished run");
  rep->add_option("--run", rep_args.run_dir,
                  "run directory containing raw_cells.csv")
      ->required();
  rep->add_option("--compare", rep_args.compare,
                  "reference CSV with a '# metric=' tag to compare against");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (sim->parsed()) {
    if (sim_seed_opt->count() > 0) sim_args.seed = sim_seed;
    return spatarch::cli::run_simulate(sim_args, std::cout, std::cerr);
  }
  if (est->parsed())
    return spatarch::cli::run_estimate(est_args, std::cout, std::cerr);
  if (mc->parsed()) {
    if (mc_workers_opt->count() > 0) mc_args.workers = mc_workers;
    if (mc_seed_opt->count() > 0) mc_args.seed = mc_seed;
    if (mc_reps_opt->count() > 0) mc_args.replications = mc_reps;
    return spatarch::cli::run_mc(mc_args, std::cout, std::cerr);
  }
  if (rep->parsed())
    return spatarch::cli::run_report(rep_args, std::cout, std::cerr);
  return 2;
}
