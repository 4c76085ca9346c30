#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <system_error>
#include <vector>

#include "CLI11.hpp"
#include "coqf/errors.hpp"
#include "coqf/experiments.hpp"
#include "coqf/grouping.hpp"
#include "coqf/io.hpp"
#include "coqf/ledger.hpp"
#include "coqf/round.hpp"

namespace coqf {

namespace cli_detail {

/// Empty path (or "-") means stdout; anything else is written atomically.
inline void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  atomic_write_file(path, content);
}

inline Mechanism mechanism_from_flag(const std::string& token) {
  const auto mechanism = parse_mechanism(token);
  if (!mechanism) {
    throw ValidationError("unknown mechanism '" + token +
                          "' (expected direct, qf, coqf, coqf-v1, or hybrid)");
  }
  return *mechanism;
}

struct AllocateOptions {
  std::string donations;
  std::string mechanism;
  std::string grouping = "singleton";
  std::string output;
  double pool = 0.0;
  double cap = 0.0;
  double hybrid_weight = 0.0;
  bool has_cap = false;
  bool has_hybrid_weight = false;
  bool quiet = false;
};

inline int cmd_allocate(const AllocateOptions& opts) {
  const DonationLedger ledger = parse_donations(read_file(opts.donations));
  RoundConfig config;
  config.mechanism = mechanism_from_flag(opts.mechanism);
  config.matching_pool = opts.pool;
  if (opts.has_cap) config.cap_fraction = opts.cap;
  if (opts.has_hybrid_weight) config.hybrid_weight = opts.hybrid_weight;

  const bool needs_groups = config.mechanism == Mechanism::CoQF ||
                            config.mechanism == Mechanism::CoQFv1 ||
                            config.mechanism == Mechanism::Hybrid;
  GroupAssignment groups;
  std::vector<std::string> grouping_warnings;
  if (needs_groups) {
    if (opts.grouping == "singleton") {
      groups = singleton_groups(ledger);
    } else if (opts.grouping == "projects") {
      ProjectGroupingResult grouped = projects_as_groups(ledger);
      groups = std::move(grouped.assignment);
      if (!grouped.excluded_donors.empty()) {
        std::string warning = "project grouping left donors with no positive "
                              "donations ungrouped:";
        for (std::size_t donor : grouped.excluded_donors) {
          warning += ' ' + ledger.donors()[donor];
        }
        grouping_warnings.push_back(std::move(warning));
      }
    } else if (opts.grouping == "signature") {
      groups = signature_groups(ledger);
    } else if (opts.grouping.rfind("file:", 0) == 0) {
      const std::string text = read_file(opts.grouping.substr(5));
      groups = groups_from_document(text, ledger);
    } else {
      throw ValidationError("unknown grouping strategy '" + opts.grouping +
                            "' (expected singleton, projects, signature, or "
                            "file:PATH)");
    }
  }

  const AllocationResult result = allocate_round(
      ledger, config, needs_groups ? &groups : nullptr, std::move(grouping_warnings));
  emit(opts.output, render_allocation(result));
  if (!opts.quiet && result.zero_raw_subsidy) {
    std::cerr << "note: all raw subsidies are zero; matching pool left "
                 "unallocated\n";
  }
  return 0;
}

struct SimulateOptions {
  SweepSpec spec;
  std::vector<std::string> mechanisms = {"direct", "qf", "coqf"};
  std::string output;
  std::string plot_dir;
  bool quiet = false;
};

inline int cmd_simulate(const SimulateOptions& opts) {
  SweepSpec spec = opts.spec;
  spec.mechanisms.clear();
  for (const std::string& token : opts.mechanisms) {
    spec.mechanisms.push_back(mechanism_from_flag(token));
  }

  const SweepResult result = run_sweep(spec);
  emit(opts.output, render_sweep(result, spec));
  if (!opts.plot_dir.empty()) {
    const std::filesystem::path dir(opts.plot_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
      throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    }
    for (double sigma2 : spec.sigma2_values) {
      atomic_write_file(dir / plot_file_name(sigma2),
                        render_plot_data(result, sigma2));
    }
  }

  if (!opts.quiet) {
    std::size_t unconverged = 0;
    for (const CellStats& cell : result.cells) unconverged += cell.failed;
    std::cerr << "cells: " << result.cells.size()
              << "; unconverged trials: " << unconverged
              << "; degenerate resamples: " << result.degenerate_resamples << "\n";
    for (const std::string& warning : result.warnings) {
      std::cerr << "warning: " << warning << "\n";
    }
  }
  return 0;
}

struct ProbeOptions {
  std::string kind;
  std::string output;
  std::vector<double> gifts = {1.0, 4.0};
  std::size_t crowd = 3;
  std::size_t colluders = 8;
  double attack_budget = 8.0;
  double decoy_amount = 0.01;
  std::vector<std::size_t> community_sizes = {3, 5, 10, 20, 50};
  bool quiet = false;
};

inline int cmd_probe(const ProbeOptions& opts) {
  bool ok = false;
  if (opts.kind == "growth") {
    const GrowthProbeResult probe = group_growth_probe(opts.gifts, opts.crowd);
    emit(opts.output, render_growth_probe(probe));
    ok = probe.passes();
  } else if (opts.kind == "sybil") {
    const SybilProbeResult probe =
        sybil_attack_probe(opts.colluders, opts.attack_budget, opts.decoy_amount);
    emit(opts.output, render_sybil_probe(probe));
    ok = probe.passes();
  } else if (opts.kind == "skew") {
    const SkewDemoResult demo = skew_demo(opts.community_sizes);
    emit(opts.output, render_skew_demo(demo));
    ok = demo.passes();
  } else {
    throw ValidationError("unknown probe '" + opts.kind +
                          "' (expected growth, sybil, or skew)");
  }
  if (!ok && !opts.quiet) std::cerr << "probe assertions failed\n";
  return ok ? 0 : 1;
}

}  // namespace cli_detail

/// Entry point behind main().  Exit codes: 0 success, 1 failed probe
/// assertions, 2 validation or usage errors, 3 I/O errors.
inline int run_cli(int argc, char** argv) {
  CLI::App app{"Donation matching: round allocation, equilibrium sweeps, and "
               "mechanism probes"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;

  cli_detail::AllocateOptions alloc;
  CLI::App* allocate =
      app.add_subcommand("allocate", "Run one matching round over a donation file");
  allocate->add_option("--donations", alloc.donations, "Donation table (CSV)")
      ->required();
  allocate->add_option("--pool", alloc.pool, "Matching pool size")->required();
  allocate
      ->add_option("--mechanism", alloc.mechanism,
                   "One of direct, qf, coqf, coqf-v1, hybrid")
      ->required();
  allocate->add_option("--grouping", alloc.grouping,
                       "singleton, projects, signature, or file:PATH");
  CLI::Option* cap_opt =
      allocate->add_option("--cap", alloc.cap, "Per-project cap as a pool fraction");
  CLI::Option* weight_opt = allocate->add_option(
      "--hybrid-weight", alloc.hybrid_weight, "Hybrid blend weight (0.25/0.5/0.75)");
  allocate->add_option("--output", alloc.output, "Output file (default stdout)");
  allocate->add_flag("--quiet", alloc.quiet, "Suppress diagnostics");
  allocate->add_option("--seed", seed, "Unused by this subcommand");

  cli_detail::SimulateOptions sim;
  CLI::App* simulate =
      app.add_subcommand("simulate", "Sweep equilibrium welfare over a grid");
  simulate->add_option("--budgets", sim.spec.budgets, "Prosocial budgets B")
      ->delimiter(',');
  simulate->add_option("--z-values", sim.spec.z_values, "In-group shares z")
      ->delimiter(',');
  simulate
      ->add_option("--sigma2-values", sim.spec.sigma2_values,
                   "Valuation variances")
      ->delimiter(',');
  simulate->add_option("--trials", sim.spec.trials, "Trials per grid cell");
  simulate->add_option("--agents", sim.spec.agent_count, "Population size");
  simulate->add_option("--groups", sim.spec.group_count, "Number of groups");
  simulate->add_option("--mechanisms", sim.mechanisms, "Mechanisms to solve")
      ->delimiter(',');
  simulate->add_option("--threads", sim.spec.threads,
                       "Worker threads (0 = hardware)");
  simulate->add_option("--seed", sim.spec.seed, "Master seed");
  simulate->add_option("--plot-dir", sim.plot_dir,
                       "Also write per-variance plot data files here");
  simulate->add_option("--output", sim.output, "Output file (default stdout)");
  simulate->add_flag("--quiet", sim.quiet, "Suppress diagnostics");

  cli_detail::ProbeOptions probe;
  CLI::App* probe_cmd =
      app.add_subcommand("probe", "Run a mechanism demonstration probe");
  probe_cmd->add_option("--kind", probe.kind, "growth, sybil, or skew")->required();
  probe_cmd->add_option("--gifts", probe.gifts, "Growth probe scale points")
      ->delimiter(',');
  probe_cmd->add_option("--crowd", probe.crowd, "Growth probe crowd size");
  probe_cmd->add_option("--colluders", probe.colluders, "Sybil identities");
  probe_cmd->add_option("--attack-budget", probe.attack_budget,
                        "Total split across sybil identities");
  probe_cmd->add_option("--decoy-amount", probe.decoy_amount,
                        "Size of each decoy donation");
  probe_cmd
      ->add_option("--community-sizes", probe.community_sizes,
                   "Skew demo community sizes")
      ->delimiter(',');
  probe_cmd->add_option("--output", probe.output, "Output file (default stdout)");
  probe_cmd->add_flag("--quiet", probe.quiet, "Suppress diagnostics");
  probe_cmd->add_option("--seed", seed, "Unused by this subcommand");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    alloc.has_cap = cap_opt->count() > 0;
    alloc.has_hybrid_weight = weight_opt->count() > 0;
    if (allocate->parsed()) return cli_detail::cmd_allocate(alloc);
    if (simulate->parsed()) return cli_detail::cmd_simulate(sim);
    if (probe_cmd->parsed()) return cli_detail::cmd_probe(probe);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace coqf
