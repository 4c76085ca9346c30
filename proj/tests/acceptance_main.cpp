// Acceptance suite: ten go/no-go checks over the whole library, printed one
// line apiece.  Exit status is the number of failed checks, so `ctest` treats
// any red line as a failure of the binary.
//
// The heavyweight sweep behind checks 3, 5, and 6 runs once and is shared.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "coqf/equilibrium.hpp"
#include "coqf/experiments.hpp"
#include "coqf/grouping.hpp"
#include "coqf/ledger.hpp"
#include "coqf/money.hpp"
#include "coqf/population.hpp"
#include "coqf/rng.hpp"
#include "coqf/round.hpp"
#include "coqf/subsidy.hpp"

namespace {

using Clock = std::chrono::steady_clock;

struct Check {
  int id = 0;
  std::string label;
  bool passed = false;
  double seconds = 0.0;
  double limit_seconds = 0.0;  ///< 0 means no runtime budget of its own
  std::string detail;
};

double elapsed_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool close_rel(double a, double b, double rel, double abs_floor = 1e-12) {
  const double diff = std::abs(a - b);
  return diff <= abs_floor || diff <= rel * std::max(std::abs(a), std::abs(b));
}

coqf::DonationLedger random_ledger(coqf::Rng& rng) {
  const std::size_t donors =
      1 + static_cast<std::size_t>(rng.uniform01() * 20.0);
  const std::size_t projects =
      1 + static_cast<std::size_t>(rng.uniform01() * 8.0);
  coqf::DonationLedger ledger;
  for (std::size_t d = 0; d < donors; ++d) {
    for (std::size_t p = 0; p < projects; ++p) {
      if (rng.uniform01() < 0.5) continue;
      ledger.add_donation("d" + std::to_string(d), "p" + std::to_string(p),
                          10.0 * rng.uniform01());
    }
  }
  return ledger;
}

// --- 1: group-aware subsidies with singleton groups equal the pairwise one --

Check check_singleton_equivalence() {
  Check check{1, "singleton groups recover the pairwise subsidy", false, 0, 10};
  const auto start = Clock::now();
  coqf::Rng rng(101);
  std::size_t mismatches = 0;
  for (int round = 0; round < 1000; ++round) {
    const coqf::DonationLedger ledger = random_ledger(rng);
    const coqf::GroupAssignment singles = coqf::singleton_groups(ledger);
    for (std::size_t p = 0; p < ledger.project_count(); ++p) {
      const auto& column = ledger.project_column(p);
      const double pairwise = coqf::qf_subsidy(column);
      if (!close_rel(coqf::coqf_subsidy(column, singles), pairwise, 1e-9) ||
          !close_rel(coqf::coqf_v1_subsidy(column, singles), pairwise, 1e-9)) {
        ++mismatches;
      }
    }
  }
  check.seconds = elapsed_since(start);
  check.passed = mismatches == 0;
  if (mismatches > 0) {
    check.detail = std::to_string(mismatches) + " project columns disagreed";
  }
  return check;
}

// --- 2: numeric equilibrium vs the closed form, plus a Nash certificate ----

Check check_equilibrium_oracle() {
  Check check{2, "numeric matching equilibrium agrees with the closed form",
              false, 0, 120};
  const auto start = Clock::now();
  coqf::Rng rng(202);
  std::size_t bad_funding = 0;
  std::size_t bad_nash = 0;
  std::size_t unconverged = 0;
  double worst_gap = 0.0;
  for (int round = 0; round < 200; ++round) {
    coqf::SimulationParams params;
    params.budget = 2.0 * rng.uniform01();
    params.in_group_share = rng.uniform01();
    const auto group_of = coqf::contiguous_group_of(params);
    const coqf::SympathyMatrix alpha = coqf::build_sympathy_matrix(params, group_of);
    coqf::Rng beta_rng(coqf::derive_seed(202, {7, static_cast<std::uint64_t>(round)}));
    const std::vector<double> betas =
        coqf::sample_betas(params, group_of, beta_rng);
    const std::vector<double> values =
        coqf::sympathy_weighted_values(alpha, betas);

    double value_sum = 0.0;
    for (double a : values) value_sum += a;
    const double expected = std::max(0.0, value_sum - 1.0);

    const coqf::EquilibriumResult eq = coqf::qf_equilibrium_numeric(values);
    if (!eq.converged) ++unconverged;
    const double gap = std::abs(eq.funding - expected);
    worst_gap = std::max(worst_gap, gap);
    if (gap > 1e-6) ++bad_funding;

    coqf::QfFunding model(values.size());
    if (coqf::max_unilateral_gain(model, values, eq.contributions) > 1e-6) {
      ++bad_nash;
    }
  }
  check.seconds = elapsed_since(start);
  check.passed = bad_funding == 0 && bad_nash == 0 && unconverged == 0;
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "worst |F - (sum A - 1)| = %.2e; %zu funding misses, %zu "
                "profitable deviations, %zu unconverged",
                worst_gap, bad_funding, bad_nash, unconverged);
  check.detail = detail;
  return check;
}

// --- 3/5/6: one sweep feeds the ordering, dispersion, and monotonicity ------

struct SweepChecks {
  Check ordering{3, "mean welfare ordering holds in every sweep cell", false, 0,
                 1800};
  Check dispersion{5, "per-cell standard errors stay within 0.01", false, 0, 0};
  Check monotonicity{6, "mean ratios are monotone in the in-group share", false,
                     0, 2700};
};

SweepChecks run_sweep_checks() {
  SweepChecks checks;
  const auto start = Clock::now();

  coqf::SweepSpec spec;
  spec.budgets = {0.1, 0.5, 1.0, 1.5, 2.0};
  spec.z_values = {4.0 / 24.0, 0.5, 1.0};  // superset; 0.5 feeds only check 6
  spec.sigma2_values = {0.05, 0.25};
  spec.trials = 50;
  spec.seed = 1;
  const coqf::SweepResult sweep = coqf::run_sweep(spec);
  const double sweep_seconds = elapsed_since(start);

  const std::size_t nz = spec.z_values.size();
  const std::size_t nb = spec.budgets.size();
  const std::size_t nm = spec.mechanisms.size();
  const auto cell_at = [&](std::size_t si, std::size_t bi, std::size_t zi,
                           std::size_t mi) -> const coqf::CellStats& {
    return sweep.cells[((si * nb + bi) * nz + zi) * nm + mi];
  };

  // Check 3: CO-QF >= QF - 0.005 and QF - 0.005 >= DIRECT - 0.01 per cell,
  // over the two-share grid (z = 4/24 and z = 1).
  std::size_t ordering_misses = 0;
  std::string ordering_detail;
  std::size_t dispersion_misses = 0;
  double worst_se = 0.0;
  for (std::size_t si = 0; si < spec.sigma2_values.size(); ++si) {
    for (std::size_t bi = 0; bi < nb; ++bi) {
      for (std::size_t zi : {std::size_t{0}, std::size_t{2}}) {
        const coqf::CellStats& direct = cell_at(si, bi, zi, 0);
        const coqf::CellStats& qf = cell_at(si, bi, zi, 1);
        const coqf::CellStats& co = cell_at(si, bi, zi, 2);
        const bool ok = co.mean_ratio >= qf.mean_ratio - 0.005 &&
                        qf.mean_ratio - 0.005 >= direct.mean_ratio - 0.01;
        if (!ok) {
          ++ordering_misses;
          if (ordering_detail.size() < 200) {
            char cell[96];
            std::snprintf(cell, sizeof cell,
                          " [B=%g z=%g s2=%g: D=%.3f Q=%.3f C=%.3f]", qf.budget,
                          qf.z, qf.sigma2, direct.mean_ratio, qf.mean_ratio,
                          co.mean_ratio);
            ordering_detail += cell;
          }
        }
        for (const coqf::CellStats* cell : {&direct, &qf, &co}) {
          worst_se = std::max(worst_se, cell->se_ratio);
          if (cell->se_ratio > 0.01) ++dispersion_misses;
        }
      }
    }
  }
  checks.ordering.seconds = sweep_seconds;
  checks.ordering.passed =
      ordering_misses == 0 && sweep_seconds < checks.ordering.limit_seconds;
  checks.ordering.detail =
      std::to_string(ordering_misses) + " of 20 cells out of order" +
      ordering_detail;

  checks.dispersion.seconds = 0.0;  // piggybacks on the shared sweep
  checks.dispersion.passed = dispersion_misses == 0;
  char se_detail[64];
  std::snprintf(se_detail, sizeof se_detail, "largest standard error %.4f",
                worst_se);
  checks.dispersion.detail = se_detail;

  // Check 6: for each mechanism, budget, and variance, the three means over
  // z in {4/24, 0.5, 1} move one way (either direction, slack 1e-5).
  std::size_t monotone_misses = 0;
  std::string monotone_detail;
  const double slack = 1e-5;
  for (std::size_t si = 0; si < spec.sigma2_values.size(); ++si) {
    for (std::size_t bi = 0; bi < nb; ++bi) {
      for (std::size_t mi = 0; mi < nm; ++mi) {
        const double r0 = cell_at(si, bi, 0, mi).mean_ratio;
        const double r1 = cell_at(si, bi, 1, mi).mean_ratio;
        const double r2 = cell_at(si, bi, 2, mi).mean_ratio;
        const bool up = r1 - r0 >= -slack && r2 - r1 >= -slack;
        const bool down = r1 - r0 <= slack && r2 - r1 <= slack;
        if (!up && !down) {
          ++monotone_misses;
          if (monotone_detail.size() < 200) {
            char turn[96];
            std::snprintf(turn, sizeof turn, " [%s B=%g s2=%g: %.4f %.4f %.4f]",
                          coqf::to_string(spec.mechanisms[mi]),
                          spec.budgets[bi], spec.sigma2_values[si], r0, r1, r2);
            monotone_detail += turn;
          }
        }
      }
    }
  }
  checks.monotonicity.seconds = sweep_seconds;
  checks.monotonicity.passed =
      monotone_misses == 0 && sweep_seconds < checks.monotonicity.limit_seconds;
  checks.monotonicity.detail = std::to_string(monotone_misses) +
                               " of 30 mechanism series turn" + monotone_detail;

  std::size_t unconverged = 0;
  for (const coqf::CellStats& cell : sweep.cells) unconverged += cell.failed;
  if (unconverged > 0) {
    checks.ordering.detail +=
        "; " + std::to_string(unconverged) + " unconverged trials dropped";
  }
  return checks;
}

// --- 4: without prosocial spillover, matching funds the optimum ------------

Check check_zero_budget_limit() {
  Check check{4, "matching hits the welfare optimum at zero spillover", false,
              0, 60};
  const auto start = Clock::now();
  coqf::SweepSpec spec;
  spec.budgets = {0.0};
  spec.mechanisms = {coqf::Mechanism::QF};
  const coqf::SweepResult sweep = coqf::run_sweep(spec);
  double worst = 0.0;
  for (const coqf::CellStats& cell : sweep.cells) {
    worst = std::max(worst, std::abs(cell.mean_ratio - 1.0));
  }
  check.seconds = elapsed_since(start);
  check.passed = worst <= 1e-4;
  char detail[64];
  std::snprintf(detail, sizeof detail, "largest |mean ratio - 1| = %.2e", worst);
  check.detail = detail;
  return check;
}

// --- 7: growth laws ---------------------------------------------------------

Check check_growth_laws() {
  Check check{7, "match scaling: linear for crowds, square-root otherwise",
              false, 0, 1};
  const auto start = Clock::now();
  const coqf::GrowthProbeResult probe = coqf::group_growth_probe();
  check.seconds = elapsed_since(start);
  check.passed = std::abs(probe.crowd_ratio - 4.0) <= 1e-6 &&
                 std::abs(probe.attenuated_ratio - 2.0) <= 1e-6 &&
                 std::abs(probe.individual_ratio - 2.0) <= 1e-6;
  char detail[96];
  std::snprintf(detail, sizeof detail,
                "quadrupled-gift ratios: crowd %.6f, attenuated %.6f, "
                "individual %.6f",
                probe.crowd_ratio, probe.attenuated_ratio,
                probe.individual_ratio);
  check.detail = detail;
  return check;
}

// --- 8: split-donation attack and the pattern-grouping defense -------------

Check check_sybil_reduction() {
  Check check{8, "decoyed split donations tie the pairwise match exactly",
              false, 0, 1};
  const auto start = Clock::now();
  const coqf::SybilProbeResult probe = coqf::sybil_attack_probe(8, 8.0, 0.01);
  check.seconds = elapsed_since(start);
  check.passed = probe.decoy_projects + 1 == 5 &&
                 probe.evasion_gap <= 1e-12 &&
                 probe.naive_signature_coqf == 0.0;
  char detail[128];
  std::snprintf(detail, sizeof detail,
                "%zu projects touched; evasion gap %.2e; shared-pattern "
                "subsidy %g",
                probe.decoy_projects + 1, probe.evasion_gap,
                probe.naive_signature_coqf);
  check.detail = detail;
  return check;
}

// --- 9: a bounded pool follows the crowd ------------------------------------

Check check_popularity_skew() {
  Check check{9, "the broad good's pool share grows and passes two thirds",
              false, 0, 60};
  const auto start = Clock::now();
  const coqf::SkewDemoResult demo = coqf::skew_demo({3, 5, 10, 20, 50, 100});
  check.seconds = elapsed_since(start);
  check.passed = demo.passes();
  char detail[96];
  std::snprintf(detail, sizeof detail,
                "broad share at 50 backers: %.4f; at 100: %.4f",
                demo.points[4].broad_share, demo.points[5].broad_share);
  check.detail = detail;
  return check;
}

// --- 10: capped rounds conserve every cent ----------------------------------

Check check_money_conservation() {
  Check check{10, "capped rounds conserve the pool to the cent", false, 0, 10};
  const auto start = Clock::now();
  coqf::Rng rng(1010);
  std::size_t leaks = 0;
  std::size_t cap_breaches = 0;
  for (int round = 0; round < 1000; ++round) {
    const coqf::DonationLedger ledger = random_ledger(rng);
    coqf::RoundConfig config;
    config.mechanism = coqf::Mechanism::QF;
    config.matching_pool = 1000.0 * rng.uniform01();
    config.cap_fraction = 0.05 + 0.95 * rng.uniform01();
    const coqf::AllocationResult result = coqf::allocate_round(ledger, config);

    std::int64_t placed = 0;
    const std::int64_t cap_limit = static_cast<std::int64_t>(
        *config.cap_fraction * config.matching_pool * 100.0 + 1e-9);
    for (const coqf::ProjectAllocation& row : result.projects) {
      const std::int64_t cents = coqf::to_cents(row.capped_subsidy);
      placed += cents;
      if (cents > cap_limit) ++cap_breaches;
    }
    if (placed + coqf::to_cents(result.unallocated_remainder) !=
        coqf::to_cents(config.matching_pool)) {
      ++leaks;
    }
  }
  check.seconds = elapsed_since(start);
  check.passed = leaks == 0 && cap_breaches == 0;
  char detail[96];
  std::snprintf(detail, sizeof detail, "%zu rounds leaked; %zu cap breaches",
                leaks, cap_breaches);
  check.detail = detail;
  return check;
}

void print_check(const Check& check) {
  std::printf("%s  %2d  %-60s %8.1fs\n", check.passed ? "PASS" : "FAIL",
              check.id, check.label.c_str(), check.seconds);
  if (!check.detail.empty()) {
    std::printf("         %s\n", check.detail.c_str());
  }
  std::fflush(stdout);
}

}  // namespace

int main() {
  std::vector<Check> checks;
  checks.push_back(check_singleton_equivalence());
  checks.push_back(check_equilibrium_oracle());

  const SweepChecks sweep = run_sweep_checks();
  checks.push_back(sweep.ordering);
  checks.push_back(check_zero_budget_limit());
  checks.push_back(sweep.dispersion);
  checks.push_back(sweep.monotonicity);

  checks.push_back(check_growth_laws());
  checks.push_back(check_sybil_reduction());
  checks.push_back(check_popularity_skew());
  checks.push_back(check_money_conservation());

  int failures = 0;
  for (const Check& check : checks) {
    print_check(check);
    if (!check.passed) ++failures;
  }
  std::printf("%d of %zu checks passed\n", static_cast<int>(checks.size()) - failures,
              checks.size());
  return failures;
}
