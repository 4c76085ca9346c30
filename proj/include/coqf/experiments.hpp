#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "coqf/equilibrium.hpp"
#include "coqf/errors.hpp"
#include "coqf/grouping.hpp"
#include "coqf/ledger.hpp"
#include "coqf/population.hpp"
#include "coqf/rng.hpp"
#include "coqf/subsidy.hpp"

namespace coqf {

/// Grid of populations to solve: every combination of budget, in-group share,
/// and valuation variance gets `trials` independent populations, and each
/// population is solved once per mechanism so comparisons are paired.
struct SweepSpec {
  std::vector<double> budgets = {0.1, 0.5, 1.0, 1.5, 2.0};
  std::vector<double> z_values = {4.0 / 24.0, 1.0};
  std::vector<double> sigma2_values = {0.05, 0.25};
  std::vector<Mechanism> mechanisms = {Mechanism::Direct, Mechanism::QF,
                                       Mechanism::CoQF};
  std::size_t trials = 50;
  std::size_t agent_count = 25;
  std::size_t group_count = 5;
  std::vector<double> group_means = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::uint64_t seed = 1;
  std::size_t threads = 0;  ///< 0 means one worker per hardware thread
  SolverOptions solver;

  void validate() const {
    if (budgets.empty() || z_values.empty() || sigma2_values.empty()) {
      throw ValidationError("sweep needs at least one budget, share, and variance");
    }
    for (double b : budgets) {
      if (!std::isfinite(b) || b < 0.0) {
        throw ValidationError("budgets must be finite and nonnegative");
      }
    }
    for (double z : z_values) {
      if (!(z >= 0.0) || !(z <= 1.0)) {
        throw ValidationError("in-group shares must lie in [0, 1]");
      }
    }
    for (double s : sigma2_values) {
      if (!std::isfinite(s) || s < 0.0) {
        throw ValidationError("variances must be finite and nonnegative");
      }
    }
    if (mechanisms.empty()) throw ValidationError("sweep needs at least one mechanism");
    for (Mechanism m : mechanisms) {
      if (m != Mechanism::Direct && m != Mechanism::QF && m != Mechanism::CoQF) {
        throw ValidationError("no equilibrium model for mechanism " +
                              std::string(to_string(m)));
      }
    }
    if (trials == 0) throw ValidationError("trial count must be positive");
    if (group_count == 0 || agent_count % group_count != 0) {
      throw ValidationError("group count must divide the agent count");
    }
    if (group_means.size() != group_count) {
      throw ValidationError("need one valuation mean per group");
    }
  }

  SimulationParams population(double budget, double z, double sigma2) const {
    SimulationParams params;
    params.agent_count = agent_count;
    params.group_count = group_count;
    params.group_size = agent_count / group_count;
    params.budget = budget;
    params.in_group_share = z;
    params.sigma2 = sigma2;
    params.group_means = group_means;
    params.trials = trials;
    params.seed = seed;
    return params;
  }
};

struct TrialOutcome {
  Mechanism mechanism = Mechanism::Direct;
  double funding = 0.0;
  double ratio = 0.0;  ///< welfare relative to the planner's optimum
  bool converged = true;
};

struct TrialResult {
  std::vector<double> betas;
  std::vector<double> values;  ///< sympathy-weighted stakes A_i
  std::size_t resamples = 0;   ///< populations thrown away for a zero optimum
  std::vector<TrialOutcome> outcomes;
};

namespace detail {

/// Stream tag separating valuation draws from any future use of the seed.
constexpr std::uint64_t kBetaStream = 1;

}  // namespace detail

/// Builds one population and solves it under every requested mechanism.
///
/// The valuation seed mixes in only the variance index and the trial index,
/// on purpose: budget and in-group share shape the sympathy matrix but never
/// the valuation draw, so every (budget, share) cell sees the *same* trial
/// populations and cross-cell comparisons are paired rather than drowned in
/// sampling noise.  Growing the grid still never perturbs existing cells.
inline TrialResult run_trial(const SweepSpec& spec, double budget, double z,
                             std::size_t sigma2_index, std::size_t trial_index) {
  spec.validate();
  if (sigma2_index >= spec.sigma2_values.size()) {
    throw ValidationError("variance index out of range");
  }
  const SimulationParams params =
      spec.population(budget, z, spec.sigma2_values[sigma2_index]);
  params.validate();
  const std::vector<std::size_t> group_of = contiguous_group_of(params);
  const SympathyMatrix alpha = build_sympathy_matrix(params, group_of);

  Rng rng(derive_seed(spec.seed,
                      {detail::kBetaStream, sigma2_index, trial_index}));
  TrialResult trial;
  constexpr std::size_t kMaxResamples = 1000;
  for (;;) {
    trial.betas = sample_betas(params, group_of, rng);
    if (optimal_funding(trial.betas) > 0.0) break;
    if (++trial.resamples > kMaxResamples) {
      throw DegeneratePopulationError(
          "could not draw a population with a positive optimum");
    }
  }
  trial.values = sympathy_weighted_values(alpha, trial.betas);

  for (Mechanism mechanism : spec.mechanisms) {
    EquilibriumResult eq;
    switch (mechanism) {
      case Mechanism::Direct:
        eq = direct_equilibrium(trial.values);
        break;
      case Mechanism::QF:
        eq = qf_equilibrium_closed_form(trial.values);
        break;
      case Mechanism::CoQF:
        eq = coqf_equilibrium_numeric(
            trial.values,
            assignment_from_partition(group_of, params.group_count),
            spec.solver);
        break;
      default:
        throw ValidationError("no equilibrium model for mechanism " +
                              std::string(to_string(mechanism)));
    }
    TrialOutcome outcome;
    outcome.mechanism = mechanism;
    outcome.funding = eq.funding;
    outcome.ratio = approximation_ratio(eq.funding, trial.betas);
    outcome.converged = eq.converged;
    trial.outcomes.push_back(outcome);
  }
  return trial;
}

/// One grid cell's aggregate over the converged trials of a single mechanism.
struct CellStats {
  double budget = 0.0;
  double z = 0.0;
  double sigma2 = 0.0;
  Mechanism mechanism = Mechanism::Direct;
  std::size_t trials = 0;  ///< converged trials behind the mean
  double mean_ratio = 0.0;
  double se_ratio = 0.0;  ///< standard error of the mean ratio
  double mean_funding = 0.0;
  std::size_t failed = 0;  ///< trials dropped because the solver did not converge
};

struct SweepResult {
  std::vector<CellStats> cells;  ///< ordered by variance, budget, share, mechanism
  std::size_t degenerate_resamples = 0;
  std::vector<std::string> warnings;  ///< cells that dropped over 10% of trials
};

inline SweepResult run_sweep(const SweepSpec& spec) {
  spec.validate();
  const std::size_t n_sigma = spec.sigma2_values.size();
  const std::size_t n_budget = spec.budgets.size();
  const std::size_t n_z = spec.z_values.size();
  const std::size_t n_cells = n_sigma * n_budget * n_z;
  const std::size_t n_tasks = n_cells * spec.trials;

  // Every task owns one slot, so worker scheduling cannot change the output.
  std::vector<TrialResult> slots(n_tasks);
  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;

  const auto worker = [&] {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= n_tasks) return;
      const std::size_t trial_index = task % spec.trials;
      const std::size_t cell = task / spec.trials;
      const std::size_t z_index = cell % n_z;
      const std::size_t budget_index = (cell / n_z) % n_budget;
      const std::size_t sigma2_index = cell / (n_z * n_budget);
      try {
        slots[task] = run_trial(spec, spec.budgets[budget_index],
                                spec.z_values[z_index], sigma2_index, trial_index);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n_tasks);
        return;
      }
    }
  };

  std::size_t n_threads = spec.threads != 0
                              ? spec.threads
                              : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, n_tasks);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  SweepResult result;
  for (std::size_t sigma2_index = 0; sigma2_index < n_sigma; ++sigma2_index) {
    for (std::size_t budget_index = 0; budget_index < n_budget; ++budget_index) {
      for (std::size_t z_index = 0; z_index < n_z; ++z_index) {
        const std::size_t cell =
            (sigma2_index * n_budget + budget_index) * n_z + z_index;
        for (std::size_t m = 0; m < spec.mechanisms.size(); ++m) {
          CellStats stats;
          stats.budget = spec.budgets[budget_index];
          stats.z = spec.z_values[z_index];
          stats.sigma2 = spec.sigma2_values[sigma2_index];
          stats.mechanism = spec.mechanisms[m];
          double ratio_sum = 0.0;
          double funding_sum = 0.0;
          for (std::size_t t = 0; t < spec.trials; ++t) {
            const TrialOutcome& o = slots[cell * spec.trials + t].outcomes[m];
            if (!o.converged) {
              ++stats.failed;
              continue;
            }
            ++stats.trials;
            ratio_sum += o.ratio;
            funding_sum += o.funding;
          }
          if (stats.trials > 0) {
            stats.mean_ratio = ratio_sum / static_cast<double>(stats.trials);
            stats.mean_funding = funding_sum / static_cast<double>(stats.trials);
          }
          if (stats.trials > 1) {
            double sq = 0.0;
            for (std::size_t t = 0; t < spec.trials; ++t) {
              const TrialOutcome& o = slots[cell * spec.trials + t].outcomes[m];
              if (!o.converged) continue;
              const double d = o.ratio - stats.mean_ratio;
              sq += d * d;
            }
            stats.se_ratio = std::sqrt(sq / static_cast<double>(stats.trials - 1)) /
                             std::sqrt(static_cast<double>(stats.trials));
          }
          if (10 * stats.failed > spec.trials) {
            char line[160];
            std::snprintf(line, sizeof line,
                          "%s at budget=%g z=%g sigma2=%g: dropped %zu of %zu "
                          "trials as unconverged",
                          to_string(stats.mechanism), stats.budget, stats.z,
                          stats.sigma2, stats.failed, spec.trials);
            result.warnings.emplace_back(line);
          }
          result.cells.push_back(stats);
        }
      }
    }
  }
  for (const TrialResult& slot : slots) result.degenerate_resamples += slot.resamples;
  return result;
}

/// How matching rewards scale with the gift, read off at a few scale points.
struct GrowthRow {
  double gift = 0.0;
  double crowd_subsidy = 0.0;      ///< pairwise match for a coordinated crowd
  double attenuated_subsidy = 0.0; ///< overlapping-group subsidy, same gifts
  double individual_match = 0.0;   ///< match one donor's gift earns alone
};

struct GrowthProbeResult {
  std::size_t crowd_size = 0;
  std::vector<GrowthRow> rows;
  double crowd_ratio = 0.0;       ///< subsidy(4x) / subsidy(x): 4, linear growth
  double attenuated_ratio = 0.0;  ///< same quotient: 2, square-root growth
  double individual_ratio = 0.0;  ///< same quotient: 2, square-root growth

  bool passes(double tolerance = 1e-6) const {
    return std::abs(crowd_ratio - 4.0) <= tolerance &&
           std::abs(attenuated_ratio - 2.0) <= tolerance &&
           std::abs(individual_ratio - 2.0) <= tolerance;
  }
};

/// Quantifies the growth laws the mechanisms are built around.  A coordinated
/// crowd's pairwise match grows linearly in the common gift (quadruple the
/// gift, quadruple the match), while both a lone donor's match and the
/// attenuated overlapping-group subsidy grow with the square root of the gift.
inline GrowthProbeResult group_growth_probe(const std::vector<double>& gifts = {1.0,
                                                                                4.0},
                                            std::size_t crowd_size = 3) {
  if (crowd_size < 2) throw ValidationError("need a crowd of at least two");
  if (gifts.empty()) throw ValidationError("need at least one scale point");
  for (std::size_t k = 0; k < gifts.size(); ++k) {
    if (!(gifts[k] > 0.0) || !std::isfinite(gifts[k])) {
      throw ValidationError("gifts must be positive and finite");
    }
    if (k > 0 && gifts[k] <= gifts[k - 1]) {
      throw ValidationError("scale points must be increasing");
    }
  }

  // Three donors, middle one in both groups: every attenuation coefficient in
  // the overlapping-group subsidy switches on, leaving pure sqrt scaling.
  GroupAssignment chain;
  chain.donor_count = 3;
  chain.names = {"left", "right"};
  chain.members = {{0, 1}, {1, 2}};
  chain.weights = {{1.0, 0.5}, {0.5, 1.0}};
  chain.rebuild_donor_index();
  chain.validate();

  const auto crowd_subsidy = [crowd_size](double x) {
    return qf_subsidy(std::vector<double>(crowd_size, x));
  };
  const auto attenuated_subsidy = [&chain](double x) {
    return coqf_v1_subsidy(std::vector<double>(3, x), chain);
  };
  // A fixed crowd of unit gifts is already on the books; the probe donor's
  // own gift x earns the cross terms 2 * sqrt(x) * (crowd root sum).
  const auto individual_match = [crowd_size](double x) {
    std::vector<double> crowd(crowd_size, 1.0);
    const double before = qf_subsidy(crowd);
    crowd.push_back(x);
    return qf_subsidy(crowd) - before;
  };

  GrowthProbeResult probe;
  probe.crowd_size = crowd_size;
  for (double x : gifts) {
    GrowthRow row;
    row.gift = x;
    row.crowd_subsidy = crowd_subsidy(x);
    row.attenuated_subsidy = attenuated_subsidy(x);
    row.individual_match = individual_match(x);
    probe.rows.push_back(row);
  }
  const double x0 = gifts.front();
  probe.crowd_ratio = crowd_subsidy(4.0 * x0) / crowd_subsidy(x0);
  probe.attenuated_ratio = attenuated_subsidy(4.0 * x0) / attenuated_subsidy(x0);
  probe.individual_ratio = individual_match(4.0 * x0) / individual_match(x0);
  return probe;
}

/// A split-donation attack and what pattern grouping does to it.
struct SybilProbeResult {
  std::size_t colluders = 0;
  std::size_t decoy_projects = 0;

  double honest_qf = 0.0;    ///< target's pairwise match before the attack
  double attacked_qf = 0.0;  ///< same after the attack lands, no defense
  double attacked_signature_coqf = 0.0;  ///< defense: group identical patterns
  double attacked_projects_coqf = 0.0;   ///< defense: group by backed project

  double colluder_qf = 0.0;            ///< attack ledger alone, no defense
  double colluder_signature_coqf = 0.0;  ///< decoys make every pattern unique
  double naive_signature_coqf = 0.0;     ///< no decoys: one shared pattern
  double evasion_gap = 0.0;  ///< |colluder_signature_coqf - colluder_qf|

  bool passes(double tolerance = 1e-12) const {
    return naive_signature_coqf == 0.0 && evasion_gap <= tolerance;
  }
};

namespace detail {

/// One donor's budget split over `colluders` identities, all backing the
/// target; identity k also backs the decoy subset spelled by the bits of
/// k + 1, so every support pattern is distinct.
inline void add_sybil_attack(DonationLedger& ledger, std::size_t colluders,
                             const std::string& target, double budget,
                             double decoy_amount, bool with_decoys,
                             std::size_t* decoys_used = nullptr) {
  const double share = budget / static_cast<double>(colluders);
  std::size_t max_bit = 0;
  for (std::size_t k = 0; k < colluders; ++k) {
    const std::string donor = "sybil" + std::to_string(k);
    ledger.add_donation(donor, target, share);
    if (!with_decoys) continue;
    for (std::size_t bit = 0; (std::size_t{1} << bit) <= k + 1; ++bit) {
      if ((k + 1) & (std::size_t{1} << bit)) {
        ledger.add_donation(donor, "decoy" + std::to_string(bit), decoy_amount);
        max_bit = std::max(max_bit, bit + 1);
      }
    }
  }
  if (decoys_used) *decoys_used = max_bit;
}

inline double target_subsidy_qf(const DonationLedger& ledger,
                                const std::string& target) {
  const auto project = ledger.project_id(target);
  if (!project) return 0.0;
  return qf_subsidy(ledger.project_column(*project));
}

inline double target_subsidy_coqf(const DonationLedger& ledger,
                                  const std::string& target,
                                  const GroupAssignment& groups) {
  const auto project = ledger.project_id(target);
  if (!project) return 0.0;
  return coqf_subsidy(ledger.project_column(*project), groups);
}

}  // namespace detail

/// Splits one budget across many identities backing `target` on top of an
/// honest ledger.  Grouping identical support patterns wipes the manufactured
/// match out - but a handful of decoy donations, each identity backing a
/// distinct throwaway subset, makes every pattern unique again and restores
/// the full pairwise match exactly.  Support patterns alone are no defense.
inline SybilProbeResult sybil_attack_probe(const DonationLedger& honest,
                                           std::size_t colluders,
                                           const std::string& target,
                                           double budget, double decoy_amount) {
  if (target.empty()) throw ValidationError("target project name must be nonempty");
  if (!(budget > 0.0) || !std::isfinite(budget)) {
    throw ValidationError("attack budget must be positive and finite");
  }
  if (!(decoy_amount > 0.0) || !std::isfinite(decoy_amount)) {
    throw ValidationError("decoy amount must be positive and finite");
  }
  SybilProbeResult probe;
  probe.colluders = colluders;
  probe.honest_qf = detail::target_subsidy_qf(honest, target);

  if (colluders == 0) {
    // Nothing lands: every view collapses to the honest baseline.
    probe.attacked_qf = probe.honest_qf;
    probe.attacked_signature_coqf =
        detail::target_subsidy_coqf(honest, target, signature_groups(honest));
    probe.attacked_projects_coqf = detail::target_subsidy_coqf(
        honest, target, projects_as_groups(honest).assignment);
    return probe;
  }

  DonationLedger attacked = honest;
  detail::add_sybil_attack(attacked, colluders, target, budget, decoy_amount,
                           /*with_decoys=*/true, &probe.decoy_projects);
  probe.attacked_qf = detail::target_subsidy_qf(attacked, target);
  probe.attacked_signature_coqf =
      detail::target_subsidy_coqf(attacked, target, signature_groups(attacked));
  probe.attacked_projects_coqf = detail::target_subsidy_coqf(
      attacked, target, projects_as_groups(attacked).assignment);

  DonationLedger colluders_with_decoys;
  detail::add_sybil_attack(colluders_with_decoys, colluders, target, budget,
                           decoy_amount, /*with_decoys=*/true);
  probe.colluder_qf = detail::target_subsidy_qf(colluders_with_decoys, target);
  probe.colluder_signature_coqf = detail::target_subsidy_coqf(
      colluders_with_decoys, target, signature_groups(colluders_with_decoys));
  probe.evasion_gap = std::abs(probe.colluder_signature_coqf - probe.colluder_qf);

  DonationLedger naive;
  detail::add_sybil_attack(naive, colluders, target, budget, decoy_amount,
                           /*with_decoys=*/false);
  probe.naive_signature_coqf =
      detail::target_subsidy_coqf(naive, target, signature_groups(naive));
  return probe;
}

inline SybilProbeResult sybil_attack_probe(std::size_t colluders = 8,
                                           double budget = 8.0,
                                           double decoy_amount = 0.01) {
  return sybil_attack_probe(DonationLedger{}, colluders, "target", budget,
                            decoy_amount);
}

/// Matching flow toward a broadly-backed good versus a niche one as the crowd
/// grows, with every backer equally enthusiastic.
struct SkewPoint {
  std::size_t community_size = 0;  ///< total backers across both goods
  double niche_subsidy = 0.0;      ///< match earned by the two-backer good
  double broad_subsidy = 0.0;      ///< match earned by everyone else's good
  double niche_share = 0.0;        ///< niche good's slice of a bounded pool
  double broad_share = 0.0;        ///< broad good's slice; shares sum to one
};

struct SkewDemoResult {
  std::vector<SkewPoint> points;

  bool passes() const {
    for (std::size_t k = 0; k < points.size(); ++k) {
      if (k > 0 && !(points[k].broad_share > points[k - 1].broad_share)) {
        return false;
      }
      if (points[k].community_size >= 50 && !(points[k].broad_share > 2.0 / 3.0)) {
        return false;
      }
    }
    return true;
  }
};

/// Two goods, one backed by two people and one by everyone else, all with the
/// same unit stake.  At the contribution equilibrium the niche good's match
/// stays at one half while the broad good's grows without bound, so a bounded
/// matching pool follows popularity even when per-head enthusiasm is equal.
inline SkewDemoResult skew_demo(
    const std::vector<std::size_t>& community_sizes = {3, 5, 10, 20, 50}) {
  SkewDemoResult demo;
  for (std::size_t n : community_sizes) {
    if (n < 3) throw ValidationError("community needs at least three members");
    SkewPoint point;
    point.community_size = n;
    const auto good_subsidy = [](std::size_t backers) {
      const std::vector<double> stakes(backers, 1.0);
      const EquilibriumResult eq = qf_equilibrium_closed_form(stakes);
      return qf_subsidy(eq.contributions);
    };
    point.niche_subsidy = good_subsidy(2);
    point.broad_subsidy = good_subsidy(n - 2);
    const double total = point.niche_subsidy + point.broad_subsidy;
    point.niche_share = point.niche_subsidy / total;
    point.broad_share = point.broad_subsidy / total;
    demo.points.push_back(point);
  }
  return demo;
}

}  // namespace coqf
