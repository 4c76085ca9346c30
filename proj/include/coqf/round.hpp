#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coqf/errors.hpp"
#include "coqf/grouping.hpp"
#include "coqf/ledger.hpp"
#include "coqf/money.hpp"
#include "coqf/subsidy.hpp"

namespace coqf {

struct RoundConfig {
  Mechanism mechanism = Mechanism::QF;
  double matching_pool = 0.0;
  std::optional<double> cap_fraction;   ///< per-project share of the pool
  std::optional<double> hybrid_weight;  ///< required for Mechanism::Hybrid

  void validate() const {
    if (!(matching_pool >= 0.0) || !std::isfinite(matching_pool)) {
      throw ValidationError("matching pool must be a finite nonnegative amount");
    }
    if (cap_fraction) {
      if (!(*cap_fraction > 0.0) || !(*cap_fraction <= 1.0)) {
        throw ValidationError("cap fraction must lie in (0, 1]");
      }
    }
    if (mechanism == Mechanism::Hybrid) {
      if (!hybrid_weight) {
        throw ValidationError("hybrid mechanism requires a hybrid weight");
      }
      const double w = *hybrid_weight;
      const bool allowed = std::fabs(w - 0.25) < 1e-12 || std::fabs(w - 0.5) < 1e-12 ||
                           std::fabs(w - 0.75) < 1e-12;
      if (!allowed) {
        throw ValidationError("hybrid weight must be one of 0.25, 0.5, 0.75");
      }
    } else if (hybrid_weight) {
      throw ValidationError("hybrid weight is only meaningful for the hybrid mechanism");
    }
  }
};

struct NormalizationResult {
  std::vector<double> amounts;
  bool zero_raw = false;  ///< no project earned any subsidy; round is flagged
};

/// Scales raw subsidies so they exhaust the matching pool.  A round whose raw
/// subsidies are all zero cannot be scaled; it comes back all-zero with the
/// flag set rather than as an error, since such rounds are legitimate (single
/// donors everywhere, or a mechanism that adds nothing).
inline NormalizationResult normalize_to_pool(std::span<const double> raw,
                                             double pool) {
  if (!(pool >= 0.0) || !std::isfinite(pool)) {
    throw ValidationError("matching pool must be a finite nonnegative amount");
  }
  double total = 0.0;
  for (double r : raw) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw ValidationError("raw subsidies must be finite and nonnegative");
    }
    total += r;
  }
  NormalizationResult out;
  out.amounts.assign(raw.size(), 0.0);
  if (total <= 0.0) {
    out.zero_raw = true;
    return out;
  }
  for (std::size_t p = 0; p < raw.size(); ++p) {
    out.amounts[p] = raw[p] * pool / total;
  }
  return out;
}

struct CapResult {
  std::vector<double> amounts;
  double remainder = 0.0;  ///< pool money no project could absorb
};

/// Iterative water-filling cap.  Projects above cap_fraction * pool are
/// clamped to the cap and their excess is redistributed proportionally among
/// the projects still strictly below it; repeat until nothing exceeds the
/// cap.  Whatever cannot be placed (everyone at the cap, or no project with a
/// positive share left) is returned as the remainder instead of being forced
/// onto projects that earned nothing.
inline CapResult apply_matching_cap(std::span<const double> normalized, double pool,
                                    double cap_fraction) {
  if (!(cap_fraction > 0.0) || !(cap_fraction <= 1.0)) {
    throw ValidationError("cap fraction must lie in (0, 1]");
  }
  if (!(pool >= 0.0) || !std::isfinite(pool)) {
    throw ValidationError("matching pool must be a finite nonnegative amount");
  }
  CapResult out;
  out.amounts.assign(normalized.begin(), normalized.end());
  for (double a : out.amounts) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw ValidationError("normalized subsidies must be finite and nonnegative");
    }
  }
  const double cap = cap_fraction * pool;
  const double slack = 1e-12 * std::max(pool, 1.0);
  double stranded = 0.0;
  for (std::size_t pass = 0; pass <= out.amounts.size(); ++pass) {
    double excess = 0.0;
    for (double& a : out.amounts) {
      if (a > cap + slack) {
        excess += a - cap;
        a = cap;
      }
    }
    if (excess <= 0.0) break;
    double receiving = 0.0;
    for (double a : out.amounts) {
      if (a < cap - slack) receiving += a;
    }
    if (receiving <= 0.0) {
      stranded += excess;
      break;
    }
    const double scale = excess / receiving;
    for (double& a : out.amounts) {
      if (a < cap - slack) a += a * scale;
    }
  }
  out.remainder = stranded;
  return out;
}

struct ProjectAllocation {
  std::string project;
  double direct_total = 0.0;
  double raw_subsidy = 0.0;
  double normalized_subsidy = 0.0;
  double capped_subsidy = 0.0;
  double payout = 0.0;
};

struct AllocationResult {
  Mechanism mechanism = Mechanism::QF;
  double matching_pool = 0.0;
  std::optional<double> cap_fraction;
  std::vector<ProjectAllocation> projects;
  double unallocated_remainder = 0.0;
  bool zero_raw_subsidy = false;
  std::vector<std::string> warnings;
};

/// Runs one funding round end to end: per-project raw subsidies under the
/// configured mechanism, pool normalization, optional cap, then rounding of
/// the money columns to whole cents with the totals preserved.  Group-aware
/// mechanisms take their assignment through `groups`; a grouping that left
/// donors out (zero-total donors, donors missing from a groups file) simply
/// contributes no pair terms for them, and the round reports them as a
/// warning rather than failing.
inline AllocationResult allocate_round(const DonationLedger& ledger,
                                       const RoundConfig& config,
                                       const GroupAssignment* groups = nullptr,
                                       std::vector<std::string> grouping_warnings = {}) {
  config.validate();
  const bool needs_groups = config.mechanism == Mechanism::CoQF ||
                            config.mechanism == Mechanism::CoQFv1 ||
                            config.mechanism == Mechanism::Hybrid;
  if (needs_groups && groups == nullptr) {
    throw ValidationError("mechanism requires a group assignment");
  }
  static const GroupAssignment kNoGroups;
  const GroupAssignment& assignment = groups != nullptr ? *groups : kNoGroups;

  const std::size_t projects = ledger.project_count();
  std::vector<double> direct(projects, 0.0);
  std::vector<double> raw(projects, 0.0);
  for (std::size_t p = 0; p < projects; ++p) {
    const auto& column = ledger.project_column(p);
    direct[p] = direct_total(column);
    switch (config.mechanism) {
      case Mechanism::Direct:
        raw[p] = 0.0;
        break;
      case Mechanism::QF:
        raw[p] = qf_subsidy(column);
        break;
      case Mechanism::CoQF:
        raw[p] = coqf_subsidy(column, assignment);
        break;
      case Mechanism::CoQFv1:
        raw[p] = coqf_v1_subsidy(column, assignment);
        break;
      case Mechanism::Hybrid:
        raw[p] = hybrid_subsidy(qf_subsidy(column), coqf_subsidy(column, assignment),
                                *config.hybrid_weight);
        break;
    }
  }

  const NormalizationResult normalized = normalize_to_pool(raw, config.matching_pool);
  CapResult capped;
  if (config.cap_fraction && !normalized.zero_raw) {
    capped = apply_matching_cap(normalized.amounts, config.matching_pool,
                                *config.cap_fraction);
  } else {
    capped.amounts = normalized.amounts;
    capped.remainder = 0.0;
  }

  // Money columns become whole cents; the repair keeps the normalized column
  // summing to the pool and the capped column matching its exact total, with
  // repair cents never lifting a project past the cap.
  const CentRounding normalized_cents = round_preserving_total(normalized.amounts);
  std::int64_t cap_limit = std::numeric_limits<std::int64_t>::max();
  if (config.cap_fraction) {
    cap_limit = static_cast<std::int64_t>(
        std::floor(*config.cap_fraction * config.matching_pool * 100.0 + 1e-9));
  }
  const CentRounding capped_cents = round_preserving_total(capped.amounts, cap_limit);

  const std::int64_t pool_cents = to_cents(config.matching_pool);
  std::int64_t capped_total_cents = 0;
  for (std::int64_t c : capped_cents.cents) capped_total_cents += c;

  AllocationResult out;
  out.mechanism = config.mechanism;
  out.matching_pool = config.matching_pool;
  out.cap_fraction = config.cap_fraction;
  out.zero_raw_subsidy = normalized.zero_raw;
  out.warnings = std::move(grouping_warnings);
  out.unallocated_remainder = from_cents(pool_cents - capped_total_cents);
  out.projects.reserve(projects);
  for (std::size_t p = 0; p < projects; ++p) {
    ProjectAllocation row;
    row.project = ledger.projects()[p];
    row.direct_total = direct[p];
    row.raw_subsidy = raw[p];
    row.normalized_subsidy = from_cents(normalized_cents.cents[p]);
    row.capped_subsidy = from_cents(capped_cents.cents[p]);
    row.payout = from_cents(to_cents(direct[p]) + capped_cents.cents[p]);
    out.projects.push_back(std::move(row));
  }
  return out;
}

}  // namespace coqf
