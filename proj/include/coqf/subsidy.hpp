#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "coqf/errors.hpp"
#include "coqf/grouping.hpp"
#include "coqf/ledger.hpp"

namespace coqf {

namespace detail {

inline void require_contributions(std::span<const double> contributions) {
  for (double c : contributions) {
    if (!(c >= 0.0) || !std::isfinite(c)) {
      throw ValidationError("contributions must be finite and nonnegative");
    }
  }
}

/// Sum of c_i * w_i over members of `group` that are not members of `other`.
inline double exclusive_side_sum(std::span<const double> contributions,
                                 const GroupAssignment& groups, std::size_t group,
                                 std::size_t other) {
  const auto& g_members = groups.members[group];
  const auto& g_weights = groups.weights[group];
  const auto& h_members = groups.members[other];
  double sum = 0.0;
  std::size_t h = 0;
  for (std::size_t k = 0; k < g_members.size(); ++k) {
    const std::size_t donor = g_members[k];
    while (h < h_members.size() && h_members[h] < donor) ++h;
    if (h < h_members.size() && h_members[h] == donor) continue;  // shared member
    sum += contributions[donor] * g_weights[k];
  }
  return sum;
}

}  // namespace detail

/// Quadratic-funding matching subsidy: the pairwise sum over ordered donor
/// pairs of sqrt(c_i * c_j), which equals (sum of sqrt(c_i))^2 - sum of c_i.
inline double qf_subsidy(std::span<const double> contributions) {
  detail::require_contributions(contributions);
  const std::size_t n = contributions.size();
  double subsidy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      subsidy += std::sqrt(contributions[i] * contributions[j]);
    }
  }
  return subsidy;
}

/// Group-aware matching subsidy.  Each ordered pair of distinct groups
/// contributes sqrt of the product of the two sides' weighted contribution
/// sums, where each side counts only members exclusive to that group.  A pair
/// of a group with itself has two empty sides and contributes nothing, so
/// coordination inside one group earns no match; with singleton groups the
/// formula reduces exactly to qf_subsidy.
inline double coqf_subsidy(std::span<const double> contributions,
                           const GroupAssignment& groups) {
  detail::require_contributions(contributions);
  if (groups.donor_count != contributions.size()) {
    throw ValidationError("group assignment does not match the contribution vector");
  }
  groups.validate();
  const std::size_t G = groups.group_count();
  double subsidy = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t h = 0; h < G; ++h) {
      const double g_sum = detail::exclusive_side_sum(contributions, groups, g, h);
      const double h_sum = detail::exclusive_side_sum(contributions, groups, h, g);
      subsidy += std::sqrt(g_sum * h_sum);
    }
  }
  return subsidy;
}

/// Earlier group-aware design kept for comparison probes.  For each ordered
/// pair of distinct groups, every member of a side enters with
/// c^(1/k) / |T_i|, where T_i is the set of groups containing donor i and k
/// is the connection coefficient against the opposite group: donors linked to
/// the other side through any shared group get the dampened sqrt scaling.
/// Zero contributions drop out, so only donors who actually gave need group
/// memberships.
inline double coqf_v1_subsidy(std::span<const double> contributions,
                              const GroupAssignment& groups) {
  detail::require_contributions(contributions);
  if (groups.donor_count != contributions.size()) {
    throw ValidationError("group assignment does not match the contribution vector");
  }
  groups.validate();
  for (std::size_t d = 0; d < contributions.size(); ++d) {
    if (contributions[d] > 0.0 && groups.groups_of[d].empty()) {
      throw ValidationError("contributing donor belongs to no group");
    }
  }
  const std::size_t G = groups.group_count();

  // reachable[h][g'] marks groups that any member of h belongs to; the
  // connection coefficient against h is 2 exactly when a donor's own group
  // list meets that set.
  std::vector<std::vector<char>> reachable(G, std::vector<char>(G, 0));
  for (std::size_t h = 0; h < G; ++h) {
    for (std::size_t member : groups.members[h]) {
      for (std::size_t gp : groups.groups_of[member]) reachable[h][gp] = 1;
    }
  }
  const auto coefficient = [&](std::size_t donor, std::size_t against) {
    for (std::size_t gp : groups.groups_of[donor]) {
      if (reachable[against][gp]) return 2;
    }
    return 1;
  };
  const auto side_sum = [&](std::size_t side, std::size_t against) {
    double sum = 0.0;
    for (std::size_t member : groups.members[side]) {
      const double c = contributions[member];
      if (c <= 0.0) continue;
      const double scaled = coefficient(member, against) == 1 ? c : std::sqrt(c);
      sum += scaled / static_cast<double>(groups.groups_of[member].size());
    }
    return sum;
  };

  double subsidy = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t h = 0; h < G; ++h) {
      if (g == h) continue;
      subsidy += std::sqrt(side_sum(g, h) * side_sum(h, g));
    }
  }
  return subsidy;
}

/// Direct-donation total: no matching at all.
inline double direct_total(std::span<const double> contributions) {
  detail::require_contributions(contributions);
  double total = 0.0;
  for (double c : contributions) total += c;
  return total;
}

/// Blend of the two raw subsidies, applied before pool normalization.
inline double hybrid_subsidy(double qf_raw, double coqf_raw, double hybrid_weight) {
  if (!(hybrid_weight >= 0.0) || !(hybrid_weight <= 1.0)) {
    throw ValidationError("hybrid weight must lie in [0, 1]");
  }
  if (!(qf_raw >= 0.0) || !(coqf_raw >= 0.0)) {
    throw ValidationError("hybrid blend requires nonnegative raw subsidies");
  }
  return hybrid_weight * coqf_raw + (1.0 - hybrid_weight) * qf_raw;
}

/// Voting adaptation: voice credits are run through the chosen funding
/// formula and the group's effective vote count is the square root of the
/// resulting total.
inline double coqv_effective_votes(std::span<const double> credits,
                                   Mechanism mechanism,
                                   const GroupAssignment* groups = nullptr) {
  double raw = 0.0;
  switch (mechanism) {
    case Mechanism::QF:
      raw = qf_subsidy(credits);
      break;
    case Mechanism::CoQF:
      if (groups == nullptr) {
        throw ValidationError("vote tally with CO-QF needs a group assignment");
      }
      raw = coqf_subsidy(credits, *groups);
      break;
    case Mechanism::CoQFv1:
      if (groups == nullptr) {
        throw ValidationError("vote tally with CO-QF-V1 needs a group assignment");
      }
      raw = coqf_v1_subsidy(credits, *groups);
      break;
    default:
      throw ValidationError("vote tally supports QF, CO-QF, and CO-QF-V1");
  }
  return std::sqrt(direct_total(credits) + raw);
}

}  // namespace coqf
