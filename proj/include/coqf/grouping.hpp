#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "coqf/errors.hpp"
#include "coqf/ledger.hpp"

namespace coqf {

/// Membership structure handed to the group-aware subsidy formulas.  Donors
/// are identified by their ledger (or population) index; a donor may sit in
/// several groups, with per-group weights that sum to one across the groups
/// containing them.
struct GroupAssignment {
  std::size_t donor_count = 0;
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> members;  ///< ascending donor indices
  std::vector<std::vector<double>> weights;       ///< aligned with members
  std::vector<std::vector<std::size_t>> groups_of;  ///< per donor, ascending

  std::size_t group_count() const { return names.size(); }

  bool is_member(std::size_t donor, std::size_t group) const {
    const auto& m = members.at(group);
    return std::binary_search(m.begin(), m.end(), donor);
  }

  double weight_of(std::size_t donor, std::size_t group) const {
    const auto& m = members.at(group);
    const auto it = std::lower_bound(m.begin(), m.end(), donor);
    if (it == m.end() || *it != donor) return 0.0;
    return weights.at(group).at(static_cast<std::size_t>(it - m.begin()));
  }

  /// Rebuilds the donor -> groups index from the member lists.
  void rebuild_donor_index() {
    groups_of.assign(donor_count, {});
    for (std::size_t g = 0; g < members.size(); ++g) {
      for (std::size_t donor : members[g]) groups_of.at(donor).push_back(g);
    }
    for (auto& list : groups_of) std::sort(list.begin(), list.end());
  }

  /// Checks the structural contract: member lists sorted and in range,
  /// weights within [0, 1] and aligned, and each grouped donor's weights
  /// summing to one.  Throws ValidationError on the first breach.
  void validate() const {
    if (names.size() != members.size() || names.size() != weights.size()) {
      throw ValidationError("group assignment: misaligned group arrays");
    }
    std::vector<double> weight_sum(donor_count, 0.0);
    std::vector<bool> grouped(donor_count, false);
    for (std::size_t g = 0; g < members.size(); ++g) {
      if (members[g].size() != weights[g].size()) {
        throw ValidationError("group assignment: member/weight size mismatch");
      }
      for (std::size_t k = 0; k < members[g].size(); ++k) {
        const std::size_t donor = members[g][k];
        if (donor >= donor_count) {
          throw ValidationError("group assignment: donor index out of range");
        }
        if (k > 0 && members[g][k - 1] >= donor) {
          throw ValidationError("group assignment: member list not strictly ascending");
        }
        const double w = weights[g][k];
        if (!(w >= 0.0) || !(w <= 1.0) || !std::isfinite(w)) {
          throw ValidationError("group assignment: weight outside [0, 1]");
        }
        weight_sum[donor] += w;
        grouped[donor] = true;
      }
    }
    for (std::size_t d = 0; d < donor_count; ++d) {
      if (grouped[d] && std::fabs(weight_sum[d] - 1.0) > 1e-9) {
        throw ValidationError("group assignment: weights of a grouped donor must sum to 1");
      }
    }
    if (groups_of.size() != donor_count) {
      throw ValidationError("group assignment: donor index not built");
    }
  }
};

/// Every donor alone in their own group with weight 1.  Group-aware subsidies
/// collapse to their groupless counterparts under this assignment.
inline GroupAssignment singleton_groups(const DonationLedger& ledger) {
  GroupAssignment out;
  out.donor_count = ledger.donor_count();
  out.names.reserve(out.donor_count);
  for (std::size_t d = 0; d < out.donor_count; ++d) {
    out.names.push_back(ledger.donors()[d]);
    out.members.push_back({d});
    out.weights.push_back({1.0});
  }
  out.rebuild_donor_index();
  return out;
}

struct ProjectGroupingResult {
  GroupAssignment assignment;
  std::vector<std::size_t> excluded_donors;  ///< donors with zero total given
};

/// One group per project, containing the donors who gave it a positive
/// amount; a donor's weight in a project group is the share of their total
/// giving that went to that project.  Donors with zero totals cannot be
/// weighted and are excluded (and reported).
inline ProjectGroupingResult projects_as_groups(const DonationLedger& ledger) {
  ProjectGroupingResult out;
  out.assignment.donor_count = ledger.donor_count();
  std::vector<double> totals(ledger.donor_count());
  for (std::size_t d = 0; d < ledger.donor_count(); ++d) {
    totals[d] = ledger.donor_total(d);
    if (totals[d] <= 0.0) out.excluded_donors.push_back(d);
  }
  for (std::size_t p = 0; p < ledger.project_count(); ++p) {
    const auto& column = ledger.project_column(p);
    std::vector<std::size_t> members;
    std::vector<double> weights;
    for (std::size_t d = 0; d < column.size(); ++d) {
      if (column[d] > 0.0 && totals[d] > 0.0) {
        members.push_back(d);
        weights.push_back(column[d] / totals[d]);
      }
    }
    if (members.empty()) continue;
    out.assignment.names.push_back(ledger.projects()[p]);
    out.assignment.members.push_back(std::move(members));
    out.assignment.weights.push_back(std::move(weights));
  }
  out.assignment.rebuild_donor_index();
  return out;
}

/// Groups donors by their support signature: donors whose sets of positively
/// supported projects coincide share one group with weight 1.  Donors with no
/// positive donations carry no signature and are left ungrouped.
inline GroupAssignment signature_groups(const DonationLedger& ledger) {
  GroupAssignment out;
  out.donor_count = ledger.donor_count();
  std::map<std::vector<std::size_t>, std::vector<std::size_t>> by_signature;
  for (std::size_t d = 0; d < ledger.donor_count(); ++d) {
    std::vector<std::size_t> support = ledger.donor_support(d);
    if (support.empty()) continue;
    by_signature[std::move(support)].push_back(d);
  }
  for (const auto& [signature, donors] : by_signature) {
    std::string name;
    for (std::size_t p : signature) {
      if (!name.empty()) name += '+';
      name += ledger.projects()[p];
    }
    out.names.push_back(std::move(name));
    out.members.push_back(donors);
    out.weights.emplace_back(donors.size(), 1.0);
  }
  out.rebuild_donor_index();
  return out;
}

namespace detail {

inline std::string trim(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r\n");
  return text.substr(begin, end - begin + 1);
}

}  // namespace detail

/// Parses an externally supplied grouping document.  Format, one entry per
/// line:
///
///     group <name>
///     <donor>: <weight>
///     ...
///
/// Blank lines and lines starting with '#' are skipped.  Weights must be
/// nonnegative; each donor's weights are renormalized to sum to one, so
/// relative magnitudes are what matters.  Donors must exist in the ledger.
inline GroupAssignment groups_from_document(std::istream& in,
                                            const DonationLedger& ledger) {
  GroupAssignment out;
  out.donor_count = ledger.donor_count();
  std::map<std::string, std::size_t> seen_names;
  std::vector<std::map<std::size_t, double>> group_entries;
  std::string line;
  std::size_t line_no = 0;
  std::size_t current = static_cast<std::size_t>(-1);
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = detail::trim(line);
    if (text.empty() || text[0] == '#') continue;
    if (text.rfind("group ", 0) == 0 || text == "group") {
      const std::string name = detail::trim(text.substr(5));
      if (name.empty()) throw ParseError("group declaration without a name", line_no);
      if (!seen_names.try_emplace(name, out.names.size()).second) {
        throw ParseError("duplicate group name '" + name + "'", line_no);
      }
      out.names.push_back(name);
      group_entries.emplace_back();
      current = out.names.size() - 1;
      continue;
    }
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
      throw ParseError("expected 'group <name>' or '<donor>: <weight>'", line_no);
    }
    if (current == static_cast<std::size_t>(-1)) {
      throw ParseError("member entry before any group declaration", line_no);
    }
    const std::string donor = detail::trim(text.substr(0, colon));
    const std::string weight_text = detail::trim(text.substr(colon + 1));
    if (donor.empty()) throw ParseError("empty donor name", line_no);
    const auto donor_id = ledger.donor_id(donor);
    if (!donor_id) throw ParseError("unknown donor '" + donor + "'", line_no);
    double weight = 0.0;
    try {
      std::size_t used = 0;
      weight = std::stod(weight_text, &used);
      if (used != weight_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("malformed weight '" + weight_text + "'", line_no);
    }
    if (!(weight >= 0.0) || !std::isfinite(weight)) {
      throw ParseError("negative weight for donor '" + donor + "'", line_no);
    }
    if (!group_entries[current].try_emplace(*donor_id, weight).second) {
      throw ParseError("donor '" + donor + "' listed twice in one group", line_no);
    }
  }

  // Renormalize each donor's weights across the groups that mention them.
  std::vector<double> weight_sum(out.donor_count, 0.0);
  std::vector<bool> mentioned(out.donor_count, false);
  for (const auto& entries : group_entries) {
    for (const auto& [donor, weight] : entries) {
      weight_sum[donor] += weight;
      mentioned[donor] = true;
    }
  }
  for (std::size_t d = 0; d < out.donor_count; ++d) {
    if (mentioned[d] && weight_sum[d] <= 0.0) {
      throw ParseError("donor '" + ledger.donors()[d] + "' has zero total weight", 0);
    }
  }
  for (auto& entries : group_entries) {
    std::vector<std::size_t> members;
    std::vector<double> weights;
    for (const auto& [donor, weight] : entries) {
      members.push_back(donor);
      weights.push_back(weight / weight_sum[donor]);
    }
    out.members.push_back(std::move(members));
    out.weights.push_back(std::move(weights));
  }
  out.rebuild_donor_index();
  out.validate();
  return out;
}

inline GroupAssignment groups_from_document(const std::string& text,
                                            const DonationLedger& ledger) {
  std::istringstream in(text);
  return groups_from_document(in, ledger);
}

/// Connection coefficient between a donor and a group: 2 when any of the
/// donor's groups is also a group of some member of `group`, otherwise 1.
/// Distinguishes overlapping from disjoint communities in the v1 formula.
inline int connection_coefficient(std::size_t donor, std::size_t group,
                                  const GroupAssignment& assignment) {
  if (donor >= assignment.donor_count) {
    throw ValidationError("connection coefficient: donor index out of range");
  }
  if (group >= assignment.group_count()) {
    throw ValidationError("connection coefficient: group index out of range");
  }
  const auto& own = assignment.groups_of.at(donor);
  if (own.empty()) {
    throw ValidationError("connection coefficient: donor belongs to no group");
  }
  for (std::size_t other : assignment.members.at(group)) {
    const auto& theirs = assignment.groups_of.at(other);
    std::size_t a = 0, b = 0;
    while (a < own.size() && b < theirs.size()) {
      if (own[a] == theirs[b]) return 2;
      if (own[a] < theirs[b]) ++a;
      else ++b;
    }
  }
  return 1;
}

/// Partition helper for simulations: agent i joins group group_of[i] with
/// weight 1.
inline GroupAssignment assignment_from_partition(
    const std::vector<std::size_t>& group_of, std::size_t group_count) {
  GroupAssignment out;
  out.donor_count = group_of.size();
  out.names.reserve(group_count);
  out.members.assign(group_count, {});
  out.weights.assign(group_count, {});
  for (std::size_t g = 0; g < group_count; ++g) {
    out.names.push_back("g" + std::to_string(g + 1));
  }
  for (std::size_t i = 0; i < group_of.size(); ++i) {
    const std::size_t g = group_of[i];
    if (g >= group_count) throw ValidationError("partition: group index out of range");
    out.members[g].push_back(i);
    out.weights[g].push_back(1.0);
  }
  out.rebuild_donor_index();
  return out;
}

}  // namespace coqf
