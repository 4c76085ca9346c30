#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "coqf/errors.hpp"
#include "coqf/grouping.hpp"
#include "coqf/subsidy.hpp"

namespace coqf {

/// Knobs for the damped best-response solver.  The defaults are deliberately
/// conservative; every experiment in this repository converges well inside
/// them.
struct SolverOptions {
  double damping = 0.5;            ///< weight kept on the old contribution
  double tolerance = 1e-9;         ///< stop when max |BR_i - c_i| drops below
  std::size_t max_iterations = 10000;
  double bracket_width = 1e-12;    ///< bisection stops at this interval width
  double lower_probe = 1e-15;      ///< where the zero-contribution corner is probed
  double contribution_cap = 0.0;   ///< upper bound per agent; 0 picks 10*(sum A)^2

  void validate() const {
    if (!(damping >= 0.0) || !(damping < 1.0)) {
      throw ValidationError("damping must lie in [0, 1)");
    }
    if (!(tolerance > 0.0) || !(bracket_width > 0.0) || !(lower_probe > 0.0)) {
      throw ValidationError("solver tolerances must be positive");
    }
    if (max_iterations == 0) throw ValidationError("need at least one iteration");
    if (!(contribution_cap >= 0.0)) {
      throw ValidationError("contribution cap must be nonnegative");
    }
  }
};

struct EquilibriumResult {
  std::vector<double> contributions;
  double funding = 0.0;       ///< total F the mechanism produces at the fixed point
  std::size_t iterations = 0;
  bool converged = false;
  double residual = 0.0;      ///< last max |BR_i - c_i|
};

/// Funding models plug into the solver through three calls: prepare(c) caches
/// whatever totals the mechanism needs, funding_at(i, x) is total funding with
/// agent i's contribution swapped for x, and derivative_at(i, x) is the slope
/// of that curve (infinity is a legal answer at square-root kinks).

class DirectFunding {
 public:
  explicit DirectFunding(std::size_t n) : n_(n) {}

  void prepare(std::span<const double> c) {
    total_ = 0.0;
    c_.assign(c.begin(), c.end());
    for (double x : c) total_ += x;
  }

  double funding() const { return total_; }
  double funding_at(std::size_t i, double x) const { return total_ - c_[i] + x; }
  double derivative_at(std::size_t, double) const { return 1.0; }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  double total_ = 0.0;
  std::vector<double> c_;
};

class QfFunding {
 public:
  explicit QfFunding(std::size_t n) : n_(n) {}

  void prepare(std::span<const double> c) {
    c_.assign(c.begin(), c.end());
    sqrt_sum_ = 0.0;
    for (double x : c) sqrt_sum_ += std::sqrt(x);
  }

  /// Direct total plus the pairwise subsidy collapses to (sum of roots)^2.
  double funding() const { return sqrt_sum_ * sqrt_sum_; }

  double funding_at(std::size_t i, double x) const {
    const double s = others_root_sum(i) + std::sqrt(x);
    return s * s;
  }

  double derivative_at(std::size_t i, double x) const {
    const double k = others_root_sum(i);
    if (x <= 0.0) {
      return k > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
    }
    return 1.0 + k / std::sqrt(x);
  }

  std::size_t size() const { return n_; }

 private:
  double others_root_sum(std::size_t i) const {
    return std::max(0.0, sqrt_sum_ - std::sqrt(c_[i]));
  }

  std::size_t n_;
  double sqrt_sum_ = 0.0;
  std::vector<double> c_;
};

class CoqfFunding {
 public:
  explicit CoqfFunding(GroupAssignment assignment)
      : groups_(std::move(assignment)) {
    groups_.validate();
    // With every weight 1 and no donor in two groups the subsidy collapses to
    // group-level pairwise matching, which has an O(1) per-agent curve.
    disjoint_ = true;
    std::vector<int> seen(groups_.donor_count, 0);
    for (std::size_t g = 0; g < groups_.group_count() && disjoint_; ++g) {
      for (std::size_t k = 0; k < groups_.members[g].size(); ++k) {
        if (groups_.weights[g][k] != 1.0 || seen[groups_.members[g][k]]++ > 0) {
          disjoint_ = false;
          break;
        }
      }
    }
    group_of_.assign(groups_.donor_count, kUngrouped);
    if (disjoint_) {
      for (std::size_t g = 0; g < groups_.group_count(); ++g) {
        for (std::size_t d : groups_.members[g]) group_of_[d] = g;
      }
    }
  }

  void prepare(std::span<const double> c) {
    if (c.size() != groups_.donor_count) {
      throw ValidationError("contribution vector does not match the group assignment");
    }
    c_.assign(c.begin(), c.end());
    if (!disjoint_) return;
    group_total_.assign(groups_.group_count(), 0.0);
    double total = 0.0;
    double grouped = 0.0;
    for (std::size_t d = 0; d < c_.size(); ++d) {
      total += c_[d];
      if (group_of_[d] != kUngrouped) {
        group_total_[group_of_[d]] += c_[d];
        grouped += c_[d];
      }
    }
    ungrouped_direct_ = total - grouped;
    root_total_ = 0.0;
    for (double t : group_total_) root_total_ += std::sqrt(t);
  }

  double funding() {
    if (disjoint_) {
      // Group totals cancel against the subsidy's direct part, leaving the
      // squared sum of group roots plus whatever bypasses the groups.
      return ungrouped_direct_ + root_total_ * root_total_;
    }
    return general_funding(c_);
  }

  double funding_at(std::size_t i, double x) {
    if (disjoint_) {
      if (group_of_[i] == kUngrouped) {
        return ungrouped_direct_ - c_[i] + x + root_total_ * root_total_;
      }
      const std::size_t g = group_of_[i];
      const double rest = std::max(0.0, group_total_[g] - c_[i]);
      const double k = std::max(0.0, root_total_ - std::sqrt(group_total_[g]));
      const double s = k + std::sqrt(rest + x);
      return ungrouped_direct_ + s * s;
    }
    const double saved = c_[i];
    c_[i] = x;
    const double f = general_funding(c_);
    c_[i] = saved;
    return f;
  }

  double derivative_at(std::size_t i, double x) {
    if (disjoint_) {
      if (group_of_[i] == kUngrouped) return 1.0;
      const std::size_t g = group_of_[i];
      const double rest = std::max(0.0, group_total_[g] - c_[i]);
      const double k = std::max(0.0, root_total_ - std::sqrt(group_total_[g]));
      const double base = rest + x;
      if (base <= 0.0) {
        return k > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
      }
      return 1.0 + k / std::sqrt(base);
    }
    return general_derivative(i, x);
  }

  std::size_t size() const { return groups_.donor_count; }
  const GroupAssignment& assignment() const { return groups_; }

 private:
  static constexpr std::size_t kUngrouped = static_cast<std::size_t>(-1);

  double general_funding(const std::vector<double>& c) const {
    double f = 0.0;
    for (double v : c) f += v;
    return f + coqf_subsidy(c, groups_);
  }

  /// Slope of the full overlapping-group subsidy in agent i's contribution:
  /// each ordered group pair whose product term sees c_i on one side
  /// contributes weight * (other side) / (2 * sqrt(product)).
  double general_derivative(std::size_t i, double x) {
    const double saved = c_[i];
    c_[i] = x;
    double slope = 1.0;
    const std::size_t n_groups = groups_.group_count();
    for (std::size_t g = 0; g < n_groups; ++g) {
      for (std::size_t h = 0; h < n_groups; ++h) {
        if (g == h) continue;
        const double own_w = exclusive_weight(i, g, h);
        if (own_w <= 0.0) continue;
        const double side_g = detail::exclusive_side_sum(c_, groups_, g, h);
        const double side_h = detail::exclusive_side_sum(c_, groups_, h, g);
        if (side_h <= 0.0) continue;
        if (side_g <= 0.0) {
          c_[i] = saved;
          return std::numeric_limits<double>::infinity();
        }
        slope += own_w * side_h / (2.0 * std::sqrt(side_g * side_h));
      }
    }
    c_[i] = saved;
    return slope;
  }

  /// Membership weight of donor i on the g side of the ordered pair (g, h),
  /// zero when i is not in g or sits in both groups.
  double exclusive_weight(std::size_t i, std::size_t g, std::size_t h) const {
    const auto& mg = groups_.members[g];
    const auto it = std::lower_bound(mg.begin(), mg.end(), i);
    if (it == mg.end() || *it != i) return 0.0;
    if (groups_.is_member(h, i)) return 0.0;
    return groups_.weights[g][static_cast<std::size_t>(it - mg.begin())];
  }

  GroupAssignment groups_;
  bool disjoint_ = false;
  std::vector<std::size_t> group_of_;
  std::vector<double> c_;
  std::vector<double> group_total_;
  double ungrouped_direct_ = 0.0;
  double root_total_ = 0.0;
};

namespace detail {

inline void require_values(std::span<const double> values) {
  for (double a : values) {
    if (!std::isfinite(a) || a < 0.0) {
      throw ValidationError("agent values must be finite and nonnegative");
    }
  }
}

/// Sign of agent i's marginal payoff A * F'(x) / (1 + F(x)) - 1 at x, wrapped
/// so that an infinite slope reads as a strictly positive marginal.
template <typename Model>
double marginal_payoff(Model& model, std::size_t i, double value, double x) {
  const double slope = model.derivative_at(i, x);
  if (std::isinf(slope)) {
    return value > 0.0 ? std::numeric_limits<double>::infinity() : -1.0;
  }
  return value * slope / (1.0 + model.funding_at(i, x)) - 1.0;
}

/// Payoff is concave in the own contribution for every model here, so the
/// best response is the unique sign change of the marginal (or a corner).
template <typename Model>
double best_response(Model& model, std::size_t i, double value, double cap,
                     const SolverOptions& opts) {
  if (marginal_payoff(model, i, value, opts.lower_probe) <= 0.0) return 0.0;
  if (marginal_payoff(model, i, value, cap) >= 0.0) return cap;
  double lo = opts.lower_probe;
  double hi = cap;
  while (hi - lo > opts.bracket_width) {
    const double mid = 0.5 * (lo + hi);
    if (marginal_payoff(model, i, value, mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Damped best-response iteration.  Starts from c_i = A_i (a strictly
/// positive point whenever anyone cares, which keeps the iteration away from
/// the everyone-gives-nothing fixed point that matching mechanisms also
/// admit) and stops once nobody can move by more than the tolerance.
///
/// Updates are applied one agent at a time, so each best response sees every
/// earlier move of the same sweep.  This matters: gifts of agents whose
/// matching is pooled are perfect substitutes, and if m of them move
/// simultaneously their shared total overshoots by a factor that grows with
/// m — for m >= 4 at damping 0.5 the profile orbits in a stable two-cycle
/// instead of settling.  Sequential updates relax the shared total
/// monotonically and converge for every group size.
template <typename Model>
EquilibriumResult solve_equilibrium(Model& model, std::span<const double> values,
                                    const SolverOptions& opts = {}) {
  opts.validate();
  detail::require_values(values);
  if (model.size() != values.size()) {
    throw ValidationError("model size does not match the number of agents");
  }
  const std::size_t n = values.size();
  double value_sum = 0.0;
  for (double a : values) value_sum += a;
  const double cap = opts.contribution_cap > 0.0
                         ? opts.contribution_cap
                         : std::max(10.0 * value_sum * value_sum, 1.0);

  EquilibriumResult result;
  result.contributions.assign(values.begin(), values.end());
  for (std::size_t iter = 1; iter <= opts.max_iterations; ++iter) {
    double residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      model.prepare(result.contributions);
      const double response = detail::best_response(model, i, values[i], cap, opts);
      residual = std::max(residual, std::abs(response - result.contributions[i]));
      result.contributions[i] = opts.damping * result.contributions[i] +
                                (1.0 - opts.damping) * response;
    }
    result.iterations = iter;
    result.residual = residual;
    if (residual < opts.tolerance) {
      result.converged = true;
      break;
    }
  }
  model.prepare(result.contributions);
  result.funding = model.funding();
  return result;
}

/// Without matching only the agent with the largest stake gives: funding
/// settles where that agent's marginal utility hits the price of money.
/// Ties go to the lowest index; any split among tied agents works too.
inline EquilibriumResult direct_equilibrium(std::span<const double> values) {
  detail::require_values(values);
  if (values.empty()) throw ValidationError("need at least one agent");
  std::size_t champion = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[champion]) champion = i;
  }
  EquilibriumResult result;
  result.contributions.assign(values.size(), 0.0);
  result.funding = std::max(0.0, values[champion] - 1.0);
  result.contributions[champion] = result.funding;
  result.converged = true;
  return result;
}

/// Pairwise matching has a closed-form equilibrium: total funding lands at
/// (sum of values) - 1, and each agent pays the square of their value share
/// times that funding.
inline EquilibriumResult qf_equilibrium_closed_form(std::span<const double> values) {
  detail::require_values(values);
  if (values.empty()) throw ValidationError("need at least one agent");
  double value_sum = 0.0;
  for (double a : values) value_sum += a;
  EquilibriumResult result;
  result.contributions.assign(values.size(), 0.0);
  result.converged = true;
  if (value_sum <= 1.0) return result;
  result.funding = value_sum - 1.0;
  const double root = std::sqrt(result.funding);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double share = root * values[i] / value_sum;
    result.contributions[i] = share * share;
  }
  return result;
}

inline EquilibriumResult qf_equilibrium_numeric(std::span<const double> values,
                                                const SolverOptions& opts = {}) {
  QfFunding model(values.size());
  return solve_equilibrium(model, values, opts);
}

inline EquilibriumResult coqf_equilibrium_numeric(std::span<const double> values,
                                                  const GroupAssignment& assignment,
                                                  const SolverOptions& opts = {}) {
  CoqfFunding model(assignment);
  return solve_equilibrium(model, values, opts);
}

/// Largest payoff improvement any single agent could grab by unilaterally
/// changing their contribution; about zero certifies a Nash equilibrium.
/// Checks the exact best response and a coarse grid (belt and braces).
template <typename Model>
double max_unilateral_gain(Model& model, std::span<const double> values,
                           std::span<const double> contributions,
                           const SolverOptions& opts = {}) {
  opts.validate();
  detail::require_values(values);
  if (model.size() != values.size() || contributions.size() != values.size()) {
    throw ValidationError("model, values, and contributions disagree on size");
  }
  double value_sum = 0.0;
  for (double a : values) value_sum += a;
  const double cap = opts.contribution_cap > 0.0
                         ? opts.contribution_cap
                         : std::max(10.0 * value_sum * value_sum, 1.0);
  model.prepare(contributions);
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto payoff = [&](double x) {
      return values[i] * std::log1p(model.funding_at(i, x)) - x;
    };
    const double now = payoff(contributions[i]);
    const double br = detail::best_response(model, i, values[i], cap, opts);
    double best = payoff(br) - now;
    constexpr int kGridPoints = 200;
    for (int k = 0; k <= kGridPoints; ++k) {
      const double x = 2.0 * cap * static_cast<double>(k) / kGridPoints;
      best = std::max(best, payoff(x) - now);
    }
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace coqf
