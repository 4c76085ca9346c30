#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "coqf/errors.hpp"
#include "coqf/rng.hpp"

namespace coqf {

/// Synthetic-population recipe: agents split into equal groups, a prosocial
/// budget B spread over the other agents, a share z of that budget kept
/// inside the agent's own group, and per-group valuation means for the
/// truncated-normal draw of beta.
struct SimulationParams {
  std::size_t agent_count = 25;
  std::size_t group_count = 5;
  std::size_t group_size = 5;
  double budget = 1.0;                ///< B, each agent's off-diagonal mass
  double in_group_share = 4.0 / 24.0; ///< z; 4/24 spreads B uniformly here
  double sigma2 = 0.05;               ///< untruncated valuation variance
  std::vector<double> group_means = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t trials = 50;
  std::uint64_t seed = 1;

  void validate() const {
    if (agent_count == 0 || group_count == 0 || group_size == 0) {
      throw ValidationError("population sizes must be positive");
    }
    if (agent_count != group_count * group_size) {
      throw ValidationError("agent count must equal group count times group size");
    }
    if (group_means.size() != group_count) {
      throw ValidationError("need one valuation mean per group");
    }
    if (!(budget >= 0.0) || !std::isfinite(budget)) {
      throw ValidationError("prosocial budget must be finite and nonnegative");
    }
    if (!(in_group_share >= 0.0) || !(in_group_share <= 1.0)) {
      throw ValidationError("in-group share must lie in [0, 1]");
    }
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
      throw ValidationError("sigma2 must be finite and nonnegative");
    }
    if (trials == 0) throw ValidationError("trial count must be positive");
  }
};

/// Agent i belongs to group i / group_size: groups are contiguous index
/// blocks.
inline std::vector<std::size_t> contiguous_group_of(const SimulationParams& params) {
  std::vector<std::size_t> group_of(params.agent_count);
  for (std::size_t i = 0; i < params.agent_count; ++i) {
    group_of[i] = i / params.group_size;
  }
  return group_of;
}

/// Dense n-by-n sympathy matrix; alpha(i, j) is how much agent i weighs agent
/// j's utility alongside their own (alpha(i, i) = 1).
class SympathyMatrix {
 public:
  explicit SympathyMatrix(std::size_t n) : n_(n), a_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double alpha(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
  double& alpha(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }

 private:
  std::size_t n_;
  std::vector<double> a_;
};

/// Sympathy structure of the simulations: unit self-weight, z * B spread
/// evenly over the agent's own group, the rest spread evenly over everyone
/// else.  Every row's off-diagonal mass is exactly B, whatever z is.
inline SympathyMatrix build_sympathy_matrix(const SimulationParams& params,
                                            const std::vector<std::size_t>& group_of) {
  params.validate();
  if (group_of.size() != params.agent_count) {
    throw ValidationError("group map must cover every agent");
  }
  const std::size_t n = params.agent_count;
  SympathyMatrix alpha(n);
  const std::size_t in_peers = params.group_size - 1;
  const std::size_t out_peers = n - params.group_size;
  const double in_weight =
      in_peers > 0 ? params.in_group_share * params.budget / static_cast<double>(in_peers)
                   : 0.0;
  const double out_weight =
      out_peers > 0
          ? (1.0 - params.in_group_share) * params.budget / static_cast<double>(out_peers)
          : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        alpha.alpha(i, j) = 1.0;
      } else if (group_of[i] == group_of[j]) {
        alpha.alpha(i, j) = in_weight;
      } else {
        alpha.alpha(i, j) = out_weight;
      }
    }
  }
  return alpha;
}

/// Draws each agent's valuation level from a normal centered on their group's
/// mean, restricted to [0, 1] by rejection.
inline std::vector<double> sample_betas(const SimulationParams& params,
                                        const std::vector<std::size_t>& group_of,
                                        Rng& rng) {
  params.validate();
  if (group_of.size() != params.agent_count) {
    throw ValidationError("group map must cover every agent");
  }
  const double sigma = std::sqrt(params.sigma2);
  std::vector<double> betas(params.agent_count);
  for (std::size_t i = 0; i < params.agent_count; ++i) {
    betas[i] = truncated_normal(rng, params.group_means[group_of[i]], sigma, 0.0, 1.0);
  }
  return betas;
}

/// Personal utility from a funded good: beta-scaled log of (funding + 1).
inline double personal_utility(double beta, double funding) {
  if (!(funding >= 0.0)) throw ValidationError("funding must be nonnegative");
  return beta * std::log1p(funding);
}

/// How much agent i likes an outcome once sympathy is accounted for; the sum
/// of row-weighted personal utilities.
inline double prosocial_utility(const SympathyMatrix& alpha,
                                std::span<const double> betas, std::size_t i,
                                double funding) {
  if (alpha.size() != betas.size()) {
    throw ValidationError("sympathy matrix and valuations disagree on size");
  }
  if (i >= betas.size()) throw ValidationError("agent index out of range");
  double utility = 0.0;
  for (std::size_t j = 0; j < betas.size(); ++j) {
    utility += alpha.alpha(i, j) * personal_utility(betas[j], funding);
  }
  return utility;
}

/// Per-agent decision stakes A_i = sum_j alpha(i, j) * beta_j.  With log
/// utilities an agent's prosocial utility is A_i * log1p(F), so these load
/// factors are all the equilibrium machinery needs.
inline std::vector<double> sympathy_weighted_values(const SympathyMatrix& alpha,
                                                    std::span<const double> betas) {
  if (alpha.size() != betas.size()) {
    throw ValidationError("sympathy matrix and valuations disagree on size");
  }
  std::vector<double> values(betas.size(), 0.0);
  for (std::size_t i = 0; i < betas.size(); ++i) {
    double a = 0.0;
    for (std::size_t j = 0; j < betas.size(); ++j) {
      a += alpha.alpha(i, j) * betas[j];
    }
    values[i] = a;
  }
  return values;
}

/// Utilitarian social welfare of a funding level, counting personal utilities
/// only (sympathy would double-count): (sum beta) * log1p(F) - F.
inline double usw(double funding, std::span<const double> betas) {
  if (!(funding >= 0.0)) throw ValidationError("funding must be nonnegative");
  double beta_sum = 0.0;
  for (double b : betas) beta_sum += b;
  return beta_sum * std::log1p(funding) - funding;
}

/// Funding level a social planner would pick: the maximizer of usw, which is
/// sum(beta) - 1 when that is positive and 0 otherwise.
inline double optimal_funding(std::span<const double> betas) {
  double beta_sum = 0.0;
  for (double b : betas) beta_sum += b;
  return std::max(0.0, beta_sum - 1.0);
}

/// Welfare achieved relative to the planner's optimum.  Equals 1 exactly at
/// the optimum and can go negative for gross overfunding.  A population whose
/// optimum is zero funding has nothing to compare against.
inline double approximation_ratio(double mechanism_funding,
                                  std::span<const double> betas) {
  const double best = optimal_funding(betas);
  if (best <= 0.0) {
    throw DegeneratePopulationError(
        "optimal funding is zero; approximation ratio undefined");
  }
  return usw(mechanism_funding, betas) / usw(best, betas);
}

}  // namespace coqf
