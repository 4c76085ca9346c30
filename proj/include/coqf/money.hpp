#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "coqf/errors.hpp"

namespace coqf {

inline std::int64_t to_cents(double amount) { return std::llround(amount * 100.0); }

inline double from_cents(std::int64_t cents) {
  return static_cast<double>(cents) / 100.0;
}

struct CentRounding {
  std::vector<std::int64_t> cents;
  std::int64_t unplaced = 0;  ///< repair cents that no entry could absorb
};

/// Rounds nonnegative amounts to whole cents while preserving the rounded
/// grand total: floor each entry, then hand out the missing cents in order of
/// largest fractional remainder (ties go to the lower index).  per_entry_limit
/// keeps a repair cent from pushing an entry past a ceiling (a matching cap);
/// cents that cannot be placed anywhere are reported in unplaced.
inline CentRounding round_preserving_total(
    std::span<const double> amounts,
    std::int64_t per_entry_limit = std::numeric_limits<std::int64_t>::max()) {
  CentRounding out;
  out.cents.resize(amounts.size());
  std::vector<double> fraction(amounts.size());
  double exact_total = 0.0;
  std::int64_t floor_total = 0;
  for (std::size_t i = 0; i < amounts.size(); ++i) {
    if (!(amounts[i] >= 0.0) || !std::isfinite(amounts[i])) {
      throw ValidationError("rounding repair requires finite nonnegative amounts");
    }
    exact_total += amounts[i];
    const double scaled = amounts[i] * 100.0;
    // The epsilon keeps values sitting a hair under a cent boundary (float
    // noise from earlier arithmetic) from flooring one cent low.
    const double base = std::floor(scaled + 1e-9);
    out.cents[i] = static_cast<std::int64_t>(base);
    fraction[i] = scaled - base;
    floor_total += out.cents[i];
  }
  const std::int64_t target = std::llround(exact_total * 100.0);
  std::int64_t deficit = target - floor_total;

  std::vector<std::size_t> order(amounts.size());
  std::iota(order.begin(), order.end(), 0);
  if (deficit > 0) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return fraction[a] > fraction[b];
    });
    for (std::size_t k = 0; k < order.size() && deficit > 0; ++k) {
      const std::size_t i = order[k];
      if (out.cents[i] + 1 > per_entry_limit) continue;
      ++out.cents[i];
      --deficit;
    }
    out.unplaced = deficit;
  } else if (deficit < 0) {
    // Floors overshot the target; only reachable through float noise around
    // exact cent boundaries.  Trim from the smallest remainders.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return fraction[a] < fraction[b];
    });
    for (std::size_t k = 0; k < order.size() && deficit < 0; ++k) {
      const std::size_t i = order[k];
      if (out.cents[i] == 0) continue;
      --out.cents[i];
      ++deficit;
    }
  }
  return out;
}

/// Fixed two-decimal rendering used for every money column.
inline std::string format_amount(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  if (std::strcmp(buf, "-0.00") == 0) return "0.00";
  return buf;
}

/// Six significant digits, the precision used for dimensionless ratios.
inline std::string format_ratio(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

}  // namespace coqf
