#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "coqf/errors.hpp"

namespace coqf {

enum class Mechanism { Direct, QF, CoQF, CoQFv1, Hybrid };

inline const char* to_string(Mechanism mechanism) {
  switch (mechanism) {
    case Mechanism::Direct: return "DIRECT";
    case Mechanism::QF: return "QF";
    case Mechanism::CoQF: return "CO-QF";
    case Mechanism::CoQFv1: return "CO-QF-V1";
    case Mechanism::Hybrid: return "HYBRID";
  }
  return "?";
}

inline std::optional<Mechanism> parse_mechanism(const std::string& text) {
  if (text == "direct") return Mechanism::Direct;
  if (text == "qf") return Mechanism::QF;
  if (text == "coqf") return Mechanism::CoQF;
  if (text == "coqf-v1") return Mechanism::CoQFv1;
  if (text == "hybrid") return Mechanism::Hybrid;
  return std::nullopt;
}

/// Donation amounts keyed by (donor, project).  Donors and projects are
/// interned in first-appearance order, which fixes every downstream index and
/// makes emitted tables deterministic.  Repeated (donor, project) entries
/// accumulate.
class DonationLedger {
 public:
  std::size_t intern_donor(const std::string& id) {
    auto [it, fresh] = donor_index_.try_emplace(id, donors_.size());
    if (fresh) {
      donors_.push_back(id);
      for (auto& column : amounts_) column.resize(donors_.size(), 0.0);
    }
    return it->second;
  }

  std::size_t intern_project(const std::string& id) {
    auto [it, fresh] = project_index_.try_emplace(id, projects_.size());
    if (fresh) {
      projects_.push_back(id);
      amounts_.emplace_back(donors_.size(), 0.0);
    }
    return it->second;
  }

  void add_donation(const std::string& donor, const std::string& project,
                    double amount) {
    if (!(amount >= 0.0) || !std::isfinite(amount)) {
      throw ValidationError("donation amount must be a finite nonnegative number");
    }
    if (donor.empty()) throw ValidationError("empty donor id");
    if (project.empty()) throw ValidationError("empty project id");
    const std::size_t d = intern_donor(donor);
    const std::size_t p = intern_project(project);
    amounts_[p][d] += amount;
  }

  std::size_t donor_count() const { return donors_.size(); }
  std::size_t project_count() const { return projects_.size(); }
  const std::vector<std::string>& donors() const { return donors_; }
  const std::vector<std::string>& projects() const { return projects_; }

  std::optional<std::size_t> donor_id(const std::string& donor) const {
    auto it = donor_index_.find(donor);
    if (it == donor_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> project_id(const std::string& project) const {
    auto it = project_index_.find(project);
    if (it == project_index_.end()) return std::nullopt;
    return it->second;
  }

  double amount(std::size_t donor, std::size_t project) const {
    return amounts_.at(project).at(donor);
  }

  /// Dense contribution column for one project, aligned with donor indices.
  const std::vector<double>& project_column(std::size_t project) const {
    return amounts_.at(project);
  }

  double project_total(std::size_t project) const {
    double total = 0.0;
    for (double a : amounts_.at(project)) total += a;
    return total;
  }

  double donor_total(std::size_t donor) const {
    double total = 0.0;
    for (const auto& column : amounts_) total += column.at(donor);
    return total;
  }

  /// Projects the donor gave a positive amount to, in ascending project index.
  std::vector<std::size_t> donor_support(std::size_t donor) const {
    std::vector<std::size_t> support;
    for (std::size_t p = 0; p < amounts_.size(); ++p) {
      if (amounts_[p].at(donor) > 0.0) support.push_back(p);
    }
    return support;
  }

 private:
  std::vector<std::string> donors_;
  std::vector<std::string> projects_;
  std::unordered_map<std::string, std::size_t> donor_index_;
  std::unordered_map<std::string, std::size_t> project_index_;
  std::vector<std::vector<double>> amounts_;  // [project][donor]
};

}  // namespace coqf
