#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "coqf/errors.hpp"
#include "coqf/experiments.hpp"
#include "coqf/grouping.hpp"
#include "coqf/ledger.hpp"
#include "coqf/money.hpp"
#include "coqf/round.hpp"

namespace coqf {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return buffer.str();
}

/// Writes through a sibling temp file and renames it into place, so readers
/// never observe a half-written file.
inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw IoError("cannot replace '" + path.string() + "': " + ec.message());
  }
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      fields.push_back(trim(line.substr(start)));
      return fields;
    }
    fields.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline double parse_number(const std::string& field, std::size_t line_no,
                           const char* what) {
  if (field.empty()) {
    throw ParseError(std::string(what) + " is empty", line_no);
  }
  const char* begin = field.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end != begin + field.size()) {
    throw ParseError("malformed " + std::string(what) + " '" + field + "'", line_no);
  }
  if (!std::isfinite(value)) {
    throw ParseError(std::string(what) + " is out of range", line_no);
  }
  return value;
}

/// getline plus housekeeping: strips a UTF-8 byte-order mark off the first
/// line and a trailing carriage return off every line.
inline bool next_line(std::istream& in, std::string& line, std::size_t& line_no) {
  if (!std::getline(in, line)) return false;
  ++line_no;
  if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

inline std::optional<Mechanism> mechanism_from_label(const std::string& label) {
  for (Mechanism m : {Mechanism::Direct, Mechanism::QF, Mechanism::CoQF,
                      Mechanism::CoQFv1, Mechanism::Hybrid}) {
    if (label == to_string(m)) return m;
  }
  return std::nullopt;
}

inline std::string formatf(const char* fmt, double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, fmt, value);
  return buffer;
}

}  // namespace detail

/// Reads a donation table: a `donor,project,amount` header then one donation
/// per line.  Blank lines and lines starting with '#' are skipped; repeated
/// (donor, project) pairs accumulate.  Field values must not contain commas.
inline DonationLedger parse_donations(std::istream& in) {
  DonationLedger ledger;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (detail::next_line(in, line, line_no)) {
    const std::string text = detail::trim(line);
    if (text.empty() || text[0] == '#') continue;
    const std::vector<std::string> fields = detail::split_fields(text, ',');
    if (!header_seen) {
      if (fields.size() != 3 || fields[0] != "donor" || fields[1] != "project" ||
          fields[2] != "amount") {
        throw ParseError("expected header 'donor,project,amount'", line_no);
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 3) {
      throw ParseError("expected 3 fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    if (fields[0].empty()) throw ParseError("donor is empty", line_no);
    if (fields[1].empty()) throw ParseError("project is empty", line_no);
    const double amount = detail::parse_number(fields[2], line_no, "amount");
    if (amount < 0.0) {
      throw ParseError("amount must be nonnegative", line_no);
    }
    ledger.add_donation(fields[0], fields[1], amount);
  }
  if (!header_seen) {
    throw ParseError("missing header 'donor,project,amount'", 0);
  }
  return ledger;
}

inline DonationLedger parse_donations(const std::string& text) {
  std::istringstream in(text);
  return parse_donations(in);
}

/// Emits a finished round: summary lines (prefixed '#'), then the per-project
/// table.  Money columns carry 2 decimals, the raw subsidy 6 significant
/// digits.  Everything is deterministic, so identical rounds are
/// byte-identical.
inline std::string render_allocation(const AllocationResult& result) {
  std::string out;
  out += "# mechanism: ";
  out += to_string(result.mechanism);
  out += "\n# matching-pool: " + format_amount(result.matching_pool) + "\n";
  if (result.cap_fraction) {
    out += "# cap-fraction: " + detail::formatf("%g", *result.cap_fraction) + "\n";
  }
  out += "# unallocated-remainder: " + format_amount(result.unallocated_remainder) +
         "\n";
  if (result.zero_raw_subsidy) {
    out += "# note: all raw subsidies are zero; matching pool left unallocated\n";
  }
  for (const std::string& warning : result.warnings) {
    out += "# note: " + warning + "\n";
  }
  out += "project,direct_total,raw_subsidy,normalized_subsidy,capped_subsidy,payout\n";
  for (const ProjectAllocation& row : result.projects) {
    out += row.project;
    out += ',' + format_amount(row.direct_total);
    out += ',' + format_ratio(row.raw_subsidy);
    out += ',' + format_amount(row.normalized_subsidy);
    out += ',' + format_amount(row.capped_subsidy);
    out += ',' + format_amount(row.payout);
    out += '\n';
  }
  return out;
}

struct ParsedAllocationRow {
  std::string project;
  double direct_total = 0.0;
  double raw_subsidy = 0.0;
  double normalized_subsidy = 0.0;
  double capped_subsidy = 0.0;
  double payout = 0.0;
};

struct ParsedAllocation {
  Mechanism mechanism = Mechanism::QF;
  double matching_pool = 0.0;
  std::optional<double> cap_fraction;
  double unallocated_remainder = 0.0;
  bool zero_raw_subsidy = false;
  std::vector<std::string> notes;
  std::vector<ParsedAllocationRow> rows;
};

/// Reads an emitted round back.  Values match the originals to formatting
/// precision: money to the cent, the raw subsidy to 6 significant digits.
inline ParsedAllocation parse_allocation(std::istream& in) {
  ParsedAllocation out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  bool mechanism_seen = false;
  while (detail::next_line(in, line, line_no)) {
    const std::string text = detail::trim(line);
    if (text.empty()) continue;
    if (text[0] == '#') {
      const std::string body = detail::trim(text.substr(1));
      const auto colon = body.find(": ");
      if (colon == std::string::npos) {
        throw ParseError("summary line has no 'key: value'", line_no);
      }
      const std::string key = body.substr(0, colon);
      const std::string value = body.substr(colon + 2);
      if (key == "mechanism") {
        const auto mechanism = detail::mechanism_from_label(value);
        if (!mechanism) throw ParseError("unknown mechanism '" + value + "'", line_no);
        out.mechanism = *mechanism;
        mechanism_seen = true;
      } else if (key == "matching-pool") {
        out.matching_pool = detail::parse_number(value, line_no, "matching pool");
      } else if (key == "cap-fraction") {
        out.cap_fraction = detail::parse_number(value, line_no, "cap fraction");
      } else if (key == "unallocated-remainder") {
        out.unallocated_remainder = detail::parse_number(value, line_no, "remainder");
      } else if (key == "note") {
        if (value == "all raw subsidies are zero; matching pool left unallocated") {
          out.zero_raw_subsidy = true;
        }
        out.notes.push_back(value);
      } else {
        throw ParseError("unknown summary key '" + key + "'", line_no);
      }
      continue;
    }
    if (!header_seen) {
      if (text !=
          "project,direct_total,raw_subsidy,normalized_subsidy,capped_subsidy,"
          "payout") {
        throw ParseError("unexpected table header", line_no);
      }
      header_seen = true;
      continue;
    }
    const std::vector<std::string> fields = detail::split_fields(text, ',');
    if (fields.size() != 6) {
      throw ParseError("expected 6 fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    ParsedAllocationRow row;
    row.project = fields[0];
    if (row.project.empty()) throw ParseError("project is empty", line_no);
    row.direct_total = detail::parse_number(fields[1], line_no, "direct total");
    row.raw_subsidy = detail::parse_number(fields[2], line_no, "raw subsidy");
    row.normalized_subsidy =
        detail::parse_number(fields[3], line_no, "normalized subsidy");
    row.capped_subsidy = detail::parse_number(fields[4], line_no, "capped subsidy");
    row.payout = detail::parse_number(fields[5], line_no, "payout");
    out.rows.push_back(std::move(row));
  }
  if (!mechanism_seen) throw ParseError("missing '# mechanism:' summary line", 0);
  if (!header_seen) throw ParseError("missing table header", 0);
  return out;
}

inline ParsedAllocation parse_allocation(const std::string& text) {
  std::istringstream in(text);
  return parse_allocation(in);
}

/// Sweep results as one long table, mechanism fastest within each grid cell.
inline std::string render_sweep(const SweepResult& result, const SweepSpec& spec) {
  std::string out;
  out += "# agents: " + std::to_string(spec.agent_count) + "\n";
  out += "# group-count: " + std::to_string(spec.group_count) + "\n";
  out += "# trials: " + std::to_string(spec.trials) + "\n";
  out += "# seed: " + std::to_string(spec.seed) + "\n";
  out += "# degenerate-resamples: " + std::to_string(result.degenerate_resamples) +
         "\n";
  for (const std::string& warning : result.warnings) {
    out += "# warning: " + warning + "\n";
  }
  out += "mechanism,budget,z,sigma2,mean_ratio,se_ratio,mean_funding,trials,"
         "unconverged\n";
  for (const CellStats& cell : result.cells) {
    out += to_string(cell.mechanism);
    out += ',' + detail::formatf("%g", cell.budget);
    out += ',' + detail::formatf("%g", cell.z);
    out += ',' + detail::formatf("%g", cell.sigma2);
    out += ',' + format_ratio(cell.mean_ratio);
    out += ',' + format_ratio(cell.se_ratio);
    out += ',' + format_ratio(cell.mean_funding);
    out += ',' + std::to_string(cell.trials);
    out += ',' + std::to_string(cell.failed);
    out += '\n';
  }
  return out;
}

/// Space-delimited plot data for one variance slice, ready for gnuplot.
inline std::string render_plot_data(const SweepResult& result, double sigma2) {
  std::string out;
  out += "# sigma2: " + detail::formatf("%g", sigma2) + "\n";
  out += "mechanism budget z sigma2 mean_ratio stderr\n";
  for (const CellStats& cell : result.cells) {
    if (cell.sigma2 != sigma2) continue;
    out += to_string(cell.mechanism);
    out += ' ' + detail::formatf("%g", cell.budget);
    out += ' ' + detail::formatf("%g", cell.z);
    out += ' ' + detail::formatf("%g", cell.sigma2);
    out += ' ' + format_ratio(cell.mean_ratio);
    out += ' ' + format_ratio(cell.se_ratio);
    out += '\n';
  }
  return out;
}

inline std::string plot_file_name(double sigma2) {
  return "ratio-sigma2-" + detail::formatf("%g", sigma2) + ".dat";
}

inline std::string render_growth_probe(const GrowthProbeResult& probe) {
  std::string out;
  out += "# crowd-size: " + std::to_string(probe.crowd_size) + "\n";
  out += "# crowd-ratio: " + format_ratio(probe.crowd_ratio) + "\n";
  out += "# attenuated-ratio: " + format_ratio(probe.attenuated_ratio) + "\n";
  out += "# individual-ratio: " + format_ratio(probe.individual_ratio) + "\n";
  out += "gift,crowd_subsidy,attenuated_subsidy,individual_match\n";
  for (const GrowthRow& row : probe.rows) {
    out += format_ratio(row.gift);
    out += ',' + format_ratio(row.crowd_subsidy);
    out += ',' + format_ratio(row.attenuated_subsidy);
    out += ',' + format_ratio(row.individual_match);
    out += '\n';
  }
  return out;
}

inline std::string render_sybil_probe(const SybilProbeResult& probe) {
  std::string out;
  out += "# colluders: " + std::to_string(probe.colluders) + "\n";
  out += "# decoy-projects: " + std::to_string(probe.decoy_projects) + "\n";
  out += "metric,value\n";
  const auto row = [&out](const char* metric, double value) {
    out += metric;
    out += ',' + format_ratio(value) + "\n";
  };
  row("honest_qf", probe.honest_qf);
  row("attacked_qf", probe.attacked_qf);
  row("attacked_signature_coqf", probe.attacked_signature_coqf);
  row("attacked_projects_coqf", probe.attacked_projects_coqf);
  row("colluder_qf", probe.colluder_qf);
  row("colluder_signature_coqf", probe.colluder_signature_coqf);
  row("naive_signature_coqf", probe.naive_signature_coqf);
  row("evasion_gap", probe.evasion_gap);
  return out;
}

inline std::string render_skew_demo(const SkewDemoResult& demo) {
  std::string out;
  out += "community_size,niche_subsidy,broad_subsidy,niche_share,broad_share\n";
  for (const SkewPoint& point : demo.points) {
    out += std::to_string(point.community_size);
    out += ',' + format_ratio(point.niche_subsidy);
    out += ',' + format_ratio(point.broad_subsidy);
    out += ',' + format_ratio(point.niche_share);
    out += ',' + format_ratio(point.broad_share);
    out += '\n';
  }
  return out;
}

}  // namespace coqf
