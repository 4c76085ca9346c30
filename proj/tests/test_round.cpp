#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <vector>

#include "coqf/errors.hpp"
#include "coqf/grouping.hpp"
#include "coqf/ledger.hpp"
#include "coqf/money.hpp"
#include "coqf/rng.hpp"
#include "coqf/round.hpp"

using namespace coqf;

TEST_CASE("normalization scales raw subsidies onto the pool", "[round]") {
  const NormalizationResult even =
      normalize_to_pool(std::vector<double>{2.0, 2.0}, 100.0);
  CHECK(even.amounts == std::vector<double>{50.0, 50.0});
  CHECK_FALSE(even.zero_raw);

  const NormalizationResult skewed =
      normalize_to_pool(std::vector<double>{1.0, 3.0}, 100.0);
  CHECK_THAT(skewed.amounts[0], Catch::Matchers::WithinAbs(25.0, 1e-9));
  CHECK_THAT(skewed.amounts[1], Catch::Matchers::WithinAbs(75.0, 1e-9));

  const NormalizationResult zero =
      normalize_to_pool(std::vector<double>{0.0, 0.0}, 100.0);
  CHECK(zero.amounts == std::vector<double>{0.0, 0.0});
  CHECK(zero.zero_raw);
}

TEST_CASE("cap redistribution water-fills and strands the residue", "[round]") {
  // One dominant project: its excess flows to the others until they also hit
  // the cap, and the rest of the pool cannot be placed.
  const CapResult capped =
      apply_matching_cap(std::vector<double>{80.0, 10.0, 10.0}, 100.0, 0.2);
  CHECK_THAT(capped.amounts[0], Catch::Matchers::WithinAbs(20.0, 1e-9));
  CHECK_THAT(capped.amounts[1], Catch::Matchers::WithinAbs(20.0, 1e-9));
  CHECK_THAT(capped.amounts[2], Catch::Matchers::WithinAbs(20.0, 1e-9));
  CHECK_THAT(capped.remainder, Catch::Matchers::WithinAbs(40.0, 1e-9));
}

TEST_CASE("cap leaves already-compliant rounds alone", "[round]") {
  const CapResult untouched =
      apply_matching_cap(std::vector<double>{20.0, 40.0, 40.0}, 100.0, 0.5);
  CHECK(untouched.amounts == std::vector<double>{20.0, 40.0, 40.0});
  CHECK(untouched.remainder == 0.0);
}

TEST_CASE("single capped project has nowhere to redistribute", "[round]") {
  const CapResult alone =
      apply_matching_cap(std::vector<double>{100.0}, 100.0, 0.3);
  CHECK_THAT(alone.amounts[0], Catch::Matchers::WithinAbs(30.0, 1e-9));
  CHECK_THAT(alone.remainder, Catch::Matchers::WithinAbs(70.0, 1e-9));
}

TEST_CASE("cap conserves the pool on random rounds", "[round]") {
  Rng rng(60221023);
  for (int round = 0; round < 300; ++round) {
    const std::size_t projects = 1 + rng.next_u64() % 8;
    std::vector<double> raw(projects);
    for (double& r : raw) r = rng.uniform01() * 10.0;
    const double pool = 1.0 + rng.uniform01() * 500.0;
    const NormalizationResult normalized = normalize_to_pool(raw, pool);
    if (normalized.zero_raw) continue;
    const double cap_fraction = 0.05 + 0.95 * rng.uniform01();
    const CapResult capped =
        apply_matching_cap(normalized.amounts, pool, cap_fraction);
    double placed = 0.0;
    for (double a : capped.amounts) {
      placed += a;
      CHECK(a <= cap_fraction * pool + 1e-9 * std::max(pool, 1.0));
    }
    CHECK_THAT(placed + capped.remainder, Catch::Matchers::WithinRel(pool, 1e-9));
  }
}

namespace {

DonationLedger two_project_ledger() {
  // park gets gifts [1, 1] (match 2), library [1, 1, 1] (match 6); the raw
  // subsidies [2, 6] make every normalization easy to eyeball.
  DonationLedger ledger;
  ledger.add_donation("ann", "park", 1.0);
  ledger.add_donation("bob", "park", 1.0);
  ledger.add_donation("ann", "library", 1.0);
  ledger.add_donation("bob", "library", 1.0);
  ledger.add_donation("cam", "library", 1.0);
  return ledger;
}

}  // namespace

TEST_CASE("a full round composes subsidy, normalization, and payouts",
          "[round]") {
  // park: [1,1] matches 2; library: [1,1,1] matches 6; pool 80 -> [20, 60].
  const DonationLedger ledger = two_project_ledger();
  RoundConfig config;
  config.mechanism = Mechanism::QF;
  config.matching_pool = 80.0;

  const AllocationResult result = allocate_round(ledger, config);
  REQUIRE(result.projects.size() == 2);
  CHECK(result.projects[0].project == "park");
  CHECK_THAT(result.projects[0].raw_subsidy,
             Catch::Matchers::WithinAbs(2.0, 1e-12));
  CHECK_THAT(result.projects[1].raw_subsidy,
             Catch::Matchers::WithinAbs(6.0, 1e-12));
  CHECK(result.projects[0].normalized_subsidy == 20.0);
  CHECK(result.projects[1].normalized_subsidy == 60.0);
  CHECK(result.projects[0].payout == 22.0);   // 2 direct + 20 match
  CHECK(result.projects[1].payout == 63.0);   // 3 direct + 60 match
  CHECK(result.unallocated_remainder == 0.0);
  CHECK_FALSE(result.zero_raw_subsidy);
}

TEST_CASE("direct rounds pay only the gifts and keep the pool", "[round]") {
  const DonationLedger ledger = two_project_ledger();
  RoundConfig config;
  config.mechanism = Mechanism::Direct;
  config.matching_pool = 100.0;

  const AllocationResult result = allocate_round(ledger, config);
  CHECK(result.zero_raw_subsidy);
  CHECK(result.unallocated_remainder == 100.0);
  CHECK(result.projects[0].payout == result.projects[0].direct_total);
  CHECK(result.projects[1].payout == result.projects[1].direct_total);
}

TEST_CASE("singleton grouping makes the group mechanism match pairwise",
          "[round]") {
  const DonationLedger ledger = two_project_ledger();
  const GroupAssignment singles = singleton_groups(ledger);

  RoundConfig qf;
  qf.mechanism = Mechanism::QF;
  qf.matching_pool = 80.0;
  RoundConfig coqf;
  coqf.mechanism = Mechanism::CoQF;
  coqf.matching_pool = 80.0;

  const AllocationResult a = allocate_round(ledger, qf);
  const AllocationResult b = allocate_round(ledger, coqf, &singles);
  REQUIRE(a.projects.size() == b.projects.size());
  for (std::size_t p = 0; p < a.projects.size(); ++p) {
    CHECK(a.projects[p].project == b.projects[p].project);
    CHECK_THAT(b.projects[p].raw_subsidy,
               Catch::Matchers::WithinRel(a.projects[p].raw_subsidy, 1e-9));
    CHECK(a.projects[p].normalized_subsidy == b.projects[p].normalized_subsidy);
    CHECK(a.projects[p].payout == b.projects[p].payout);
  }
}

TEST_CASE("hybrid rounds blend raw subsidies before normalization", "[round]") {
  const DonationLedger ledger = two_project_ledger();
  const GroupAssignment one_group = assignment_from_partition(
      std::vector<std::size_t>{0, 0, 0}, 1);

  RoundConfig config;
  config.mechanism = Mechanism::Hybrid;
  config.matching_pool = 80.0;
  config.hybrid_weight = 0.25;

  // Shared group: group-pair subsidies are all zero, so the blend is just
  // 0.75 of the pairwise match: [1.5, 4.5].
  const AllocationResult result = allocate_round(ledger, config, &one_group);
  CHECK_THAT(result.projects[0].raw_subsidy,
             Catch::Matchers::WithinAbs(1.5, 1e-12));
  CHECK_THAT(result.projects[1].raw_subsidy,
             Catch::Matchers::WithinAbs(4.5, 1e-12));
  // Normalization washes out the blend's overall scale.
  CHECK(result.projects[0].normalized_subsidy == 20.0);
  CHECK(result.projects[1].normalized_subsidy == 60.0);
}

TEST_CASE("round config validation", "[round]") {
  const DonationLedger ledger = two_project_ledger();

  RoundConfig bad_pool;
  bad_pool.matching_pool = -1.0;
  CHECK_THROWS_AS(allocate_round(ledger, bad_pool), ValidationError);

  RoundConfig bad_cap;
  bad_cap.matching_pool = 10.0;
  bad_cap.cap_fraction = 1.5;
  CHECK_THROWS_AS(allocate_round(ledger, bad_cap), ValidationError);

  RoundConfig missing_weight;
  missing_weight.mechanism = Mechanism::Hybrid;
  missing_weight.matching_pool = 10.0;
  CHECK_THROWS_AS(allocate_round(ledger, missing_weight), ValidationError);

  RoundConfig odd_weight;
  odd_weight.mechanism = Mechanism::Hybrid;
  odd_weight.matching_pool = 10.0;
  odd_weight.hybrid_weight = 0.3;
  CHECK_THROWS_AS(allocate_round(ledger, odd_weight), ValidationError);

  RoundConfig stray_weight;
  stray_weight.mechanism = Mechanism::QF;
  stray_weight.matching_pool = 10.0;
  stray_weight.hybrid_weight = 0.5;
  CHECK_THROWS_AS(allocate_round(ledger, stray_weight), ValidationError);

  RoundConfig needs_groups;
  needs_groups.mechanism = Mechanism::CoQF;
  needs_groups.matching_pool = 10.0;
  CHECK_THROWS_AS(allocate_round(ledger, needs_groups), ValidationError);
}

TEST_CASE("payout rounding conserves the capped total in cents", "[round]") {
  Rng rng(17);
  for (int round = 0; round < 200; ++round) {
    DonationLedger ledger;
    const std::size_t donors = 2 + rng.next_u64() % 6;
    const std::size_t projects = 1 + rng.next_u64() % 5;
    for (std::size_t d = 0; d < donors; ++d) {
      for (std::size_t p = 0; p < projects; ++p) {
        if (rng.uniform01() < 0.6) {
          ledger.add_donation("d" + std::to_string(d), "p" + std::to_string(p),
                              rng.uniform01() * 40.0);
        }
      }
    }
    if (ledger.project_count() == 0) continue;

    RoundConfig config;
    config.mechanism = Mechanism::QF;
    config.matching_pool = from_cents(
        static_cast<std::int64_t>(rng.next_u64() % 100000));
    if (rng.uniform01() < 0.5) {
      config.cap_fraction = 0.1 + 0.9 * rng.uniform01();
    }

    const AllocationResult result = allocate_round(ledger, config);
    std::int64_t placed = 0;
    for (const ProjectAllocation& row : result.projects) {
      placed += to_cents(row.capped_subsidy);
      CHECK(to_cents(row.payout) ==
            to_cents(row.direct_total) + to_cents(row.capped_subsidy));
      if (config.cap_fraction) {
        CHECK(to_cents(row.capped_subsidy) <=
              static_cast<std::int64_t>(std::floor(
                  *config.cap_fraction * config.matching_pool * 100.0 + 1e-9)));
      }
    }
    CHECK(placed + to_cents(result.unallocated_remainder) ==
          to_cents(config.matching_pool));
  }
}
