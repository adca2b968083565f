#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "csl/core.hpp"

using namespace csl;

TEST_CASE("make_params validates and carries the per-cell count") {
  const ModelParams p = make_params(1e-16, 1e-15, 3e25);
  CHECK(per_cell_count(p) == doctest::Approx(3e10).epsilon(1e-12));

  const ModelParams u = make_params(1.0, 1.0, 1.0);
  CHECK(u.lambda == 1.0);
  CHECK(per_cell_count(u) == 1.0);

  CHECK_THROWS_WITH_AS(make_params(-1.0, 1.0, 1.0), "lambda must be positive", ValidationError);
  CHECK_THROWS_AS(make_params(1.0, 0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(make_params(1.0, 1.0, -2.0), ValidationError);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(make_params(inf, 1.0, 1.0), ValidationError);
}

TEST_CASE("two-branch delta scenario construction") {
  const Scenario cat = two_branch_delta_scenario(unit_params(), 30'000'000'000ULL, 2.0 / 3.0);
  REQUIRE(cat.initial.branches.size() == 2);
  CHECK(cat.initial.cell_count == 1);
  CHECK(cat.initial.branches[0].occupation.counts[0] == 30'000'000'000ULL);
  CHECK(cat.initial.branches[1].occupation.counts[0] == 0);
  CHECK(squared_magnitude(cat.initial.branches[0]) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(squared_magnitude(cat.initial.branches[1]) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(cat.initial.branches[0].phase == 0.0);
  CHECK(validate(cat).empty());

  const Scenario sym = two_branch_delta_scenario(unit_params(), 0, 0.5);
  CHECK(sym.initial.branches[0].occupation.counts == sym.initial.branches[1].occupation.counts);

  const Scenario s = two_branch_delta_scenario(unit_params(), 4, 0.7);
  CHECK(squared_magnitude(s.initial.branches[0]) == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(squared_magnitude(s.initial.branches[1]) == doctest::Approx(0.3).epsilon(1e-14));

  CHECK_THROWS_AS(two_branch_delta_scenario(unit_params(), 1, 0.0), ValidationError);
  CHECK_THROWS_AS(two_branch_delta_scenario(unit_params(), 1, 1.0), ValidationError);
  CHECK_THROWS_AS(two_branch_delta_scenario(unit_params(), 1, 1.5), ValidationError);
}

TEST_CASE("pointer scenario fills disjoint cell blocks") {
  const Scenario p = pointer_scenario(paper_params(), 1, 0.5);
  REQUIRE(p.initial.cell_count == 2);
  CHECK(p.initial.branches[0].occupation.counts[0] == 30'000'000'000ULL);
  CHECK(p.initial.branches[0].occupation.counts[1] == 0);
  CHECK(p.initial.branches[1].occupation.counts[0] == 0);
  CHECK(p.initial.branches[1].occupation.counts[1] == 30'000'000'000ULL);

  const Scenario q = pointer_scenario(make_params(1.0, 1.0, 5.0), 3, 0.5);
  REQUIRE(q.initial.cell_count == 6);
  const std::vector<std::uint64_t> want1{5, 5, 5, 0, 0, 0};
  const std::vector<std::uint64_t> want2{0, 0, 0, 5, 5, 5};
  CHECK(q.initial.branches[0].occupation.counts == want1);
  CHECK(q.initial.branches[1].occupation.counts == want2);

  CHECK_THROWS_WITH_AS(pointer_scenario(paper_params(), 1'000'000'000'000ULL, 0.5),
                       "cell count exceeds cap", ValidationError);
  CHECK_NOTHROW(pointer_scenario(paper_params(), 400'000, 0.5));
  CHECK_THROWS_AS(pointer_scenario(paper_params(), 600'000, 0.5), ValidationError);
  // Raising the cap admits more cells.
  CHECK_NOTHROW(pointer_scenario(make_params(1, 1, 1), 600'000, 0.5, 2'000'000));
}

TEST_CASE("validate reports every violation, not just the first") {
  Scenario sc = two_branch_delta_scenario(unit_params(), 4, 0.5);
  CHECK(validate(sc).empty());

  sc.initial.branches[0].occupation.counts.push_back(7);  // length 2 vs cell_count 1
  sc.initial.branches[1].log_magnitude = 0.5 * std::log(0.3);  // norm 0.8
  const auto violations = validate(sc);
  REQUIRE(violations.size() == 2);
  CHECK(violations[0].find("occupation length mismatch") != std::string::npos);
  CHECK(violations[1].find("initial norm != 1") != std::string::npos);
}

TEST_CASE("construction normalization holds for arbitrary amplitudes") {
  for (double a1sq : {1e-9, 0.1, 0.25, 0.5, 2.0 / 3.0, 0.9, 1.0 - 1e-9}) {
    const Scenario sc = two_branch_delta_scenario(unit_params(), 3, a1sq);
    double norm = 0.0;
    for (const Branch& b : sc.initial.branches) norm += squared_magnitude(b);
    CHECK(std::abs(norm - 1.0) <= 1e-12);
  }
  const Scenario m = multi_branch_scenario(unit_params(), {0, 4, 8}, {0.5, 0.3, 0.2});
  double norm = 0.0;
  for (const Branch& b : m.initial.branches) norm += squared_magnitude(b);
  CHECK(std::abs(norm - 1.0) <= 1e-12);
}

TEST_CASE("builders are deterministic byte-for-byte") {
  const Scenario a = two_branch_delta_scenario(paper_params(), 42, 0.3);
  const Scenario b = two_branch_delta_scenario(paper_params(), 42, 0.3);
  CHECK(to_json(a).dump() == to_json(b).dump());

  const Scenario c = pointer_scenario(make_params(2.0, 0.5, 6.0), 4, 0.25);
  const Scenario d = pointer_scenario(make_params(2.0, 0.5, 6.0), 4, 0.25);
  CHECK(to_json(c).dump() == to_json(d).dump());
}

TEST_CASE("scenario and config JSON round-trip") {
  const Scenario sc = pointer_scenario(make_params(2.0, 0.5, 6.0), 2, 0.25, kDefaultCellCap,
                                       "roundtrip");
  const Scenario back = scenario_from_json(to_json(sc));
  CHECK(to_json(back).dump() == to_json(sc).dump());

  RunConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_max = 2.0;
  cfg.trials = 123;
  cfg.scheme = Scheme::coefficient_independent;
  cfg.master_seed = 0xDEADBEEFULL;
  cfg.sample_times = {0.5, 1.0, 2.0};
  const RunConfig cback = config_from_json(to_json(cfg));
  CHECK(to_json(cback).dump() == to_json(cfg).dump());
}

TEST_CASE("run config validation") {
  RunConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_max = 1.0;
  cfg.trials = 10;
  cfg.sample_times = {0.5, 1.0};
  CHECK(validate(cfg).empty());

  RunConfig bad = cfg;
  bad.dt = 0.0;
  CHECK(!validate(bad).empty());
  bad = cfg;
  bad.t_max = 1e-3;
  CHECK(!validate(bad).empty());
  bad = cfg;
  bad.trials = 0;
  CHECK(!validate(bad).empty());
  bad = cfg;
  bad.decision_level = 0.4;
  CHECK(!validate(bad).empty());
  bad = cfg;
  bad.decision_level = 1.0;
  CHECK(!validate(bad).empty());
  bad = cfg;
  bad.sample_times = {0.5, 0.2};
  CHECK(!validate(bad).empty());
  bad = cfg;
  bad.sample_times = {2.0};
  CHECK(!validate(bad).empty());
}

TEST_CASE("occupation counts above 2^53 are rejected") {
  CHECK_THROWS_AS(two_branch_delta_scenario(unit_params(), (1ULL << 53) + 2, 0.5),
                  ValidationError);
  // A filled cell with a count beyond exact-double range is rejected too.
  CHECK_THROWS_AS(pointer_scenario(make_params(1.0, 1.0, 1e18), 1, 0.5), ValidationError);
}
