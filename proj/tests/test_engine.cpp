#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "csl/engine.hpp"

using namespace csl;

namespace {

RunConfig quick_config(Scheme scheme, double dt, double t_max, std::uint64_t seed) {
  RunConfig cfg;
  cfg.dt = dt;
  cfg.t_max = t_max;
  cfg.trials = 1;
  cfg.scheme = scheme;
  cfg.master_seed = seed;
  cfg.sample_times = default_sample_times(cfg, 8);
  return cfg;
}

}  // namespace

TEST_CASE("raw increments are Gaussian with variance lambda*dt") {
  const double lambda = 0.7, dt = 0.02;
  const std::size_t n = 100'000;
  GaussianStream rng = trial_stream(99, 0);
  std::vector<double> draws;
  draws.reserve(n);
  for (std::size_t i = 0; i < n / 10; ++i) {
    const NoiseIncrement inc = sample_raw_increments(rng, dt, 10, lambda);
    REQUIRE(inc.db.size() == 10);
    for (double d : inc.db) draws.push_back(d);
  }
  double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / draws.size();
  double var = 0.0;
  for (double d : draws) var += (d - mean) * (d - mean);
  var /= static_cast<double>(draws.size() - 1);

  // Mean within 4 standard errors of zero; variance within 5 percent.
  const double se = std::sqrt(lambda * dt / static_cast<double>(n));
  CHECK(std::abs(mean) <= 4.0 * se);
  CHECK(var == doctest::Approx(lambda * dt).epsilon(0.05));

  CHECK_THROWS_WITH_AS(sample_raw_increments(rng, 0.0, 1, lambda), "dt must be positive",
                       ValidationError);
}

TEST_CASE("apply_step examples") {
  SUBCASE("single branch: probabilities stay exactly (1)") {
    Scenario sc = two_branch_delta_scenario(unit_params(), 5, 0.5);
    sc.initial.branches.pop_back();
    sc.initial.branches[0].log_magnitude = 0.0;  // renormalize K=1
    const NoiseIncrement inc{{0.37}};
    const SuperposedState out = apply_step(sc.initial, inc, 0.1, 1.0);
    CHECK(branch_probabilities(out) == std::vector<double>{1.0});
  }

  SUBCASE("identical occupations: probabilities unchanged by any step") {
    const Scenario sc = two_branch_delta_scenario(unit_params(), 0, 0.3);
    const NoiseIncrement inc{{1.234}};
    const SuperposedState out = apply_step(sc.initial, inc, 0.05, 1.0);
    const auto p = branch_probabilities(out);
    CHECK(p[0] == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.7).epsilon(1e-14));
  }

  SUBCASE("log-ratio change 0.5 - 0.01 = 0.49") {
    const Scenario sc = two_branch_delta_scenario(unit_params(), 1, 0.5);
    const double before = sc.initial.branches[0].log_magnitude -
                          sc.initial.branches[1].log_magnitude;
    const NoiseIncrement inc{{0.5}};
    const SuperposedState out = apply_step(sc.initial, inc, 0.01, 1.0);
    const double after = out.branches[0].log_magnitude - out.branches[1].log_magnitude;
    CHECK(after - before == doctest::Approx(0.49).epsilon(1e-14));
  }

  SUBCASE("phases and occupations untouched") {
    Scenario sc = two_branch_delta_scenario(unit_params(), 3, 0.4);
    sc.initial.branches[0].phase = 1.25;
    const NoiseIncrement inc{{-0.8}};
    const SuperposedState out = apply_step(sc.initial, inc, 0.1, 2.0);
    CHECK(out.branches[0].phase == 1.25);
    CHECK(out.branches[0].occupation.counts == sc.initial.branches[0].occupation.counts);
  }

  SUBCASE("length mismatch rejected") {
    const Scenario sc = two_branch_delta_scenario(unit_params(), 3, 0.4);
    CHECK_THROWS_AS(apply_step(sc.initial, NoiseIncrement{{0.1, 0.2}}, 0.1, 1.0),
                    ValidationError);
  }
}

TEST_CASE("closed form matches its examples and composition is exact") {
  const Scenario sc = two_branch_delta_scenario(unit_params(), 2, 0.5);

  SUBCASE("t = 0, B = 0 is the identity") {
    const auto lm = closed_form(sc, std::vector<double>{0.0}, 0.0);
    CHECK(lm[0] == sc.initial.branches[0].log_magnitude);
    CHECK(lm[1] == sc.initial.branches[1].log_magnitude);
  }

  SUBCASE("N=2, B=1, lambda*t=0.1 gives log-ratio gain 1.6") {
    const auto lm = closed_form(sc, std::vector<double>{1.0}, 0.1);
    CHECK(lm[0] - sc.initial.branches[0].log_magnitude == doctest::Approx(1.6).epsilon(1e-14));
  }

  SUBCASE("stepping along any partition reproduces the closed form") {
    GaussianStream rng = trial_stream(7, 3);
    const double t_total = 0.8;
    // Random partition into 13 unequal steps.
    std::vector<double> fractions(13);
    double fsum = 0.0;
    for (double& f : fractions) {
      f = 0.1 + std::abs(rng.next_standard_normal());
      fsum += f;
    }
    SuperposedState state = sc.initial;
    double b_accum = 0.0;
    for (double f : fractions) {
      const double dt = t_total * f / fsum;
      const double db = rng.next_normal(std::sqrt(dt));
      b_accum += db;
      state = apply_step(state, NoiseIncrement{{db}}, dt, 1.0);
    }
    const auto lm = closed_form(sc, std::vector<double>{b_accum}, t_total);
    CHECK(std::abs(state.branches[0].log_magnitude - lm[0]) <= 1e-12);
    CHECK(std::abs(state.branches[1].log_magnitude - lm[1]) <= 1e-12);
  }
}

TEST_CASE("physical drift expectation") {
  SUBCASE("single branch, occupation 5") {
    Scenario sc = two_branch_delta_scenario(unit_params(), 5, 0.5);
    sc.initial.branches.pop_back();
    sc.initial.branches[0].log_magnitude = 0.0;
    const auto d = physical_drift(sc.initial, 0.01, 2.0);
    CHECK(d[0] == doctest::Approx(2.0 * 2.0 * 5.0 * 0.01).epsilon(1e-14));
  }

  SUBCASE("two equal branches with occupations 4 and 0 average to 2") {
    const Scenario sc = two_branch_delta_scenario(unit_params(), 4, 0.5);
    const auto d = physical_drift(sc.initial, 0.01, 1.0);
    CHECK(d[0] == doctest::Approx(2.0 * 1.0 * 2.0 * 0.01).epsilon(1e-14));
  }

  SUBCASE("near-collapse limit approaches the winner's occupation") {
    Scenario sc = two_branch_delta_scenario(unit_params(), 4, 0.5);
    sc.initial.branches[0].log_magnitude = 0.0;
    sc.initial.branches[1].log_magnitude = -12.0;  // p2 ~ 4e-11
    const auto d = physical_drift(sc.initial, 0.01, 1.0);
    CHECK(d[0] == doctest::Approx(2.0 * 4.0 * 0.01).epsilon(1e-8));
  }
}

TEST_CASE("log squared norm") {
  const Scenario sc = two_branch_delta_scenario(unit_params(), 1, 0.5);
  CHECK(std::abs(log_squared_norm(sc.initial)) <= 1e-12);

  SuperposedState single;
  single.cell_count = 1;
  single.branches = {Branch{-5.0, 0.0, OccupationVector{{1}}}};
  CHECK(log_squared_norm(single) == doctest::Approx(-10.0).epsilon(1e-14));

  SuperposedState spread;
  spread.cell_count = 1;
  spread.branches = {Branch{0.0, 0.0, OccupationVector{{1}}},
                     Branch{-800.0, 0.0, OccupationVector{{0}}}};
  CHECK(log_squared_norm(spread) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("branch probabilities") {
  const Scenario cat = two_branch_delta_scenario(unit_params(), 4, 2.0 / 3.0);
  const auto p = branch_probabilities(cat.initial);
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-13));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-13));

  SuperposedState single;
  single.cell_count = 1;
  single.branches = {Branch{-3.0, 0.0, OccupationVector{{2}}}};
  CHECK(branch_probabilities(single) == std::vector<double>{1.0});

  SuperposedState spread;
  spread.cell_count = 1;
  spread.branches = {Branch{0.0, 0.0, OccupationVector{{1}}},
                     Branch{-400.0, 0.0, OccupationVector{{0}}}};
  const auto ps = branch_probabilities(spread);
  CHECK(ps[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ps[1] >= 0.0);
  CHECK(std::isfinite(ps[1]));
}

TEST_CASE("unitary scheme freezes probabilities") {
  const Scenario cat = two_branch_delta_scenario(unit_params(), 4, 2.0 / 3.0);
  const RunConfig cfg = quick_config(Scheme::unitary, 1e-2, 1.0, 5);
  const Trajectory t = evolve(cat, cfg, 0);
  for (const auto& p : t.probs) {
    CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
  CHECK(!t.winner);
  CHECK(!t.t_level);
}

TEST_CASE("evolve is deterministic given seed and trial index") {
  const Scenario sc = two_branch_delta_scenario(unit_params(), 2, 0.5);
  const RunConfig cfg = quick_config(Scheme::physical_drift, 1e-3, 1.0, 12345);
  const Trajectory a = evolve(sc, cfg, 17);
  const Trajectory b = evolve(sc, cfg, 17);
  REQUIRE(a.times == b.times);
  CHECK(a.probs == b.probs);
  CHECK(a.log_sq_norm == b.log_sq_norm);
  CHECK(a.winner == b.winner);
  CHECK(a.t_decision == b.t_decision);
  CHECK(a.t_level == b.t_level);
  CHECK(a.log_weight == b.log_weight);

  const Trajectory c = evolve(sc, cfg, 18);
  CHECK(a.probs != c.probs);
}

TEST_CASE("probability vectors at sample times sum to one") {
  const Scenario sc = two_branch_delta_scenario(unit_params(), 3, 0.4);
  for (Scheme scheme : {Scheme::raw_weighted, Scheme::physical_drift}) {
    const RunConfig cfg = quick_config(scheme, 1e-3, 1.0, 777);
    const Trajectory t = evolve(sc, cfg, 2);
    for (const auto& p : t.probs) {
      double sum = 0.0;
      for (double x : p) {
        CHECK(x >= 0.0);
        sum += x;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("branch relabeling permutes outputs") {
  const Scenario sc = two_branch_delta_scenario(unit_params(), 3, 0.3);
  Scenario swapped = sc;
  std::swap(swapped.initial.branches[0], swapped.initial.branches[1]);
  // The noise stream only sees cells, not branch order, so the trajectory is
  // the same up to relabeling.
  const RunConfig cfg = quick_config(Scheme::raw_weighted, 1e-3, 0.5, 31);
  const Trajectory a = evolve(sc, cfg, 4);
  const Trajectory b = evolve(swapped, cfg, 4);
  REQUIRE(a.probs.size() == b.probs.size());
  for (std::size_t ti = 0; ti < a.probs.size(); ++ti) {
    CHECK(a.probs[ti][0] == b.probs[ti][1]);
    CHECK(a.probs[ti][1] == b.probs[ti][0]);
  }
  CHECK(a.log_sq_norm == b.log_sq_norm);
}

TEST_CASE("a cell with identical counts across branches changes nothing") {
  // Same increments applied to the shared cells; the extra cell multiplies
  // every branch equally.
  Scenario base = two_branch_delta_scenario(unit_params(), 4, 0.4);
  Scenario padded = base;
  padded.initial.cell_count = 2;
  for (Branch& b : padded.initial.branches) b.occupation.counts.push_back(9);

  GaussianStream rng = trial_stream(5, 5);
  SuperposedState sa = base.initial;
  SuperposedState sb = padded.initial;
  for (int step = 0; step < 50; ++step) {
    const double shared = rng.next_normal(0.1);
    const double extra = rng.next_normal(0.1);
    sa = apply_step(sa, NoiseIncrement{{shared}}, 0.01, 1.0);
    sb = apply_step(sb, NoiseIncrement{{shared, extra}}, 0.01, 1.0);
    const auto pa = branch_probabilities(sa);
    const auto pb = branch_probabilities(sb);
    for (std::size_t k = 0; k < pa.size(); ++k) CHECK(std::abs(pa[k] - pb[k]) <= 1e-9);
  }
}

TEST_CASE("degenerate zero-difference scenario never declares a winner") {
  const Scenario sc = two_branch_delta_scenario(unit_params(), 0, 0.5);
  RunConfig cfg = quick_config(Scheme::physical_drift, 1e-2, 2.0, 99);
  const Trajectory t = evolve(sc, cfg, 0);
  CHECK(!t.winner);
  CHECK(!t.t_decision);
  CHECK(!t.t_level);
  for (const auto& p : t.probs) CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("amplitude overflow marks the trajectory failed") {
  // A step size so extreme that the damping term overflows the log
  // magnitude in one update.
  Scenario sc = two_branch_delta_scenario(unit_params(), (1ULL << 53) - 1, 0.5);
  RunConfig cfg;
  cfg.dt = 1e280;
  cfg.t_max = 2e280;
  cfg.trials = 1;
  cfg.scheme = Scheme::raw_weighted;
  cfg.master_seed = 1;
  cfg.sample_times = {2e280};
  const Trajectory t = evolve(sc, cfg, 0);
  CHECK(t.failed);
  REQUIRE(t.failure_time.has_value());
  CHECK(*t.failure_time > 0.0);
}

TEST_CASE("apply_step surfaces the offending branch on overflow") {
  SuperposedState s;
  s.cell_count = 1;
  s.branches = {Branch{0.0, 0.0, OccupationVector{{4}}},
                Branch{-0.5, 0.0, OccupationVector{{0}}}};
  try {
    apply_step(s, NoiseIncrement{{1e308}}, 1.0, 1e-3);
    FAIL("expected AmplitudeError");
  } catch (const AmplitudeError& e) {
    CHECK(e.branch_index == 0);
  }
}
