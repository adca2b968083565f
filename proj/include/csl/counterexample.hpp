#ifndef CSL_COUNTEREXAMPLE_HPP
#define CSL_COUNTEREXAMPLE_HPP

// Numerical no-go demonstrations.
//
// 1. Noise drawn independently of the branch amplitudes (the
//    coefficient-independent scheme) produces outcome frequencies that are a
//    function of the occupations and horizon only: swap the two initial
//    probabilities and the frequencies do not move. Such a process cannot
//    track |a_k|^2, so it fails the Born test, and demonstrably so.
// 2. Unitary evolution freezes branch probabilities outright.
// 3. The three-way table contrasts both with the norm-favoring dynamics,
//    which does reproduce |a_k|^2.
//
// The demonstration is statistical, not symbolic: equality of outcome
// distributions across amplitude settings stands in for the derivative
// argument it mirrors.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "csl/core.hpp"
#include "csl/ensemble.hpp"

namespace csl {

// Reference configuration used by the no-go demonstrations, fixed in one
// place and reused by docs, recipes and tests.
inline constexpr std::uint64_t kNoGoDeltaN = 4;
inline constexpr double kNoGoTMax = 5.0;
inline constexpr double kNoGoDt = 1e-3;
inline constexpr std::uint64_t kNoGoTrials = 10'000;

inline RunConfig reference_no_go_config(std::uint64_t master_seed, Scheme scheme) {
  RunConfig cfg;
  cfg.dt = kNoGoDt;
  cfg.t_max = kNoGoTMax;
  cfg.trials = kNoGoTrials;
  cfg.scheme = scheme;
  cfg.master_seed = master_seed;
  cfg.sample_times = {0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0};
  return cfg;
}

// Short-horizon configuration where the raw-weighted ensemble is healthy:
// the weighted statistics realize the |a_k|^2 average through the norm
// weights long before the weight spread degenerates.
inline RunConfig short_horizon_raw_config(std::uint64_t master_seed) {
  RunConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_max = 1.0;
  cfg.trials = kNoGoTrials;
  cfg.scheme = Scheme::raw_weighted;
  cfg.master_seed = master_seed;
  cfg.sample_times = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  return cfg;
}

struct PairAgreement {
  std::vector<double> z;  // per-branch two-sample z on outcome frequencies
  double max_abs_z = 0.0;
  bool agree = false;  // all |z| <= 3
};

// Two-sample proportion comparison between the outcome frequencies of two
// reports, using pooled proportions and each side's effective sample size.
inline PairAgreement compare_outcomes(const EnsembleReport& a, const EnsembleReport& b) {
  if (a.outcome_counts.size() != b.outcome_counts.size())
    throw ValidationError("reports have different branch counts");
  PairAgreement out;
  const double na = a.born_n_eff, nb = b.born_n_eff;
  if (na < 1.0 || nb < 1.0) throw ValidationError("degenerate report: no declared outcomes");
  for (std::size_t k = 0; k < a.outcome_counts.size(); ++k) {
    const double fa = a.outcome_freq[k], fb = b.outcome_freq[k];
    const double pooled = (fa * na + fb * nb) / (na + nb);
    const double var = pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb);
    double z = 0.0;
    if (var > 0.0)
      z = (fa - fb) / std::sqrt(var);
    else if (fa != fb)
      z = std::numeric_limits<double>::infinity();
    out.z.push_back(z);
    out.max_abs_z = std::max(out.max_abs_z, std::abs(z));
  }
  out.agree = out.max_abs_z <= 3.0;
  return out;
}

struct NoGoVerdict {
  EnsembleReport report_a;
  EnsembleReport report_b;
  PairAgreement agreement;
  double born_max_abs_z_a = 0.0;  // each run against its own |a_k|^2
  double born_max_abs_z_b = 0.0;
  bool frequencies_agree = false;
  bool born_violated = false;  // at least one run off its own |a_k|^2 by > 3 sigma
  bool degenerate = false;     // no collapses (identical occupations)
  bool no_go_demonstrated = false;
};

// Run the same occupations under two amplitude settings with noise that
// ignores the amplitudes. The second run uses an independent stream derived
// from the first seed.
inline NoGoVerdict run_no_go(const Scenario& a, const Scenario& b, RunConfig cfg) {
  if (a.initial.cell_count != b.initial.cell_count ||
      a.initial.branches.size() != b.initial.branches.size())
    throw ValidationError("scenarios differ in shape");
  for (std::size_t k = 0; k < a.initial.branches.size(); ++k)
    if (a.initial.branches[k].occupation.counts != b.initial.branches[k].occupation.counts)
      throw ValidationError("scenarios differ in occupations");
  if (a.params.lambda != b.params.lambda || a.params.cell_volume != b.params.cell_volume ||
      a.params.density != b.params.density)
    throw ValidationError("scenarios differ in params");

  cfg.scheme = Scheme::coefficient_independent;
  NoGoVerdict v;
  v.report_a = run_ensemble(a, cfg);
  RunConfig cfg_b = cfg;
  std::uint64_t s = cfg.master_seed ^ 0xA3EC4F2D9B587D11ULL;
  cfg_b.master_seed = splitmix64(s);
  v.report_b = run_ensemble(b, cfg_b);

  if (v.report_a.declared_count == 0 && v.report_b.declared_count == 0) {
    v.degenerate = true;
    return v;
  }
  v.agreement = compare_outcomes(v.report_a, v.report_b);
  v.frequencies_agree = v.agreement.agree;
  const BornTest ba = born_test(v.report_a, v.report_a.initial_probs);
  const BornTest bb = born_test(v.report_b, v.report_b.initial_probs);
  v.born_max_abs_z_a = ba.max_abs_z;
  v.born_max_abs_z_b = bb.max_abs_z;
  v.born_violated = !ba.pass || !bb.pass;
  v.no_go_demonstrated = v.frequencies_agree && v.born_violated;
  return v;
}

struct FreezeCheck {
  bool pass = false;
  double max_deviation = 0.0;
};

// Deviation of recorded probabilities from their initial values across a set
// of trajectories. Exposed so tests can feed non-unitary trajectories
// through the same check.
inline FreezeCheck freeze_deviation(const Scenario& sc, std::span<const Trajectory> trajs) {
  const std::vector<double> p0 = branch_probabilities(sc.initial);
  FreezeCheck out;
  for (const Trajectory& t : trajs) {
    if (t.failed) continue;
    for (std::size_t ti = 0; ti < t.times.size(); ++ti)
      for (std::size_t k = 0; k < p0.size(); ++k)
        out.max_deviation = std::max(out.max_deviation, std::abs(t.probs[ti][k] - p0[k]));
  }
  out.pass = out.max_deviation <= 1e-12;
  return out;
}

inline FreezeCheck unitary_freeze_check(const Scenario& sc, RunConfig cfg) {
  if (cfg.scheme != Scheme::unitary)
    throw ValidationError("freeze check requires the unitary scheme");
  std::vector<Trajectory> trajs(cfg.trials);
  for (std::uint64_t i = 0; i < cfg.trials; ++i) trajs[i] = evolve(sc, cfg, i);
  return freeze_deviation(sc, trajs);
}

// ---------------------------------------------------------------------------
// Three-way comparison table

struct ThreeWayRow {
  std::string scheme;
  std::string statistic;
  std::string configuration;
  double max_abs_z = 0.0;
  bool pass = false;
};

struct ThreeWayTable {
  std::vector<ThreeWayRow> rows;
  bool insufficient = false;     // gated on trial count
  bool pattern_holds = false;    // pass / pass / fail
};

inline constexpr std::uint64_t kMinTrialsForStats = 100;

// The standard three-way comparison:
//   physical-drift           outcome frequencies match |a_k|^2
//   raw-weighted             weighted mean probabilities match |a_k|^2 and the
//                            mean squared norm stays 1 (checked on a horizon
//                            with lambda*N_max^2*t <= 1, where the weighted
//                            ensemble is healthy; at long horizons the weight
//                            spread makes the raw ensemble statistically
//                            useless, which is why the drift scheme exists)
//   coefficient-independent  outcome frequencies fail against |a_k|^2
//
// Works for any single-cell branch structure; the two-branch overload below
// is the reference configuration.
inline ThreeWayTable born_requires_dependence_report(const std::vector<std::uint64_t>& counts,
                                                     const std::vector<double>& probs,
                                                     std::uint64_t master_seed,
                                                     std::uint64_t trials = kNoGoTrials) {
  ThreeWayTable table;
  if (trials < kMinTrialsForStats) {
    table.insufficient = true;
    return table;
  }
  const ModelParams params = unit_params();
  const Scenario reference = multi_branch_scenario(params, counts, probs);
  double n_max = 1.0;
  for (std::uint64_t c : counts) n_max = std::max(n_max, static_cast<double>(c));

  {
    RunConfig cfg = reference_no_go_config(master_seed, Scheme::physical_drift);
    cfg.trials = trials;
    // Keep the per-step drift well resolved for large occupations.
    cfg.dt = std::min(kNoGoDt, 16.0 * kNoGoDt / (n_max * n_max));
    const EnsembleReport rep = run_ensemble(reference, cfg);
    const BornTest bt = born_test(rep, rep.initial_probs);
    table.rows.push_back({"physical-drift", "outcome frequencies vs initial probabilities",
                          "t_max=5", bt.max_abs_z, bt.pass});
  }
  {
    std::uint64_t s = master_seed ^ 0x6C62272E07BB0142ULL;
    RunConfig cfg = short_horizon_raw_config(splitmix64(s));
    cfg.trials = trials;
    const double horizon = 1.0 / (params.lambda * n_max * n_max);
    cfg.t_max = horizon;
    cfg.dt = horizon / 1000.0;
    cfg.sample_times.clear();
    for (int i = 1; i <= 10; ++i)
      cfg.sample_times.push_back(horizon * static_cast<double>(i) / 10.0);
    const EnsembleReport rep = run_ensemble(reference, cfg);
    const MartingaleTest mt = martingale_test(rep);
    double max_z = mt.max_abs_z;
    const double gate = 0.1 * static_cast<double>(rep.trials);
    for (std::size_t ti = 0; ti < rep.sample_times.size(); ++ti) {
      if (rep.ess_at[ti] < gate) continue;
      for (std::size_t k = 0; k < rep.initial_probs.size(); ++k) {
        const TimePointStat& st = rep.mean_p[ti][k];
        if (st.se > 0.0)
          max_z = std::max(max_z, std::abs((st.mean - rep.initial_probs[k]) / st.se));
      }
    }
    table.rows.push_back({"raw-weighted",
                          "weighted mean probabilities vs initial, mean squared norm vs 1",
                          "t_max=1/(lambda*N_max^2)", max_z, mt.pass && max_z <= 5.0});
  }
  {
    std::uint64_t s = master_seed ^ 0x2545F4914F6CDD1DULL;
    RunConfig cfg = reference_no_go_config(splitmix64(s), Scheme::coefficient_independent);
    cfg.trials = trials;
    const EnsembleReport rep = run_ensemble(reference, cfg);
    const BornTest bt = born_test(rep, rep.initial_probs);
    table.rows.push_back({"coefficient-independent", "outcome frequencies vs initial probabilities",
                          "t_max=5", bt.max_abs_z, bt.pass});
  }
  table.pattern_holds = table.rows[0].pass && table.rows[1].pass && !table.rows[2].pass;
  return table;
}

inline ThreeWayTable born_requires_dependence_report(double a1_squared, std::uint64_t master_seed,
                                                     std::uint64_t trials = kNoGoTrials) {
  return born_requires_dependence_report({kNoGoDeltaN, 0}, {a1_squared, 1.0 - a1_squared},
                                         master_seed, trials);
}

}  // namespace csl

#endif
