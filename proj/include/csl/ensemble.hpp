#ifndef CSL_ENSEMBLE_HPP
#define CSL_ENSEMBLE_HPP

// Ensemble execution and statistics.
//
// Trials are embarrassingly parallel: each trajectory is a pure function of
// (scenario, config, trial_index), results land in a slot indexed by trial,
// and every aggregate below is computed by a sequential pass over that array.
// Thread count therefore cannot change any reported number.
//
// Outcome counting uses the probability threshold (decision_level); collapse
// timing uses the log amplitude-ratio threshold (collapse_level). Two
// thresholds, because timing statements are phrased in amplitude ratios
// while outcome statistics need probabilities.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "csl/core.hpp"
#include "csl/engine.hpp"
#include "csl/numeric.hpp"

namespace csl {

// Number of worker threads: CSL_LAB_THREADS caps it when set.
inline unsigned worker_thread_count(std::uint64_t jobs) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("CSL_LAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && static_cast<unsigned long>(v) < hw) hw = static_cast<unsigned>(v);
  }
  if (jobs < hw) hw = static_cast<unsigned>(jobs);
  return hw;
}

struct TimePointStat {
  double mean = 0.0;
  double se = 0.0;
};

struct CollapseQuantiles {
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  std::uint64_t count = 0;  // trials that reached the collapse level
};

struct EnsembleReport {
  std::string scenario_name;
  Scheme scheme = Scheme::physical_drift;
  std::uint64_t trials = 0;
  RunConfig config;                    // embedded for exact reproduction
  std::vector<double> initial_probs;   // |a_k|^2
  std::vector<double> sample_times;
  std::vector<std::vector<TimePointStat>> mean_p;  // [time][branch]
  std::vector<TimePointStat> mean_sq_norm;         // [time]; raw schemes only
  std::vector<double> outcome_counts;  // weighted counts per branch
  std::vector<double> outcome_freq;    // normalized over declared winners
  std::uint64_t declared_count = 0;
  double declared_fraction = 0.0;      // weighted fraction of trials with a winner
  double ess = 0.0;                    // final-weight effective sample size
  bool ess_low = false;                // raw scheme with ESS below 0.1 * trials
  std::vector<double> ess_at;          // per sample time, from time-t norm weights
  std::optional<CollapseQuantiles> collapse_times;
  std::uint64_t failure_count = 0;
  bool healthy = true;                 // false when >1% of trajectories failed
  double winner_change_fraction = 0.0;
  double born_n_eff = 0.0;             // sample size behind outcome frequencies
};

namespace detail {

inline bool weighted_scheme(Scheme s) { return s == Scheme::raw_weighted; }

}  // namespace detail

// Aggregate a set of trajectories into a report. Exposed separately from
// run_ensemble so tests can feed hand-built or deliberately corrupted
// trajectory sets through the same statistics.
inline EnsembleReport summarize(const Scenario& sc, const RunConfig& cfg,
                                std::span<const Trajectory> trajs) {
  EnsembleReport rep;
  rep.scenario_name = sc.name;
  rep.scheme = cfg.scheme;
  rep.trials = trajs.size();
  rep.config = cfg;
  rep.initial_probs = branch_probabilities(sc.initial);
  const std::size_t K = sc.initial.branches.size();

  const bool weighted = detail::weighted_scheme(cfg.scheme);
  std::vector<double> weights;
  weights.reserve(trajs.size());
  std::uint64_t ok_count = 0;
  for (const Trajectory& t : trajs) {
    if (t.failed) {
      ++rep.failure_count;
      continue;
    }
    ++ok_count;
    weights.push_back(weighted ? std::exp(t.log_weight) : 1.0);
  }
  rep.healthy = rep.failure_count * 100 <= rep.trials;
  if (ok_count == 0) return rep;
  rep.ess = effective_sample_size(weights);
  rep.ess_low = weighted && rep.ess < 0.1 * static_cast<double>(rep.trials);

  // Sample-time grid comes from the first healthy trajectory; all
  // trajectories of one run share it by construction.
  const Trajectory* first = nullptr;
  for (const Trajectory& t : trajs)
    if (!t.failed) {
      first = &t;
      break;
    }
  const std::size_t T = first->times.size();
  rep.sample_times = first->times;

  rep.mean_p.assign(T, std::vector<TimePointStat>(K));
  rep.mean_sq_norm.assign(T, TimePointStat{});
  rep.ess_at.assign(T, 0.0);
  const bool norm_meaningful =
      weighted || cfg.scheme == Scheme::coefficient_independent;
  std::vector<double> xs, ws, sq;
  xs.reserve(ok_count);
  ws.reserve(ok_count);
  sq.reserve(ok_count);
  for (std::size_t ti = 0; ti < T; ++ti) {
    rep.ess_at[ti] = static_cast<double>(ok_count);
    if (norm_meaningful) {
      sq.clear();
      for (const Trajectory& t : trajs) {
        if (t.failed) continue;
        sq.push_back(std::exp(t.log_sq_norm[ti]));
      }
      if (weighted) rep.ess_at[ti] = effective_sample_size(sq);
      const MeanSe ms = mean_and_se(sq);
      rep.mean_sq_norm[ti] = {ms.mean, ms.se};
    }
    // The favored measure holds at each instant, so the mean probability at
    // sample time t is weighted by the squared norm at that same t. Using the
    // horizon weight instead leaves the estimate unbiased but inflates its
    // true variance far beyond the plug-in standard error once the horizon
    // weights degenerate.
    for (std::size_t k = 0; k < K; ++k) {
      xs.clear();
      ws.clear();
      for (const Trajectory& t : trajs) {
        if (t.failed) continue;
        xs.push_back(t.probs[ti][k]);
        if (weighted) ws.push_back(std::exp(t.log_sq_norm[ti]));
      }
      const MeanSe ms = weighted ? weighted_mean_and_se(xs, ws) : mean_and_se(xs);
      rep.mean_p[ti][k] = {ms.mean, ms.se};
    }
  }

  // Outcome counting over declared winners.
  rep.outcome_counts.assign(K, 0.0);
  double declared_weight = 0.0, total_weight = 0.0;
  std::uint64_t changed = 0;
  std::size_t wi = 0;
  for (const Trajectory& t : trajs) {
    if (t.failed) continue;
    const double w = weights[wi++];
    total_weight += w;
    if (t.winner) {
      rep.outcome_counts[*t.winner] += w;
      declared_weight += w;
      ++rep.declared_count;
      if (t.winner_changed) ++changed;
    }
  }
  rep.declared_fraction = total_weight > 0.0 ? declared_weight / total_weight : 0.0;
  rep.winner_change_fraction =
      rep.declared_count > 0 ? static_cast<double>(changed) / static_cast<double>(rep.declared_count)
                             : 0.0;
  if (declared_weight > 0.0) {
    rep.outcome_freq.assign(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) rep.outcome_freq[k] = rep.outcome_counts[k] / declared_weight;
  }
  if (weighted) {
    std::vector<double> dw;
    wi = 0;
    for (const Trajectory& t : trajs) {
      if (t.failed) continue;
      const double w = weights[wi++];
      if (t.winner) dw.push_back(w);
    }
    rep.born_n_eff = effective_sample_size(dw);
  } else {
    rep.born_n_eff = static_cast<double>(rep.declared_count);
  }

  // First-passage quantiles, weighted by the trial weights.
  std::vector<double> tl, tlw;
  wi = 0;
  for (const Trajectory& t : trajs) {
    if (t.failed) continue;
    const double w = weights[wi++];
    if (t.t_level) {
      tl.push_back(*t.t_level);
      tlw.push_back(w);
    }
  }
  if (!tl.empty()) {
    CollapseQuantiles q;
    q.count = tl.size();
    q.median = weighted_quantile(tl, tlw, 0.50);
    q.q25 = weighted_quantile(tl, tlw, 0.25);
    q.q75 = weighted_quantile(tl, tlw, 0.75);
    rep.collapse_times = q;
  }
  return rep;
}

// Run trials 0..trials-1 in parallel. Each result lands in its own slot, so
// scheduling cannot reorder anything.
inline std::vector<Trajectory> run_trajectories(const Scenario& sc, const RunConfig& cfg) {
  require_valid(sc);
  require_valid(cfg);
  if (cfg.trials < 1) throw ValidationError("trials must be >= 1");
  std::vector<Trajectory> trajs(cfg.trials);
  const unsigned nthreads = worker_thread_count(cfg.trials);
  if (nthreads <= 1) {
    for (std::uint64_t i = 0; i < cfg.trials; ++i) trajs[i] = evolve(sc, cfg, i);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (unsigned w = 0; w < nthreads; ++w) {
      pool.emplace_back([&, w]() {
        for (std::uint64_t i = w; i < cfg.trials; i += nthreads) trajs[i] = evolve(sc, cfg, i);
      });
    }
    for (auto& th : pool) th.join();
  }
  return trajs;
}

inline EnsembleReport run_ensemble(const Scenario& sc, const RunConfig& cfg) {
  const std::vector<Trajectory> trajs = run_trajectories(sc, cfg);
  return summarize(sc, cfg, trajs);
}

// ---------------------------------------------------------------------------
// Statistical checks

struct BornTest {
  std::vector<double> z;   // per-branch z-scores
  bool pass = false;       // all |z| <= 3
  double n_eff = 0.0;
  double max_abs_z = 0.0;
};

// One-sample proportion test of the outcome frequencies against an expected
// probability vector. The standard error uses the expected proportions and
// the effective sample size behind the frequencies.
inline BornTest born_test(const EnsembleReport& rep, std::span<const double> expected) {
  if (expected.size() != rep.outcome_counts.size())
    throw ValidationError("expected vector length must match branch count");
  double sum = 0.0;
  for (double e : expected) sum += e;
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("expected probabilities must sum to 1");
  if (rep.outcome_freq.empty() || rep.born_n_eff < 1.0)
    throw ValidationError("degenerate report: no declared outcomes");
  BornTest out;
  out.n_eff = rep.born_n_eff;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    const double e = expected[k];
    if (!(e > 0.0 && e < 1.0))
      throw ValidationError("degenerate expected probability (zero variance)");
    const double se = std::sqrt(e * (1.0 - e) / out.n_eff);
    const double z = (rep.outcome_freq[k] - e) / se;
    out.z.push_back(z);
    out.max_abs_z = std::max(out.max_abs_z, std::abs(z));
  }
  out.pass = out.max_abs_z <= 3.0;
  return out;
}

struct MartingaleTest {
  bool pass = false;
  double max_abs_z = 0.0;      // over the asserted sample times
  double max_abs_z_all = 0.0;  // over every sample time, diagnostics only
  std::size_t gated_times = 0;
  std::string detail;
};

// Raw scheme: the ensemble mean of the squared norm must stay 1. Asserted at
// the sample times where the per-time ESS is at least a tenth of the trials;
// past that point the weight spread degenerates and the plug-in standard
// error stops being a meaningful yardstick (z values there are still
// reported). Physical drift: the mean branch probabilities must stay at
// their initial values, at every sample time. Unitary reports are a trivial
// pass (probabilities are frozen pathwise).
inline MartingaleTest martingale_test(const EnsembleReport& rep) {
  MartingaleTest out;
  auto zval = [](double mean, double target, double se) {
    const double d = mean - target;
    if (se == 0.0) return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return d / se;
  };
  switch (rep.scheme) {
    case Scheme::raw_weighted: {
      const double gate = 0.1 * static_cast<double>(rep.trials);
      for (std::size_t ti = 0; ti < rep.sample_times.size(); ++ti) {
        const double z = std::abs(zval(rep.mean_sq_norm[ti].mean, 1.0, rep.mean_sq_norm[ti].se));
        out.max_abs_z_all = std::max(out.max_abs_z_all, z);
        if (rep.ess_at[ti] >= gate) {
          ++out.gated_times;
          out.max_abs_z = std::max(out.max_abs_z, z);
        }
      }
      out.detail = "mean squared norm vs 1 at ESS-gated sample times";
      out.pass = out.gated_times > 0 && out.max_abs_z <= 5.0;
      return out;
    }
    case Scheme::physical_drift: {
      for (std::size_t ti = 0; ti < rep.sample_times.size(); ++ti)
        for (std::size_t k = 0; k < rep.initial_probs.size(); ++k) {
          const double z =
              zval(rep.mean_p[ti][k].mean, rep.initial_probs[k], rep.mean_p[ti][k].se);
          out.max_abs_z = std::max(out.max_abs_z, std::abs(z));
        }
      out.max_abs_z_all = out.max_abs_z;
      out.gated_times = rep.sample_times.size();
      out.detail = "mean branch probabilities vs initial at all sample times";
      break;
    }
    case Scheme::unitary: {
      double dev = 0.0;
      for (std::size_t ti = 0; ti < rep.sample_times.size(); ++ti)
        for (std::size_t k = 0; k < rep.initial_probs.size(); ++k)
          dev = std::max(dev, std::abs(rep.mean_p[ti][k].mean - rep.initial_probs[k]));
      out.max_abs_z = 0.0;
      out.pass = dev <= 1e-12;
      out.detail = "probabilities frozen";
      return out;
    }
    case Scheme::coefficient_independent:
      throw ValidationError("martingale test expects a raw-weighted or physical-drift report");
  }
  out.pass = out.max_abs_z <= 5.0;
  return out;
}

inline CollapseQuantiles collapse_time_summary(const EnsembleReport& rep,
                                               std::uint64_t min_count = 100) {
  if (!rep.collapse_times || rep.collapse_times->count < min_count) {
    const std::uint64_t n = rep.collapse_times ? rep.collapse_times->count : 0;
    throw ValidationError("too few collapsed trials: " + std::to_string(n) + " < " +
                          std::to_string(min_count));
  }
  return *rep.collapse_times;
}

// ---------------------------------------------------------------------------
// Collapse-time scaling

struct ScalingPoint {
  std::uint64_t delta_n = 0;
  double median_t = 0.0;
  double predicted_t = 0.0;  // 3/(lambda*delta_n^2) at the configured level
};

struct ScalingFit {
  std::vector<ScalingPoint> points;
  double slope = 0.0;      // of log(median t) vs log(delta_n)
  double intercept = 0.0;
  double residual_rms = 0.0;
};

// First-passage time predicted by the amplitude-ratio decay rate.
inline double predicted_collapse_time(double lambda, double delta_n, double level = 3.0) {
  if (delta_n <= 0.0) return std::numeric_limits<double>::infinity();
  return level / (lambda * delta_n * delta_n);
}

// Median first-passage time vs count difference. The base config is taken at
// delta_n = 1; per point, dt and t_max shrink by 1/delta_n^2 (the dynamics
// depend on lambda*delta_n^2*t only, so this keeps every run at the same
// resolution relative to its own collapse scale). Per-point master seeds are
// derived from the base seed and delta_n.
inline ScalingFit scaling_study(const ModelParams& params,
                                std::span<const std::uint64_t> delta_n_list,
                                const RunConfig& base, double a1_squared = 0.5) {
  std::vector<std::uint64_t> distinct(delta_n_list.begin(), delta_n_list.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) throw ValidationError("need >= 3 distinct delta_n values");

  ScalingFit fit;
  std::vector<double> lx, ly;
  for (std::uint64_t dn : distinct) {
    const double scale = 1.0 / (static_cast<double>(dn) * static_cast<double>(dn));
    RunConfig cfg = base;
    cfg.dt = base.dt * scale;
    cfg.t_max = base.t_max * scale;
    for (double& t : cfg.sample_times) t *= scale;
    std::uint64_t s = base.master_seed ^ (0xC6A4A7935BD1E995ULL * (dn + 1));
    cfg.master_seed = splitmix64(s);
    const Scenario sc = two_branch_delta_scenario(params, dn, a1_squared);
    const EnsembleReport rep = run_ensemble(sc, cfg);
    const CollapseQuantiles q = collapse_time_summary(rep);
    ScalingPoint pt;
    pt.delta_n = dn;
    pt.median_t = q.median;
    pt.predicted_t = predicted_collapse_time(params.lambda, static_cast<double>(dn),
                                             base.collapse_level);
    fit.points.push_back(pt);
    lx.push_back(std::log(static_cast<double>(dn)));
    ly.push_back(std::log(q.median));
  }
  const LineFit lf = linear_fit(lx, ly);
  fit.slope = lf.slope;
  fit.intercept = lf.intercept;
  fit.residual_rms = lf.residual_rms;
  return fit;
}

// Slope of the loser-to-winner log amplitude ratio over the post-decision
// window of one trajectory. The ratio is recovered from recorded
// probabilities:  log(|amp_l|/|amp_w|) = (log p_l - log p_w)/2.
inline double decay_slope(const Trajectory& traj) {
  if (!traj.winner || !traj.t_decision)
    throw ValidationError("trajectory has no declared winner");
  const std::size_t w = *traj.winner;
  const std::size_t K = traj.probs.empty() ? 0 : traj.probs.front().size();
  if (K < 2) throw ValidationError("need at least two branches");
  std::vector<double> xs, ys;
  std::size_t loser = K;  // best loser at the first post-decision sample
  for (std::size_t ti = 0; ti < traj.times.size(); ++ti) {
    if (traj.times[ti] < *traj.t_decision) continue;
    if (loser == K) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K; ++k)
        if (k != w && traj.probs[ti][k] > best) {
          best = traj.probs[ti][k];
          loser = k;
        }
    }
    const double pl = traj.probs[ti][loser];
    const double pw = traj.probs[ti][w];
    if (pl <= 0.0 || pw <= 0.0) break;
    xs.push_back(traj.times[ti]);
    ys.push_back(0.5 * (std::log(pl) - std::log(pw)));
  }
  if (xs.size() < 2) throw ValidationError("post-decision window too short");
  return linear_fit(xs, ys).slope;
}

// ---------------------------------------------------------------------------
// Hook catalog: how fast the count-difference mechanism collapses various
// measurement devices, against the 1 ms perception threshold.

inline constexpr double kPerceptionThresholdSeconds = 1e-3;

struct HookEntry {
  std::string name;
  std::uint64_t delta_n = 0;
  double t_collapse = 0.0;   // 3/(lambda*delta_n^2)
  bool detectable = false;   // collapse completes below the perception threshold (strict <)
  bool never_collapses = false;  // delta_n = 0
};

inline std::vector<HookEntry> hook_catalog(
    const ModelParams& params,
    std::span<const std::pair<std::string, std::uint64_t>> entries) {
  std::vector<HookEntry> out;
  for (const auto& [name, dn] : entries) {
    HookEntry e;
    e.name = name;
    e.delta_n = dn;
    if (dn == 0) {
      e.never_collapses = true;
      e.t_collapse = std::numeric_limits<double>::infinity();
      e.detectable = false;
    } else {
      e.t_collapse = predicted_collapse_time(params.lambda, static_cast<double>(dn));
      e.detectable = e.t_collapse < kPerceptionThresholdSeconds;
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace csl

#endif
