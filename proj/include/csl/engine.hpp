#ifndef CSL_ENGINE_HPP
#define CSL_ENGINE_HPP

// Single-trajectory stochastic evolution.
//
// With H = 0 the collapse equation has an exact pathwise solution: each
// branch's log-magnitude is linear in the accumulated noise and in time,
//
//   log|amp_k(t)| = log|amp_k(0)| + sum_n N_nk * B_n(t) - lambda * N_nk^2 * t,
//
// so the integrator below is exact for any step partition; there is no
// Ito/Stratonovich ambiguity to resolve. The per-cell noise increments are
// Gaussian with variance lambda*dt: that is the unique scale under which the
// ensemble-mean squared norm stays 1 (checked by the martingale tests).
//
// Schemes:
//   raw-weighted            increments as drawn; trajectory carries its final
//                           log squared norm as an importance weight
//   physical-drift          adds 2*lambda*<eta_n>*dt to each increment, where
//                           <eta_n> is the probability-weighted occupation;
//                           samples the norm-favoring measure directly, no
//                           weights needed (validated against raw-weighted)
//   coefficient-independent identical draws to raw-weighted, but consumers
//                           must not apply weights; the outcome statistics
//                           of this scheme cannot track the initial
//                           probabilities, which is the point
//   unitary                 no noise, no damping; branch probabilities are
//                           frozen at their initial values

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "csl/core.hpp"
#include "csl/numeric.hpp"
#include "csl/rng.hpp"

namespace csl {

struct NoiseIncrement {
  std::vector<double> db;  // one Brownian increment per cell
};

struct Trajectory {
  std::vector<double> times;               // sample times actually recorded
  std::vector<std::vector<double>> probs;  // [time][branch]
  std::vector<double> log_sq_norm;         // log sum_k |amp_k|^2 at sample times
  std::optional<std::size_t> winner;       // 0-based branch index
  std::optional<double> t_decision;        // first time max_k p_k >= decision_level
  std::optional<double> t_level;           // first time best-loser log ratio <= -collapse_level
  double log_weight = 0.0;                 // final log squared norm (raw schemes)
  bool failed = false;
  std::optional<double> failure_time;
  bool winner_changed = false;             // leader flipped after the decision
};

struct AmplitudeError : std::runtime_error {
  std::size_t branch_index;
  explicit AmplitudeError(std::size_t k)
      : std::runtime_error("amplitude overflow/underflow on branch " + std::to_string(k + 1)),
        branch_index(k) {}
};

// One independent Gaussian increment per cell, mean 0, variance lambda*dt,
// consumed in cell order.
inline NoiseIncrement sample_raw_increments(GaussianStream& rng, double dt,
                                            std::size_t cell_count, double lambda) {
  if (!(dt > 0.0)) throw ValidationError("dt must be positive");
  if (!(lambda > 0.0)) throw ValidationError("lambda must be positive");
  NoiseIncrement inc;
  inc.db.resize(cell_count);
  const double sigma = std::sqrt(lambda * dt);
  for (std::size_t n = 0; n < cell_count; ++n) inc.db[n] = rng.next_normal(sigma);
  return inc;
}

namespace detail {

// Shared update kernel: log|amp_k| += sum_n (N_nk * dB_n - lambda * N_nk^2 * dt).
// occupations stored densely as doubles, row per branch.
inline void step_log_magnitudes(std::span<double> log_mags,
                                std::span<const std::vector<double>> occupations,
                                std::span<const double> db, double dt, double lambda) {
  for (std::size_t k = 0; k < log_mags.size(); ++k) {
    const std::vector<double>& occ = occupations[k];
    double acc = 0.0;
    for (std::size_t n = 0; n < occ.size(); ++n)
      acc += occ[n] * (db[n] - lambda * occ[n] * dt);
    log_mags[k] += acc;
  }
}

inline std::vector<std::vector<double>> occupation_rows(const SuperposedState& s) {
  std::vector<std::vector<double>> rows(s.branches.size());
  for (std::size_t k = 0; k < s.branches.size(); ++k) {
    rows[k].reserve(s.cell_count);
    for (std::uint64_t c : s.branches[k].occupation.counts)
      rows[k].push_back(static_cast<double>(c));
  }
  return rows;
}

inline double log_squared_norm_of(std::span<const double> log_mags) {
  std::vector<double> twice(log_mags.size());
  for (std::size_t k = 0; k < log_mags.size(); ++k) twice[k] = 2.0 * log_mags[k];
  return log_sum_exp(twice);
}

inline std::vector<double> probabilities_of(std::span<const double> log_mags) {
  const double lsn = log_squared_norm_of(log_mags);
  std::vector<double> p(log_mags.size());
  for (std::size_t k = 0; k < log_mags.size(); ++k)
    p[k] = std::exp(2.0 * log_mags[k] - lsn);
  return p;
}

}  // namespace detail

// log of sum_k |amp_k|^2, via log-sum-exp; exact for a single branch.
inline double log_squared_norm(const SuperposedState& s) {
  std::vector<double> lm(s.branches.size());
  for (std::size_t k = 0; k < s.branches.size(); ++k) lm[k] = s.branches[k].log_magnitude;
  return detail::log_squared_norm_of(lm);
}

// p_k = |amp_k|^2 / sum_j |amp_j|^2, computed without leaving log space.
inline std::vector<double> branch_probabilities(const SuperposedState& s) {
  std::vector<double> lm(s.branches.size());
  for (std::size_t k = 0; k < s.branches.size(); ++k) lm[k] = s.branches[k].log_magnitude;
  return detail::probabilities_of(lm);
}

// One multiplicative update. Phases and occupations are untouched.
inline SuperposedState apply_step(const SuperposedState& s, const NoiseIncrement& inc,
                                  double dt, double lambda) {
  if (inc.db.size() != s.cell_count)
    throw ValidationError("increment length must equal cell_count");
  SuperposedState out = s;
  auto occ = detail::occupation_rows(s);
  std::vector<double> lm(s.branches.size());
  for (std::size_t k = 0; k < lm.size(); ++k) lm[k] = s.branches[k].log_magnitude;
  detail::step_log_magnitudes(lm, occ, inc.db, dt, lambda);
  for (std::size_t k = 0; k < lm.size(); ++k) {
    if (!std::isfinite(lm[k])) throw AmplitudeError(k);
    out.branches[k].log_magnitude = lm[k];
  }
  return out;
}

// Closed-form branch log-magnitudes at time t given total accumulated noise.
inline std::vector<double> closed_form(const Scenario& sc, std::span<const double> b_total,
                                       double t) {
  if (b_total.size() != sc.initial.cell_count)
    throw ValidationError("b_total length must equal cell_count");
  if (!(t >= 0.0)) throw ValidationError("t must be non-negative");
  const double lambda = sc.params.lambda;
  std::vector<double> lm;
  lm.reserve(sc.initial.branches.size());
  for (const Branch& b : sc.initial.branches) {
    double acc = b.log_magnitude;
    for (std::size_t n = 0; n < b_total.size(); ++n) {
      const double occ = static_cast<double>(b.occupation.counts[n]);
      acc += occ * b_total[n] - lambda * occ * occ * t;
    }
    lm.push_back(acc);
  }
  return lm;
}

// Norm-favoring drift, one entry per cell: 2*lambda*<eta_n>*dt with
// <eta_n> = sum_k p_k * N_nk. The whole vector is added to the raw
// increments in the physical-drift scheme.
inline std::vector<double> physical_drift(const SuperposedState& s, double dt, double lambda) {
  std::vector<double> p = branch_probabilities(s);
  bool any_finite = false;
  for (double x : p)
    if (std::isfinite(x) && x > 0.0) any_finite = true;
  if (!any_finite) throw ValidationError("state degenerate: all branches underflowed");
  std::vector<double> drift(s.cell_count, 0.0);
  for (std::size_t k = 0; k < s.branches.size(); ++k)
    for (std::size_t n = 0; n < s.cell_count; ++n)
      drift[n] += p[k] * static_cast<double>(s.branches[k].occupation.counts[n]);
  for (double& d : drift) d *= 2.0 * lambda * dt;
  return drift;
}

namespace detail {

// Full trajectory integration. noise_scale multiplies the increment standard
// deviation and exists so tests can inject deliberately mis-scaled noise;
// production callers leave it at 1.
inline Trajectory evolve_impl(const Scenario& sc, const RunConfig& cfg,
                              std::uint64_t trial_index, double noise_scale) {
  require_valid(sc);
  require_valid(cfg);

  const double lambda = sc.params.lambda;
  const double dt = cfg.dt;
  const std::size_t cells = sc.initial.cell_count;
  const std::size_t K = sc.initial.branches.size();
  const auto n_steps = static_cast<std::uint64_t>(std::llround(cfg.t_max / dt));

  // Sample times snapped to step boundaries.
  std::vector<std::uint64_t> sample_steps;
  sample_steps.reserve(cfg.sample_times.size());
  for (double t : cfg.sample_times) {
    auto s = static_cast<std::uint64_t>(std::llround(t / dt));
    sample_steps.push_back(std::min(s, n_steps));
  }

  std::vector<double> lm(K);
  for (std::size_t k = 0; k < K; ++k) lm[k] = sc.initial.branches[k].log_magnitude;
  const auto occ = occupation_rows(sc.initial);
  std::vector<double> sum_sq(K, 0.0);  // sum_n N_nk^2 per branch
  for (std::size_t k = 0; k < K; ++k)
    for (double c : occ[k]) sum_sq[k] += c * c;

  GaussianStream rng = trial_stream(cfg.master_seed, trial_index);
  const double sigma = noise_scale * std::sqrt(lambda * dt);
  const bool unitary = cfg.scheme == Scheme::unitary;
  const bool drifted = cfg.scheme == Scheme::physical_drift;
  const double log_decision = std::log(cfg.decision_level);

  Trajectory traj;
  std::vector<double> db(cells, 0.0);
  std::vector<double> eta(cells, 0.0);
  std::vector<double> p = probabilities_of(lm);

  auto record = [&](std::uint64_t step) {
    traj.times.push_back(static_cast<double>(step) * dt);
    traj.probs.push_back(p);
    traj.log_sq_norm.push_back(log_squared_norm_of(lm));
  };

  std::size_t next_sample = 0;
  while (next_sample < sample_steps.size() && sample_steps[next_sample] == 0) {
    record(0);
    ++next_sample;
  }

  for (std::uint64_t step = 1; step <= n_steps; ++step) {
    if (!unitary) {
      if (drifted) {
        std::fill(eta.begin(), eta.end(), 0.0);
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t n = 0; n < cells; ++n) eta[n] += p[k] * occ[k][n];
      }
      for (std::size_t n = 0; n < cells; ++n) {
        db[n] = rng.next_normal(sigma);
        if (drifted) db[n] += 2.0 * lambda * eta[n] * dt;
      }
      step_log_magnitudes(lm, occ, db, dt, lambda);
      for (std::size_t k = 0; k < K; ++k) {
        if (!std::isfinite(lm[k])) {
          traj.failed = true;
          traj.failure_time = static_cast<double>(step) * dt;
          return traj;
        }
      }
    }

    const double lsn = log_squared_norm_of(lm);
    for (std::size_t k = 0; k < K; ++k) p[k] = std::exp(2.0 * lm[k] - lsn);

    std::size_t leader = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (lm[k] > lm[leader]) leader = k;

    if (!traj.t_level && K >= 2) {
      double best_loser = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K; ++k)
        if (k != leader) best_loser = std::max(best_loser, lm[k]);
      if (best_loser - lm[leader] <= -cfg.collapse_level)
        traj.t_level = static_cast<double>(step) * dt;
    }

    if (!traj.t_decision) {
      if (2.0 * lm[leader] - lsn >= log_decision) {
        traj.t_decision = static_cast<double>(step) * dt;
        traj.winner = leader;
      }
    } else if (traj.winner && leader != *traj.winner) {
      traj.winner_changed = true;
    }

    while (next_sample < sample_steps.size() && sample_steps[next_sample] == step) {
      record(step);
      ++next_sample;
    }
  }

  const bool carries_weight =
      cfg.scheme == Scheme::raw_weighted || cfg.scheme == Scheme::coefficient_independent;
  traj.log_weight = carries_weight ? log_squared_norm_of(lm) : 0.0;
  return traj;
}

}  // namespace detail

// Deterministic given (master_seed, trial_index); safe to call from many
// threads at once.
inline Trajectory evolve(const Scenario& sc, const RunConfig& cfg, std::uint64_t trial_index) {
  return detail::evolve_impl(sc, cfg, trial_index, 1.0);
}

}  // namespace csl

#endif
