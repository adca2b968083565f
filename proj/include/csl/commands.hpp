#ifndef CSL_COMMANDS_HPP
#define CSL_COMMANDS_HPP

// Command implementations behind the CLI. Each command reads a JSON config,
// runs, writes its artifacts plus a manifest into the output directory, and
// returns an exit code:
//   0  success / statistical pass
//   1  scientific or statistical failure
//   2  usage or configuration error
//
// Every manifest embeds the fully resolved config (after overrides), so
// `rerun` can reproduce all numeric outputs bit-for-bit.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "csl/branchlab.hpp"
#include "csl/constraints.hpp"
#include "csl/core.hpp"
#include "csl/counterexample.hpp"
#include "csl/ensemble.hpp"
#include "csl/io.hpp"

namespace csl::cli {

namespace fs = std::filesystem;

struct Overrides {
  std::optional<std::uint64_t> trials;
  std::optional<std::uint64_t> seed;
  bool emit_trajectories = false;
};

inline constexpr int kExitPass = 0;
inline constexpr int kExitStatFail = 1;
inline constexpr int kExitUsage = 2;

// Scenario from a config node: either an explicit serialized scenario or a
// named builder with its arguments.
inline Scenario scenario_from_config(const Json& j) {
  if (!j.contains("builder")) return scenario_from_json(j);
  const std::string builder = j.at("builder").get<std::string>();
  const ModelParams params = params_from_json(j.at("params"));
  const std::string name = j.value("name", builder);
  if (builder == "two-branch-delta") {
    return two_branch_delta_scenario(params, j.at("delta_n").get<std::uint64_t>(),
                                     j.at("a1_squared").get<double>(), name);
  }
  if (builder == "pointer") {
    const auto cap = j.value("cell_cap", static_cast<std::uint64_t>(kDefaultCellCap));
    return pointer_scenario(params, j.at("occupied_cells").get<std::uint64_t>(),
                            j.at("a1_squared").get<double>(), cap, name);
  }
  if (builder == "multi-branch") {
    return multi_branch_scenario(params, j.at("counts").get<std::vector<std::uint64_t>>(),
                                 j.at("probs").get<std::vector<double>>(), name);
  }
  throw ValidationError("unknown scenario builder: " + builder);
}

inline RunConfig run_config_from(const Json& j, const Overrides& ov) {
  RunConfig cfg = config_from_json(j);
  if (ov.trials) cfg.trials = *ov.trials;
  if (ov.seed) cfg.master_seed = *ov.seed;
  if (cfg.sample_times.empty()) cfg.sample_times = default_sample_times(cfg);
  require_valid(cfg);
  return cfg;
}

class ManifestWriter {
 public:
  ManifestWriter(std::string command, const fs::path& out_dir)
      : out_dir_(out_dir) {
    manifest_.command = std::move(command);
    manifest_.started_at = iso_timestamp();
    fs::create_directories(out_dir_);
  }

  void set_config(Json config, std::uint64_t master_seed) {
    manifest_.config = std::move(config);
    manifest_.master_seed = master_seed;
  }

  void write_json(const std::string& name, const Json& j) {
    write_json_file(out_dir_ / name, j);
    manifest_.outputs.push_back(name);
  }

  void write_text(const std::string& name, const std::string& content) {
    write_text_file(out_dir_ / name, content);
    manifest_.outputs.push_back(name);
  }

  void finish() {
    manifest_.finished_at = iso_timestamp();
    write_json_file(out_dir_ / "manifest.json", to_json(manifest_));
  }

 private:
  fs::path out_dir_;
  RunManifest manifest_;
};

// ---------------------------------------------------------------------------
// born: ensemble + the scheme-appropriate Born statistic.
//
// Outcome frequencies are the Born statement for the physical-drift and
// coefficient-independent schemes. For raw-weighted runs the Born statement
// lives in the weights (weighted mean probabilities = initial probabilities,
// mean squared norm = 1), so the martingale identity is the verdict there.
// An optional "equivalence" block runs the same scenario under a second
// scheme and requires the weighted mean probabilities to agree within five
// combined standard errors at every sample time.

inline int cmd_born_json(const Json& config, const fs::path& out_dir, const Overrides& ov) {
  const Scenario sc = scenario_from_config(config.at("scenario"));
  require_valid(sc);
  const RunConfig cfg = run_config_from(config.at("run"), ov);
  const bool emit = ov.emit_trajectories || config.value("emit_trajectories", false);

  ManifestWriter manifest("born", out_dir);
  Json resolved = config;
  resolved["scenario"] = to_json(sc);
  resolved["run"] = to_json(cfg);
  resolved["emit_trajectories"] = emit;
  manifest.set_config(resolved, cfg.master_seed);

  const std::vector<Trajectory> trajs = run_trajectories(sc, cfg);
  const EnsembleReport rep = summarize(sc, cfg, trajs);
  if (rep.ess_low)
    std::cerr << "warning: raw-weighted ensemble is degenerate (ESS " << rep.ess << " < 0.1 * "
              << cfg.trials << " trials); weighted statistics are untrustworthy\n";

  Json out;
  out["report"] = to_json(rep);
  bool pass = rep.healthy;
  std::string verdict_note;

  if (cfg.trials < kMinTrialsForStats) {
    pass = false;
    verdict_note = "insufficient statistics";
  } else if (cfg.scheme == Scheme::physical_drift ||
             cfg.scheme == Scheme::coefficient_independent) {
    std::vector<double> expected = rep.initial_probs;
    if (config.contains("expected")) expected = config.at("expected").get<std::vector<double>>();
    const BornTest bt = born_test(rep, expected);
    out["born"] = to_json(bt);
    out["born"]["expected"] = expected;
    pass = pass && bt.pass;
    if (cfg.scheme == Scheme::physical_drift) {
      const MartingaleTest mt = martingale_test(rep);
      out["martingale"] = to_json(mt);
      pass = pass && mt.pass;
    }
  } else {
    const MartingaleTest mt = martingale_test(rep);
    out["martingale"] = to_json(mt);
    pass = pass && mt.pass;
  }

  if (config.contains("equivalence")) {
    RunConfig other = cfg;
    other.scheme = scheme_from_string(config.at("equivalence").at("scheme").get<std::string>());
    std::uint64_t s = cfg.master_seed ^ 0x94D049BB133111EBULL;
    other.master_seed = splitmix64(s);
    const EnsembleReport rep_b = run_ensemble(sc, other);
    const EnsembleReport& raw_rep = rep.scheme == Scheme::raw_weighted ? rep : rep_b;
    // Agreement is asserted at the sample times where the raw ensemble is
    // healthy (per-time ESS at or above a tenth of the trials); beyond that
    // the importance weights degenerate and the plug-in standard error stops
    // meaning anything. All z values are reported either way.
    double max_z = 0.0, max_gated_z = 0.0;
    std::size_t gated = 0;
    Json zs = Json::array();
    for (std::size_t ti = 0; ti < rep.sample_times.size(); ++ti) {
      const TimePointStat& a = rep.mean_p[ti][0];
      const TimePointStat& b = rep_b.mean_p[ti][0];
      const double se = std::sqrt(a.se * a.se + b.se * b.se);
      const double z = se > 0.0 ? (a.mean - b.mean) / se : 0.0;
      zs.push_back(z);
      max_z = std::max(max_z, std::abs(z));
      if (raw_rep.ess_at[ti] >= 0.1 * static_cast<double>(cfg.trials)) {
        ++gated;
        max_gated_z = std::max(max_gated_z, std::abs(z));
      }
    }
    const bool agree = gated > 0 && max_gated_z <= 5.0;
    out["equivalence"] = Json{{"against_scheme", to_string(other.scheme)},
                              {"z_by_time", zs},
                              {"max_abs_z", max_z},
                              {"max_gated_abs_z", max_gated_z},
                              {"gated_times", gated},
                              {"raw_ess", raw_rep.ess},
                              {"raw_ess_at", raw_rep.ess_at},
                              {"agree", agree}};
    pass = pass && agree;
  }

  out["pass"] = pass;
  if (!verdict_note.empty()) out["note"] = verdict_note;
  manifest.write_json("report.json", out);
  if (emit) manifest.write_text("trajectories.csv", trajectories_to_csv(trajs));
  manifest.finish();
  return pass ? kExitPass : kExitStatFail;
}

// ---------------------------------------------------------------------------
// timing: collapse-time scaling study, decay slopes and the hook catalog.

inline Json to_json(const ScalingFit& fit) {
  Json pts = Json::array();
  for (const ScalingPoint& p : fit.points)
    pts.push_back(Json{{"delta_n", p.delta_n},
                       {"median_t", p.median_t},
                       {"predicted_t", p.predicted_t}});
  return Json{{"points", std::move(pts)},
              {"slope", fit.slope},
              {"intercept", fit.intercept},
              {"residual_rms", fit.residual_rms}};
}

inline Json to_json(const HookEntry& e) {
  Json j{{"name", e.name}, {"delta_n", e.delta_n}};
  j["t_collapse"] = e.never_collapses ? Json("never collapses") : Json(e.t_collapse);
  j["detectable"] = e.detectable;
  j["never_collapses"] = e.never_collapses;
  return j;
}

inline std::string hooks_to_text(std::span<const HookEntry> hooks) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "name" << std::setw(16) << "delta_n" << std::setw(16)
     << "t_collapse (s)" << "verdict\n";
  for (const HookEntry& e : hooks) {
    os << std::setw(20) << e.name << std::setw(16) << e.delta_n;
    if (e.never_collapses)
      os << std::setw(16) << "inf" << "never collapses\n";
    else
      os << std::setw(16) << format_double(e.t_collapse)
         << (e.detectable ? "collapses below perception threshold\n" : "unacceptably long\n");
  }
  return os.str();
}

inline int cmd_timing_json(const Json& config, const fs::path& out_dir, const Overrides& ov) {
  const ModelParams params = params_from_json(config.at("params"));

  ManifestWriter manifest("timing", out_dir);
  Json resolved = config;

  RunConfig base;
  if (config.contains("run")) {
    base = run_config_from(config.at("run"), ov);
    resolved["run"] = to_json(base);
  }
  manifest.set_config(resolved, base.master_seed);

  Json out;
  if (config.contains("scaling")) {
    const Json& sj = config.at("scaling");
    const auto dns = sj.at("delta_n_list").get<std::vector<std::uint64_t>>();
    const double a1sq = sj.value("a1_squared", 0.5);
    std::vector<std::uint64_t> distinct = dns;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) {
      out["scaling"] = Json{{"skipped", "need >= 3 distinct delta_n values for a fit"}};
    } else {
      const ScalingFit fit = scaling_study(params, dns, base, a1sq);
      out["scaling"] = to_json(fit);
    }
  }

  if (config.contains("decay")) {
    const Json& dj = config.at("decay");
    Json decays = Json::array();
    for (std::uint64_t dn : dj.at("delta_n_list").get<std::vector<std::uint64_t>>()) {
      RunConfig cfg = base;
      const double scale = 1.0 / (static_cast<double>(dn) * static_cast<double>(dn));
      cfg.dt = base.dt * scale;
      cfg.t_max = base.t_max * scale;
      cfg.sample_times.clear();
      for (int i = 1; i <= 40; ++i)
        cfg.sample_times.push_back(cfg.t_max * static_cast<double>(i) / 40.0);
      if (dj.contains("trials")) cfg.trials = dj.at("trials").get<std::uint64_t>();
      const Scenario sc = two_branch_delta_scenario(params, dn, 0.5);
      const std::vector<Trajectory> trajs = run_trajectories(sc, cfg);
      std::vector<double> slopes;
      for (const Trajectory& t : trajs) {
        if (!t.winner || t.failed) continue;
        try {
          slopes.push_back(decay_slope(t));
        } catch (const ValidationError&) {
        }
      }
      if (slopes.empty()) throw ValidationError("decay window too short on every trajectory");
      const MeanSe ms = mean_and_se(slopes);
      const double expected = -params.lambda * static_cast<double>(dn) * static_cast<double>(dn);
      decays.push_back(Json{{"delta_n", dn},
                            {"mean_slope", ms.mean},
                            {"se", ms.se},
                            {"expected_slope", expected},
                            {"trajectories", slopes.size()}});
    }
    out["decay"] = std::move(decays);
  }

  if (config.contains("hooks")) {
    ModelParams hook_params = params;
    if (config.contains("hook_params")) hook_params = params_from_json(config.at("hook_params"));
    std::vector<std::pair<std::string, std::uint64_t>> entries;
    for (const Json& h : config.at("hooks"))
      entries.emplace_back(h.at("name").get<std::string>(), h.at("delta_n").get<std::uint64_t>());
    const std::vector<HookEntry> hooks = hook_catalog(hook_params, entries);
    Json hj = Json::array();
    for (const HookEntry& e : hooks) hj.push_back(to_json(e));
    out["hooks"] = std::move(hj);
    manifest.write_text("hooks.txt", hooks_to_text(hooks));
  }

  manifest.write_json("timing.json", out);
  manifest.finish();
  return kExitPass;
}

// ---------------------------------------------------------------------------
// nogo: paired amplitude-swap runs plus the three-way table.

inline Json to_json(const NoGoVerdict& v) {
  return Json{{"frequencies_agree", v.frequencies_agree},
              {"agreement_max_abs_z", v.agreement.max_abs_z},
              {"born_max_abs_z_a", v.born_max_abs_z_a},
              {"born_max_abs_z_b", v.born_max_abs_z_b},
              {"born_violated", v.born_violated},
              {"degenerate", v.degenerate},
              {"no_go_demonstrated", v.no_go_demonstrated},
              {"outcome_freq_a", v.report_a.outcome_freq},
              {"outcome_freq_b", v.report_b.outcome_freq}};
}

inline int cmd_nogo_json(const Json& config, const fs::path& out_dir, const Overrides& ov) {
  const ModelParams params =
      config.contains("params") ? params_from_json(config.at("params")) : unit_params();
  const auto delta_n = config.value("delta_n", kNoGoDeltaN);
  const double a1 = config.value("a1_squared_first", 0.7);
  RunConfig cfg = config.contains("run")
                      ? run_config_from(config.at("run"), ov)
                      : reference_no_go_config(20260808ULL, Scheme::coefficient_independent);
  if (ov.trials) cfg.trials = *ov.trials;
  if (ov.seed) cfg.master_seed = *ov.seed;

  ManifestWriter manifest("nogo", out_dir);
  Json resolved = config;
  resolved["run"] = to_json(cfg);
  manifest.set_config(resolved, cfg.master_seed);

  Json out;
  bool pass = true;
  if (cfg.trials < kMinTrialsForStats) {
    out["note"] = "insufficient statistics";
    pass = false;
  } else {
    const Scenario sa = two_branch_delta_scenario(params, delta_n, a1);
    const Scenario sb = two_branch_delta_scenario(params, delta_n, 1.0 - a1);
    const NoGoVerdict verdict = run_no_go(sa, sb, cfg);
    out["verdict"] = to_json(verdict);
    pass = verdict.no_go_demonstrated;

    const auto seeds = config.value("stability_seeds", std::uint64_t{1});
    std::uint64_t holds = 0;
    Json tables = Json::array();
    std::string table_text;
    for (std::uint64_t i = 0; i < seeds; ++i) {
      std::uint64_t s = cfg.master_seed + i;
      const ThreeWayTable table =
          born_requires_dependence_report(a1, splitmix64(s), cfg.trials);
      if (table.pattern_holds) ++holds;
      tables.push_back(to_json(table));
      if (i == 0) table_text = to_text(table);
    }
    out["three_way_tables"] = std::move(tables);
    out["pattern_holds_count"] = holds;
    out["stability_seeds"] = seeds;
    const std::uint64_t need = seeds == 1 ? 1 : (9 * seeds + 9) / 10;
    pass = pass && holds >= need;
    manifest.write_text("table.txt", table_text);
  }
  out["pass"] = pass;
  manifest.write_json("nogo.json", out);
  manifest.finish();
  return pass ? kExitPass : kExitStatFail;
}

// ---------------------------------------------------------------------------
// branchlab: the isolation / linearity / cross-element suite.

inline std::string wave_to_csv(const LatticeWave& w) {
  std::ostringstream os;
  os << "site,x,re,im,prob_density\n";
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double x = static_cast<double>(j) * w.dx;
    os << j << "," << format_double(x) << "," << format_double(w.values[j].real()) << ","
       << format_double(w.values[j].imag()) << "," << format_double(std::norm(w.values[j]))
       << "\n";
  }
  return os.str();
}

inline int cmd_branchlab_json(const Json& config, const fs::path& out_dir, const Overrides& ov) {
  (void)ov;
  const auto grid = config.at("grid_size").get<std::size_t>();
  const double dx = config.value("dx", 1.0);
  const auto centers = config.at("centers").get<std::vector<double>>();
  const auto widths = config.at("widths").get<std::vector<double>>();
  const auto momenta = config.value("momenta", std::vector<double>{0.0, 0.0});
  const double a1sq = config.value("a_plus_squared", 0.5);
  const int pad = config.value("pad", 8);
  const double dt = config.at("dt").get<double>();
  const auto steps = config.at("steps").get<std::uint64_t>();
  if (centers.size() != 2 || widths.size() != 2 || momenta.size() != 2)
    throw ValidationError("centers, widths and momenta must each list two values");

  ManifestWriter manifest("branchlab", out_dir);
  manifest.set_config(config, 0);

  const double a_plus = std::sqrt(a1sq);
  const double a_minus = std::sqrt(1.0 - a1sq);
  const LatticeWave w0 = init_two_packets(grid, dx, centers[0], centers[1], widths[0], widths[1],
                                          momenta[0], momenta[1], a_plus, a_minus, pad);

  const double norm0 = total_norm(w0);
  const double np0 = region_norm(w0, w0.region_plus);
  const double nm0 = region_norm(w0, w0.region_minus);

  const LatticeWave w1 = evolve_unitary(w0, dt, steps);

  Json out;
  if (w1.halted) {
    out["halted"] = true;
    out["collision_step"] = *w1.collision_step;
    manifest.write_json("invariants.json", out);
    manifest.finish();
    return kExitStatFail;
  }

  const double norm1 = total_norm(w1);
  const double drift_per_step = std::abs(norm1 - norm0) / static_cast<double>(steps);
  const double np1 = region_norm(w1, w1.region_plus);
  const double nm1 = region_norm(w1, w1.region_minus);
  const LatticeWave bp = branch_component(w1, BranchSide::plus);
  const LatticeWave bm = branch_component(w1, BranchSide::minus);
  const Complex cross = cross_element(bp, bm);

  const LatticeWave pa = init_two_packets(grid, dx, centers[0], centers[1], widths[0], widths[1],
                                          momenta[0], momenta[1], 1.0, 0.0, pad);
  const LatticeWave pb = init_two_packets(grid, dx, centers[0], centers[1], widths[0], widths[1],
                                          momenta[0], momenta[1], 0.0, 1.0, pad);
  const double lin_res = linearity_residual(pa, pb, a_plus, a_minus, dt, steps);
  const double leakage = max_outside_regions(w1);

  const bool pass = drift_per_step <= 1e-12 && std::abs(np1 - np0) <= 1e-10 &&
                    std::abs(nm1 - nm0) <= 1e-10 && cross == Complex{0.0, 0.0} &&
                    lin_res <= 1e-12 && leakage < 1e-13;

  out["halted"] = false;
  out["steps"] = steps;
  out["total_norm_initial"] = norm0;
  out["total_norm_final"] = norm1;
  out["norm_drift_per_step"] = drift_per_step;
  out["region_plus_norm_initial"] = np0;
  out["region_plus_norm_final"] = np1;
  out["region_minus_norm_initial"] = nm0;
  out["region_minus_norm_final"] = nm1;
  out["cross_element"] = Json{{"re", cross.real()}, {"im", cross.imag()}};
  out["cross_element_exactly_zero"] = cross == Complex{0.0, 0.0};
  out["linearity_residual"] = lin_res;
  out["support_leakage"] = leakage;
  out["pass"] = pass;
  manifest.write_json("invariants.json", out);
  if (config.value("emit_snapshots", false)) {
    manifest.write_text("wave_initial.csv", wave_to_csv(w0));
    manifest.write_text("wave_final.csv", wave_to_csv(w1));
  }
  manifest.finish();
  return pass ? kExitPass : kExitStatFail;
}

// ---------------------------------------------------------------------------
// constraints

inline int cmd_constraints_json(const Json& config, const fs::path& out_dir, const Overrides& ov) {
  (void)ov;
  const CouplingSet c = couplings_from_json(config);
  const ConstraintVerdict v = check_all(c);
  ManifestWriter manifest("constraints", out_dir);
  manifest.set_config(to_json(c), 0);
  manifest.write_json("verdict.json", to_json(v));
  manifest.write_text("verdict.txt", to_text(v));
  manifest.finish();
  std::cout << to_text(v);
  return v.overall ? kExitPass : kExitStatFail;
}

// ---------------------------------------------------------------------------
// Dispatch and file-based entry points

inline int dispatch(const std::string& command, const Json& config, const fs::path& out_dir,
                    const Overrides& ov) {
  if (command == "born") return cmd_born_json(config, out_dir, ov);
  if (command == "timing") return cmd_timing_json(config, out_dir, ov);
  if (command == "nogo") return cmd_nogo_json(config, out_dir, ov);
  if (command == "branchlab") return cmd_branchlab_json(config, out_dir, ov);
  if (command == "constraints") return cmd_constraints_json(config, out_dir, ov);
  throw ValidationError("unknown command: " + command);
}

inline int run_command(const std::string& command, const fs::path& config_path,
                       const fs::path& out_dir, const Overrides& ov) {
  try {
    const Json config = Json::parse(read_text_file(config_path));
    return dispatch(command, config, out_dir, ov);
  } catch (const Json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

// Re-run a recorded manifest: same command, same resolved config, fresh
// output directory. Numeric outputs must match the original byte-for-byte.
inline int cmd_rerun(const fs::path& manifest_path, const fs::path& out_dir) {
  try {
    const Json m = Json::parse(read_text_file(manifest_path));
    const std::string command = m.at("command").get<std::string>();
    return dispatch(command, m.at("config"), out_dir, Overrides{});
  } catch (const Json::exception& e) {
    std::cerr << "manifest error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "manifest error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace csl::cli

#endif
