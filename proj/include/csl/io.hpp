#ifndef CSL_IO_HPP
#define CSL_IO_HPP

// Serialization of run artifacts: trajectory CSV, report JSON and the run
// manifest. All numeric output uses round-trip formatting so a re-run can be
// compared byte-for-byte. Timestamps live only in the manifest; every other
// artifact is a pure function of (config, scenario, seed).

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "csl/core.hpp"
#include "csl/counterexample.hpp"
#include "csl/engine.hpp"
#include "csl/ensemble.hpp"

namespace csl {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// One row per sample time: t, p_1..p_K, log_sq_norm.
inline std::string trajectory_to_csv(const Trajectory& traj) {
  std::ostringstream os;
  const std::size_t K = traj.probs.empty() ? 0 : traj.probs.front().size();
  os << "t";
  for (std::size_t k = 1; k <= K; ++k) os << ",p_" << k;
  os << ",log_sq_norm\n";
  for (std::size_t ti = 0; ti < traj.times.size(); ++ti) {
    os << format_double(traj.times[ti]);
    for (std::size_t k = 0; k < K; ++k) os << "," << format_double(traj.probs[ti][k]);
    os << "," << format_double(traj.log_sq_norm[ti]) << "\n";
  }
  return os.str();
}

// Branch indices in external artifacts are 1-based, matching the p_k column
// names.
inline Json trajectory_trailer(const Trajectory& traj) {
  Json j;
  j["winner"] = traj.winner ? Json(*traj.winner + 1) : Json(nullptr);
  j["t_decision"] = traj.t_decision ? Json(*traj.t_decision) : Json(nullptr);
  j["t_level"] = traj.t_level ? Json(*traj.t_level) : Json(nullptr);
  j["log_weight"] = traj.log_weight;
  if (traj.failed) {
    j["failed"] = true;
    j["failure_time"] = *traj.failure_time;
  }
  return j;
}

// Bulk dump: the per-trajectory CSV rows prefixed with a trial column.
inline std::string trajectories_to_csv(std::span<const Trajectory> trajs) {
  std::ostringstream os;
  std::size_t K = 0;
  for (const Trajectory& t : trajs)
    if (!t.probs.empty()) {
      K = t.probs.front().size();
      break;
    }
  os << "trial,t";
  for (std::size_t k = 1; k <= K; ++k) os << ",p_" << k;
  os << ",log_sq_norm\n";
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const Trajectory& t = trajs[i];
    for (std::size_t ti = 0; ti < t.times.size(); ++ti) {
      os << i << "," << format_double(t.times[ti]);
      for (std::size_t k = 0; k < K; ++k) os << "," << format_double(t.probs[ti][k]);
      os << "," << format_double(t.log_sq_norm[ti]) << "\n";
    }
  }
  return os.str();
}

inline Json to_json(const TimePointStat& s) { return Json{{"mean", s.mean}, {"se", s.se}}; }

inline Json to_json(const EnsembleReport& rep) {
  Json j;
  j["scenario"] = rep.scenario_name;
  j["scheme"] = to_string(rep.scheme);
  j["trials"] = rep.trials;
  j["config"] = to_json(rep.config);
  j["initial_probs"] = rep.initial_probs;
  j["sample_times"] = rep.sample_times;
  Json mp = Json::array();
  for (const auto& row : rep.mean_p) {
    Json r = Json::array();
    for (const TimePointStat& s : row) r.push_back(to_json(s));
    mp.push_back(std::move(r));
  }
  j["mean_p"] = std::move(mp);
  Json msn = Json::array();
  for (const TimePointStat& s : rep.mean_sq_norm) msn.push_back(to_json(s));
  j["mean_sq_norm"] = std::move(msn);
  j["outcome_counts"] = rep.outcome_counts;
  j["outcome_freq"] = rep.outcome_freq;
  j["declared_count"] = rep.declared_count;
  j["declared_fraction"] = rep.declared_fraction;
  j["ess"] = rep.ess;
  j["ess_low"] = rep.ess_low;
  j["ess_at"] = rep.ess_at;
  if (rep.collapse_times) {
    j["collapse_times"] = Json{{"median", rep.collapse_times->median},
                               {"q25", rep.collapse_times->q25},
                               {"q75", rep.collapse_times->q75},
                               {"count", rep.collapse_times->count}};
  } else {
    j["collapse_times"] = nullptr;
  }
  j["failure_count"] = rep.failure_count;
  j["healthy"] = rep.healthy;
  j["winner_change_fraction"] = rep.winner_change_fraction;
  j["born_n_eff"] = rep.born_n_eff;
  return j;
}

inline Json to_json(const BornTest& bt) {
  return Json{{"z", bt.z}, {"max_abs_z", bt.max_abs_z}, {"n_eff", bt.n_eff}, {"pass", bt.pass}};
}

inline Json to_json(const MartingaleTest& mt) {
  return Json{{"max_abs_z", mt.max_abs_z}, {"detail", mt.detail}, {"pass", mt.pass}};
}

inline Json to_json(const ThreeWayTable& t) {
  Json rows = Json::array();
  for (const ThreeWayRow& r : t.rows)
    rows.push_back(Json{{"scheme", r.scheme},
                        {"statistic", r.statistic},
                        {"configuration", r.configuration},
                        {"max_abs_z", r.max_abs_z},
                        {"pass", r.pass}});
  return Json{{"rows", std::move(rows)},
              {"insufficient", t.insufficient},
              {"pattern_holds", t.pattern_holds}};
}

inline std::string to_text(const ThreeWayTable& t) {
  std::ostringstream os;
  os << std::left;
  if (t.insufficient) {
    os << "insufficient statistics\n";
    return os.str();
  }
  for (const ThreeWayRow& r : t.rows) {
    os << std::setw(26) << r.scheme << std::setw(66) << r.statistic << std::setw(22)
       << r.configuration << "max|z|=" << std::setw(12) << r.max_abs_z
       << (r.pass ? "pass" : "FAIL") << "\n";
  }
  os << "pattern pass/pass/fail: " << (t.pattern_holds ? "holds" : "DOES NOT HOLD") << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Run manifest

struct RunManifest {
  std::string command;
  Json config;  // fully resolved, after overrides
  std::uint64_t master_seed = 0;
  std::string artifact_version = kArtifactVersion;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;
};

inline std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json to_json(const RunManifest& m) {
  return Json{{"command", m.command},
              {"config", m.config},
              {"master_seed", m.master_seed},
              {"artifact_version", m.artifact_version},
              {"started_at", m.started_at},
              {"finished_at", m.finished_at},
              {"outputs", m.outputs}};
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace csl

#endif
