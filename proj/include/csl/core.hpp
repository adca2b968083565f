#ifndef CSL_CORE_HPP
#define CSL_CORE_HPP

// Domain types for the collapse laboratory.
//
// A superposed state is a list of branches, each a number-operator eigenstate:
// an occupation count per spatial cell plus a complex amplitude stored as
// (log-magnitude, phase). Log storage matters: occupation counts can reach
// 3e10, and the stochastic update multiplies amplitudes by exponentials whose
// arguments are proportional to those counts. In log space the update is
// exact addition; in linear space it would overflow on the first step.
//
// Norms are NOT conserved during collapse evolution; the construction-time
// normalization below applies only to initial states.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csl/numeric.hpp"

namespace csl {

using Json = nlohmann::ordered_json;

inline constexpr const char* kArtifactVersion = "0.1.0";

// Occupation counts above this are rejected: they would lose integer
// precision once converted to double inside the update.
inline constexpr std::uint64_t kMaxExactCount = 1ULL << 53;

// Scenarios above this many cells are rejected by the builders unless the
// caller raises the cap. Cells whose count is identical across branches
// multiply all amplitudes equally and never affect relative dynamics, so
// large physical systems are represented by the cells that differ.
inline constexpr std::size_t kDefaultCellCap = 1'000'000;

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Model parameters

struct ModelParams {
  double lambda = 1.0;       // collapse rate, 1/s
  double cell_volume = 1.0;  // cm^3
  double density = 1.0;      // particles per cm^3
};

inline ModelParams make_params(double lambda, double cell_volume, double density) {
  if (!std::isfinite(lambda) || !std::isfinite(cell_volume) || !std::isfinite(density))
    throw ValidationError("params must be finite");
  if (lambda <= 0.0) throw ValidationError("lambda must be positive");
  if (cell_volume <= 0.0) throw ValidationError("cell_volume must be positive");
  if (density < 0.0) throw ValidationError("density must be non-negative");
  return ModelParams{lambda, cell_volume, density};
}

// Dimensionless mode: unit rate, unit cell, unit density.
inline ModelParams unit_params() { return ModelParams{1.0, 1.0, 1.0}; }

// The published parameter point: rate 1e-16/s, 1e-15 cm^3 cells, and a
// density chosen so a filled cell holds 3e10 particles. The density itself
// is back-derived from that per-cell figure, not an independently stated
// number.
inline ModelParams paper_params() { return ModelParams{1e-16, 1e-15, 3e25}; }

inline double per_cell_count(const ModelParams& p) { return p.density * p.cell_volume; }

// ---------------------------------------------------------------------------
// State types

struct OccupationVector {
  std::vector<std::uint64_t> counts;
};

struct Branch {
  double log_magnitude = 0.0;  // natural log of |amplitude|
  double phase = 0.0;          // radians; constant under H = 0
  OccupationVector occupation;
};

struct SuperposedState {
  std::vector<Branch> branches;
  std::size_t cell_count = 0;
};

struct Scenario {
  std::string name;
  ModelParams params;
  SuperposedState initial;
};

enum class Scheme {
  raw_weighted,
  physical_drift,
  coefficient_independent,
  unitary,
};

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::raw_weighted: return "raw-weighted";
    case Scheme::physical_drift: return "physical-drift";
    case Scheme::coefficient_independent: return "coefficient-independent";
    case Scheme::unitary: return "unitary";
  }
  return "unknown";
}

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "raw-weighted") return Scheme::raw_weighted;
  if (s == "physical-drift") return Scheme::physical_drift;
  if (s == "coefficient-independent") return Scheme::coefficient_independent;
  if (s == "unitary") return Scheme::unitary;
  throw ValidationError("unknown scheme: " + s);
}

struct RunConfig {
  double dt = 1e-3;                  // seconds (dimensionless when lambda = 1)
  double t_max = 1.0;                // horizon
  std::uint64_t trials = 1;          // ensemble size
  double collapse_level = 3.0;       // log amplitude-ratio threshold for timing
  double decision_level = 1.0 - 1e-6;  // branch probability declaring a winner
  Scheme scheme = Scheme::physical_drift;
  std::uint64_t master_seed = 0;
  std::vector<double> sample_times;  // record times, ascending, within [0, t_max]
};

// ---------------------------------------------------------------------------
// Construction helpers

// log |a| from |a|^2.
inline double log_magnitude_from_prob(double prob) { return 0.5 * std::log(prob); }

inline double squared_magnitude(const Branch& b) {
  return std::exp(2.0 * b.log_magnitude);
}

inline std::vector<std::string> validate(const SuperposedState& s) {
  std::vector<std::string> v;
  if (s.branches.empty()) v.push_back("state must have at least one branch");
  double norm = 0.0;
  for (std::size_t k = 0; k < s.branches.size(); ++k) {
    const Branch& b = s.branches[k];
    if (b.occupation.counts.size() != s.cell_count) {
      std::ostringstream os;
      os << "occupation length mismatch on branch " << (k + 1) << ": "
         << b.occupation.counts.size() << " vs cell_count " << s.cell_count;
      v.push_back(os.str());
    }
    if (!std::isfinite(b.log_magnitude)) {
      std::ostringstream os;
      os << "non-finite log magnitude on branch " << (k + 1);
      v.push_back(os.str());
    }
    if (!std::isfinite(b.phase)) {
      std::ostringstream os;
      os << "non-finite phase on branch " << (k + 1);
      v.push_back(os.str());
    }
    for (std::uint64_t c : b.occupation.counts) {
      if (c > kMaxExactCount) {
        std::ostringstream os;
        os << "occupation count above 2^53 on branch " << (k + 1);
        v.push_back(os.str());
        break;
      }
    }
    norm += squared_magnitude(b);
  }
  if (std::abs(norm - 1.0) > 1e-12) {
    std::ostringstream os;
    os << "initial norm != 1 (got " << norm << ")";
    v.push_back(os.str());
  }
  return v;
}

inline std::vector<std::string> validate(const ModelParams& p) {
  std::vector<std::string> v;
  if (!(p.lambda > 0.0) || !std::isfinite(p.lambda)) v.push_back("lambda must be positive");
  if (!(p.cell_volume > 0.0) || !std::isfinite(p.cell_volume))
    v.push_back("cell_volume must be positive");
  if (p.density < 0.0 || !std::isfinite(p.density)) v.push_back("density must be non-negative");
  return v;
}

// Every violation, not just the first.
inline std::vector<std::string> validate(const Scenario& sc) {
  std::vector<std::string> v = validate(sc.params);
  std::vector<std::string> sv = validate(sc.initial);
  v.insert(v.end(), sv.begin(), sv.end());
  return v;
}

inline std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> v;
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) v.push_back("dt must be positive");
  if (!(c.t_max >= c.dt) || !std::isfinite(c.t_max)) v.push_back("t_max must be >= dt");
  if (c.trials < 1) v.push_back("trials must be >= 1");
  if (!(c.decision_level > 0.5 && c.decision_level < 1.0))
    v.push_back("decision_level must lie in (0.5, 1)");
  if (!(c.collapse_level > 0.0)) v.push_back("collapse_level must be positive");
  double prev = -std::numeric_limits<double>::infinity();
  for (double t : c.sample_times) {
    if (!(t >= 0.0) || t > c.t_max * (1.0 + 1e-12)) {
      v.push_back("sample_times must lie within [0, t_max]");
      break;
    }
    if (t < prev) {
      v.push_back("sample_times must be ascending");
      break;
    }
    prev = t;
  }
  return v;
}

inline void require_valid(const Scenario& sc) {
  auto v = validate(sc);
  if (!v.empty()) throw ValidationError(v.front());
}

inline void require_valid(const RunConfig& c) {
  auto v = validate(c);
  if (!v.empty()) throw ValidationError(v.front());
}

// ---------------------------------------------------------------------------
// Scenario builders. Pure functions: identical arguments give identical
// scenarios, byte-for-byte in serialized form.

// Two branches over a single cell: branch 1 holds delta_n particles, branch 2
// none. The count difference is the whole story for collapse dynamics.
inline Scenario two_branch_delta_scenario(const ModelParams& params,
                                          std::uint64_t delta_n, double a1_squared,
                                          std::string name = "two-branch-delta") {
  if (!(a1_squared > 0.0 && a1_squared < 1.0))
    throw ValidationError("a1_squared must lie in (0, 1)");
  if (delta_n > kMaxExactCount) throw ValidationError("delta_n above 2^53");
  Scenario sc;
  sc.name = std::move(name);
  sc.params = params;
  sc.initial.cell_count = 1;
  Branch b1{log_magnitude_from_prob(a1_squared), 0.0, OccupationVector{{delta_n}}};
  Branch b2{log_magnitude_from_prob(1.0 - a1_squared), 0.0, OccupationVector{{0}}};
  sc.initial.branches = {b1, b2};
  return sc;
}

// A pointer in two positions: branch 1 fills cells 1..m, branch 2 fills
// cells m+1..2m, at the density-determined per-cell count.
inline Scenario pointer_scenario(const ModelParams& params, std::uint64_t occupied_cells,
                                 double a1_squared, std::size_t cell_cap = kDefaultCellCap,
                                 std::string name = "pointer") {
  if (occupied_cells < 1) throw ValidationError("occupied_cells must be >= 1");
  if (!(a1_squared > 0.0 && a1_squared < 1.0))
    throw ValidationError("a1_squared must lie in (0, 1)");
  if (occupied_cells > cell_cap / 2) throw ValidationError("cell count exceeds cap");
  const double raw_count = per_cell_count(params);
  if (!(raw_count >= 0.0) || raw_count > static_cast<double>(kMaxExactCount))
    throw ValidationError("per-cell count outside exact integer range");
  const auto count = static_cast<std::uint64_t>(std::llround(raw_count));
  const std::size_t m = static_cast<std::size_t>(occupied_cells);
  Scenario sc;
  sc.name = std::move(name);
  sc.params = params;
  sc.initial.cell_count = 2 * m;
  OccupationVector occ1, occ2;
  occ1.counts.assign(2 * m, 0);
  occ2.counts.assign(2 * m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    occ1.counts[i] = count;
    occ2.counts[m + i] = count;
  }
  sc.initial.branches = {
      Branch{log_magnitude_from_prob(a1_squared), 0.0, std::move(occ1)},
      Branch{log_magnitude_from_prob(1.0 - a1_squared), 0.0, std::move(occ2)}};
  return sc;
}

// General builder for K branches over one cell with given probabilities and
// pairwise occupation counts.
inline Scenario multi_branch_scenario(const ModelParams& params,
                                      const std::vector<std::uint64_t>& counts,
                                      const std::vector<double>& probs,
                                      std::string name = "multi-branch") {
  if (counts.size() != probs.size() || counts.empty())
    throw ValidationError("counts and probs must have equal nonzero length");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("branch probabilities must lie in (0, 1)");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("branch probabilities must sum to 1");
  Scenario sc;
  sc.name = std::move(name);
  sc.params = params;
  sc.initial.cell_count = 1;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] > kMaxExactCount) throw ValidationError("occupation count above 2^53");
    sc.initial.branches.push_back(
        Branch{log_magnitude_from_prob(probs[k]), 0.0, OccupationVector{{counts[k]}}});
  }
  return sc;
}

// ---------------------------------------------------------------------------
// JSON serialization. Field names mirror the type definitions; key order is
// fixed so identical inputs serialize to identical bytes.

inline Json to_json(const ModelParams& p) {
  return Json{{"lambda", p.lambda}, {"cell_volume", p.cell_volume}, {"density", p.density}};
}

inline ModelParams params_from_json(const Json& j) {
  return make_params(j.at("lambda").get<double>(), j.at("cell_volume").get<double>(),
                     j.at("density").get<double>());
}

inline Json to_json(const SuperposedState& s) {
  Json branches = Json::array();
  for (const Branch& b : s.branches) {
    branches.push_back(Json{{"log_magnitude", b.log_magnitude},
                            {"phase", b.phase},
                            {"occupation", b.occupation.counts}});
  }
  return Json{{"cell_count", s.cell_count}, {"branches", std::move(branches)}};
}

inline SuperposedState state_from_json(const Json& j) {
  SuperposedState s;
  s.cell_count = j.at("cell_count").get<std::size_t>();
  for (const Json& bj : j.at("branches")) {
    Branch b;
    b.log_magnitude = bj.at("log_magnitude").get<double>();
    b.phase = bj.at("phase").get<double>();
    b.occupation.counts = bj.at("occupation").get<std::vector<std::uint64_t>>();
    s.branches.push_back(std::move(b));
  }
  return s;
}

inline Json to_json(const Scenario& sc) {
  return Json{{"name", sc.name}, {"params", to_json(sc.params)}, {"initial", to_json(sc.initial)}};
}

inline Scenario scenario_from_json(const Json& j) {
  Scenario sc;
  sc.name = j.at("name").get<std::string>();
  sc.params = params_from_json(j.at("params"));
  sc.initial = state_from_json(j.at("initial"));
  return sc;
}

inline Json to_json(const RunConfig& c) {
  return Json{{"dt", c.dt},
              {"t_max", c.t_max},
              {"trials", c.trials},
              {"collapse_level", c.collapse_level},
              {"decision_level", c.decision_level},
              {"scheme", to_string(c.scheme)},
              {"master_seed", c.master_seed},
              {"sample_times", c.sample_times}};
}

inline RunConfig config_from_json(const Json& j) {
  RunConfig c;
  c.dt = j.at("dt").get<double>();
  c.t_max = j.at("t_max").get<double>();
  c.trials = j.at("trials").get<std::uint64_t>();
  if (j.contains("collapse_level")) c.collapse_level = j.at("collapse_level").get<double>();
  if (j.contains("decision_level")) c.decision_level = j.at("decision_level").get<double>();
  c.scheme = scheme_from_string(j.at("scheme").get<std::string>());
  c.master_seed = j.at("master_seed").get<std::uint64_t>();
  if (j.contains("sample_times"))
    c.sample_times = j.at("sample_times").get<std::vector<double>>();
  return c;
}

// Evenly spaced record times dt-aligned over (0, t_max]; convenience for
// configs that do not list sample_times explicitly.
inline std::vector<double> default_sample_times(const RunConfig& c, std::size_t n_points = 10) {
  std::vector<double> ts;
  const auto n_steps = static_cast<std::uint64_t>(std::llround(c.t_max / c.dt));
  if (n_points > n_steps) n_points = static_cast<std::size_t>(n_steps);
  for (std::size_t i = 1; i <= n_points; ++i) {
    const auto step =
        static_cast<std::uint64_t>(std::llround(static_cast<double>(i * n_steps) /
                                                static_cast<double>(n_points)));
    ts.push_back(static_cast<double>(step) * c.dt);
  }
  return ts;
}

}  // namespace csl

#endif
