#ifndef CSL_CONSTRAINTS_HPP
#define CSL_CONSTRAINTS_HPP

// Published experimental bounds on collapse-model couplings.
//
// Bound conventions follow the published inequalities literally: the two
// coupling-ratio bounds are closed, the interference bound on the rate is
// strict.

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "csl/core.hpp"

namespace csl {

struct CouplingSet {
  double alpha_elec_over_nuc = 1.0 / 2000.0;  // electron/nucleon coupling ratio
  double alpha_n_over_p = 1.0014;             // neutron/proton coupling ratio
  double lambda = 1e-16;                      // collapse rate, 1/s
  double m_elec_over_nuc = 1.0 / 2000.0;      // electron/nucleon mass ratio
  double m_n_over_p = 1.0014;                 // neutron/proton mass ratio
};

// Coupling proportional to mass, at the presumed rate. Passes everything.
inline CouplingSet mass_proportional_couplings() { return CouplingSet{}; }

struct ConstraintItem {
  std::string name;
  std::string bound;
  double value = 0.0;
  bool pass = false;
};

struct ConstraintVerdict {
  std::vector<ConstraintItem> items;
  bool overall = false;
};

inline void validate_couplings(const CouplingSet& c) {
  if (c.alpha_elec_over_nuc < 0.0 || c.alpha_n_over_p < 0.0)
    throw ValidationError("coupling ratios must be non-negative");
  if (!(c.lambda > 0.0)) throw ValidationError("lambda must be positive");
}

// Germanium decay bound: 0 <= alpha_e/alpha_nuc <= 13 * m_e/m_nuc (closed).
inline ConstraintItem check_electron_nucleon(const CouplingSet& c) {
  validate_couplings(c);
  const double bound = 13.0 * c.m_elec_over_nuc;
  ConstraintItem item;
  item.name = "electron-nucleon coupling";
  std::ostringstream os;
  os << "0 <= alpha_e/alpha_nuc <= " << bound;
  item.bound = os.str();
  item.value = c.alpha_elec_over_nuc;
  item.pass = c.alpha_elec_over_nuc >= 0.0 && c.alpha_elec_over_nuc <= bound;
  return item;
}

// Solar-neutrino bound: |alpha_n/alpha_p - m_n/m_p| <= 4e-3 (closed).
inline ConstraintItem check_neutron_proton(const CouplingSet& c) {
  validate_couplings(c);
  ConstraintItem item;
  item.name = "neutron-proton coupling";
  std::ostringstream os;
  os << "|alpha_n/alpha_p - " << c.m_n_over_p << "| <= 0.004";
  item.bound = os.str();
  item.value = c.alpha_n_over_p;
  item.pass = std::abs(c.alpha_n_over_p - c.m_n_over_p) <= 4e-3;
  return item;
}

// Buckyball interference bound: lambda < 1e-6 /s (strict).
inline ConstraintItem check_interference_bound(const CouplingSet& c) {
  validate_couplings(c);
  ConstraintItem item;
  item.name = "interference bound";
  item.bound = "lambda < 1e-6 /s";
  item.value = c.lambda;
  item.pass = c.lambda < 1e-6;
  return item;
}

inline ConstraintVerdict check_all(const CouplingSet& c) {
  ConstraintVerdict v;
  v.items = {check_electron_nucleon(c), check_neutron_proton(c), check_interference_bound(c)};
  v.overall = true;
  for (const ConstraintItem& item : v.items) v.overall = v.overall && item.pass;
  return v;
}

inline CouplingSet couplings_from_json(const Json& j) {
  CouplingSet c;
  c.alpha_elec_over_nuc = j.at("alpha_elec_over_nuc").get<double>();
  c.alpha_n_over_p = j.at("alpha_n_over_p").get<double>();
  c.lambda = j.at("lambda").get<double>();
  if (j.contains("m_elec_over_nuc")) c.m_elec_over_nuc = j.at("m_elec_over_nuc").get<double>();
  if (j.contains("m_n_over_p")) c.m_n_over_p = j.at("m_n_over_p").get<double>();
  validate_couplings(c);
  return c;
}

inline Json to_json(const CouplingSet& c) {
  return Json{{"alpha_elec_over_nuc", c.alpha_elec_over_nuc},
              {"alpha_n_over_p", c.alpha_n_over_p},
              {"lambda", c.lambda},
              {"m_elec_over_nuc", c.m_elec_over_nuc},
              {"m_n_over_p", c.m_n_over_p}};
}

inline Json to_json(const ConstraintVerdict& v) {
  Json items = Json::array();
  for (const ConstraintItem& i : v.items)
    items.push_back(Json{{"name", i.name}, {"bound", i.bound}, {"value", i.value}, {"pass", i.pass}});
  return Json{{"items", std::move(items)}, {"overall", v.overall}};
}

inline std::string to_text(const ConstraintVerdict& v) {
  std::ostringstream os;
  os << std::left;
  for (const ConstraintItem& i : v.items) {
    os << std::setw(28) << i.name << std::setw(44) << i.bound << std::setw(14)
       << i.value << (i.pass ? "pass" : "FAIL") << "\n";
  }
  os << std::setw(28) << "overall" << std::setw(44) << "" << std::setw(14) << ""
     << (v.overall ? "pass" : "FAIL") << "\n";
  return os.str();
}

}  // namespace csl

#endif
