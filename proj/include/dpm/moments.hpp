#pragma once

#include <string>
#include <vector>

#include "dpm/model.hpp"
#include "dpm/transition.hpp"

namespace dpm {

// One valid moment function. Regular ids are phi - zeta for the chain
// (target, t, offsets). Pure ids (AR(1) without covariates) are
// phi_t - phi_s for the same same-state target.
struct MomentId {
  Family family = Family::ARP;
  std::vector<int> target;  // ARP: y_1..y_p; otherwise {k}
  int t = 0;
  std::vector<int> offsets; // strictly descending, nonempty for regular ids
  bool pure = false;
  int s = 0;                // pure ids only

  ChainSpec chain() const;
  std::string label() const;
};

// canonical order: t ascending, offset subsets in descending-lexicographic
// order, then target in support order (ARP: y_1 most significant)
std::vector<MomentId> enumerate_moments(const ModelSpec& spec);
// pure AR(1): all (k, t, s) with 2 <= t <= T-1, 1 <= s < t
std::vector<MomentId> enumerate_pure_moments(const ModelSpec& spec);
// closed-form family size (ARP), -1 for other families
long long moment_count_formula(const ModelSpec& spec);

void check_moment(const ModelSpec& spec, const MomentId& id);

double psi(const ModelSpec& spec, const MomentId& id, const PanelUnit& unit, const Theta& th);
// evaluator already positioned at the path of interest; no checks
double psi(const Evaluator& ev, const MomentId& id);

// Sum of absolute distinct values psi takes over every outcome path given the
// unit's y0 and x (duplicates collapsed at 1e-12). 1 when psi is identically 0.
double rescale_factor(const ModelSpec& spec, const MomentId& id, const PanelUnit& unit, const Theta& th);

// All moments of one unit in a single pass: values at the observed path and,
// optionally, the rescale factors.
struct UnitMoments {
  std::vector<double> value;
  std::vector<double> factor;
};
UnitMoments evaluate_unit(const ModelSpec& spec, const std::vector<MomentId>& ids, const PanelUnit& unit,
                          const Theta& th, bool with_factors);

// For one initial condition, the histories that carry every structurally
// distinct non-zero psi value, found by comparing all histories at two
// random (theta, x) probes. Collapsing equal values at the actual point is
// still done on the representatives, so factors match the full enumeration.
class RescaleStructure {
 public:
  RescaleStructure(const ModelSpec& spec, const std::vector<MomentId>& ids, const std::vector<int>& y0);
  struct Visit {
    long long history;
    std::vector<int> moments;
  };
  const std::vector<Visit>& visits() const { return visits_; }
  const std::vector<int>& y0() const { return y0_; }
  int representatives() const { return reps_; }

 private:
  std::vector<int> y0_;
  std::vector<Visit> visits_;
  int reps_ = 0;
};
UnitMoments evaluate_unit(const ModelSpec& spec, const std::vector<MomentId>& ids, const PanelUnit& unit,
                          const Theta& th, const RescaleStructure& rs);

// AR(1) h-form / g-form quantities at period t (2 <= t <= T-1)
struct KitazawaForms {
  double U = 0, Upsilon = 0, hU = 0, hUpsilon = 0;
};
KitazawaForms kitazawa_forms(const ModelSpec& spec, const PanelUnit& unit, const Theta& th, int t);

// AR(1), T = 3 expanded forms of psi^{k|k}(t=2, s=1) written as sums over
// outcome patterns
double closed_form_psi_t3(const ModelSpec& spec, int k, const PanelUnit& unit, const Theta& th);
// derivative of closed_form_psi_t3 with respect to (gamma, beta)
std::vector<double> closed_form_psi_t3_grad(const ModelSpec& spec, int k, const PanelUnit& unit, const Theta& th);

// static logit (gamma = 0) moment on the adjacent pair (t1, t1+1)
double static_logit_psi(const ModelSpec& spec, const PanelUnit& unit, const std::vector<double>& beta, int t1 = 1);

// AR(2), T = 4: psi^{0|0,0} in the limit where the period-2 index tends to -infinity
double psi_limit_ar2(const ModelSpec& spec, const PanelUnit& unit, const Theta& th);

// pure AR(1), T = 3, y0 = 0: conditional score as a multiple of psi^{0|0} + psi^{1|1}
struct EfficientScore {
  double prefactor = 0, psi00 = 0, psi11 = 0, value = 0;
};
double efficient_score_prefactor(double gamma);
// conditional likelihood score at y0 = 0, from the t = 2, s = 1 weighted-chain pair
EfficientScore efficient_score_ar1_pure(const ModelSpec& spec, const PanelUnit& unit, double gamma);

} // namespace dpm
