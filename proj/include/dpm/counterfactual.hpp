#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpm/gmm.hpp"
#include "dpm/model.hpp"

namespace dpm {

// |x(layer, k, t) - center| <= tol; layer, k and t are 1-based
struct XBand {
  int layer = 1, k = 1, t = 1;
  double center = 0.0, tol = 0.0;
};

struct Subpopulation {
  std::optional<std::vector<int>> y0;  // exact match when set
  std::vector<XBand> bands;

  bool matches(const ModelSpec& spec, const PanelUnit& u) const;
  std::string describe() const;
};

struct AverageEstimate {
  double value = 0.0;
  double se = 0.0;        // sampling error with theta held fixed
  double se_theta = 0.0;  // delta-method term, 0 unless a covariance was supplied
  double se_total = 0.0;
  long long n = 0;
};

// Mean of the transition function for st over the subpopulation. Off-diagonal
// targets exist only for binary AR(p) models (1 - phi of the complement).
AverageEstimate average_transition_probability(const Dataset& data, const Theta& th, const Subpopulation& sub,
                                               const TransitionState& st,
                                               const Eigen::MatrixXd* theta_cov = nullptr);

// Pi^{1|1,rest} - (1 - Pi^{0|0,rest}) at period t; rest holds the older p-1 lags (default zeros)
AverageEstimate ame(const Dataset& data, const Theta& th, const Subpopulation& sub, int t,
                    const std::vector<int>& rest = {}, const Eigen::MatrixXd* theta_cov = nullptr);

// Multi-period counterfactuals: the product of s transition probabilities
// along a path equals mu + sum_j lambda_j pi(0 | state_j) for every value of
// the fixed effect.
struct PlanTerm {
  double lambda = 0.0;
  int t = 0;               // transition into period t + 1
  std::vector<int> state;  // lags, most recent first
  bool complement = false; // pi(0|state) read as 1 - phi^{1|state}
};

struct PartialFractionPlan {
  int t = 0;                 // first transition goes into period t + 1
  std::vector<int> from;     // p lags, most recent first
  std::vector<int> path;     // k_1..k_s
  double mu = 0.0;
  std::vector<PlanTerm> terms;
  double min_pole_gap = 0.0; // smallest gap between the log poles
  double check_residual = 0.0;
};

struct IndexCollision : DomainError {
  using DomainError::DomainError;
};

PartialFractionPlan plan_multiperiod(const ModelSpec& spec, const Theta& th, int t, const std::vector<int>& from,
                                     const std::vector<int>& path, const PanelUnit& x);

// mu + sum lambda_j pi(0|state_j, a) from the model
double plan_value(const ModelSpec& spec, const Theta& th, const PartialFractionPlan& plan, const PanelUnit& x,
                  double a);
// product of the s transition probabilities at a
double path_probability(const ModelSpec& spec, const Theta& th, int t, const std::vector<int>& from,
                        const std::vector<int>& path, const PanelUnit& x, double a);
// max residual of the plan identity over the given fixed-effect values
double plan_residual(const ModelSpec& spec, const Theta& th, const PartialFractionPlan& plan, const PanelUnit& x,
                     const std::vector<double>& a_values);

// Per-unit value of the plan from observables
double plan_observable(const ModelSpec& spec, const Theta& th, const PartialFractionPlan& plan, const PanelUnit& u);

// Sample mean over the subpopulation. With per_unit set the coefficients are
// rebuilt from each unit's covariates; otherwise the plan is used as given.
AverageEstimate multiperiod_average(const Dataset& data, const Theta& th, const PartialFractionPlan& plan,
                                    const Subpopulation& sub, bool per_unit = true);

} // namespace dpm
