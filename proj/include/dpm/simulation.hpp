#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dpm/gmm.hpp"
#include "dpm/model.hpp"

namespace dpm {

enum class EffectRule {
  CovariateSum,  // A_m = sum of the layer's covariates over all periods / sqrt(count), zero without covariates
  Constant,      // A_m = effect_value for every unit
  None           // A = 0
};

// Covariates are iid N(0,1) for every period, layer and component, including
// the pre-sample periods used by the initial draws (p for AR(p), one otherwise).
struct Design {
  ModelSpec spec;
  Theta theta;
  long long N = 1000;
  std::uint64_t seed = 1;
  EffectRule effect = EffectRule::CovariateSum;
  double effect_value = 0.0;
};

Design ar3_design(long long N, std::uint64_t seed);
Design var1_design(long long N, std::uint64_t seed);
// generic design with moderate state dependence for any family
Design default_design(const ModelSpec& spec, long long N, std::uint64_t seed);

// Units are drawn from streams keyed by (seed, unit), so any prefix of a
// larger run is reproduced exactly.
Dataset simulate(const Design& d);
PanelUnit simulate_unit(const Design& d, long long unit);
FixedEffect effect_of(const Design& d, const PanelUnit& u);

struct EstimatorRun {
  std::string name;
  EstimateConfig config;
};

struct ParamSummary {
  std::string name;
  double truth = 0.0;
  double median_bias = 0.0;
  double mae = 0.0;  // median absolute error
};

struct EstimatorSummary {
  std::string name;
  int reps = 0;
  int converged = 0;
  double convergence = 0.0;
  std::vector<ParamSummary> params;
  std::vector<Eigen::VectorXd> estimates;  // one per rep, converged or not
  std::vector<bool> ok;
};

struct MonteCarloResult {
  Design design;
  int reps = 0;
  std::vector<EstimatorSummary> estimators;
};

// Rep r simulates with seed hash(seed, r). Estimators without theta0 start at
// the true parameter. Medians are taken over converged reps.
MonteCarloResult monte_carlo(const Design& design, const std::vector<EstimatorRun>& estimators, int reps,
                             std::uint64_t seed);
std::uint64_t rep_seed(std::uint64_t seed, int rep);

double median(std::vector<double> v);

// Gaussian kernel density on an even grid, Silverman bandwidth
std::vector<std::pair<double, double>> kernel_density(const std::vector<double>& v, int points = 101);

} // namespace dpm
