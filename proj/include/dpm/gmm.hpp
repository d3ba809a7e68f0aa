#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpm/model.hpp"
#include "dpm/moments.hpp"
#include "dpm/optimize.hpp"

namespace dpm {

// Instruments

struct InstrumentAtom {
  enum class Kind { Constant, Initial, Covariate, Custom };
  Kind kind = Kind::Constant;
  int index = 0;  // Initial: component 1..; Covariate: layer 1..
  int k = 0;      // Covariate: 1..Kx
  int t = 0;      // Covariate: period (<= 0 reads pre-sample covariates)
  std::string name;

  std::string to_string() const;
  static InstrumentAtom parse(const std::string& s);
};

using InstrumentFn = std::function<double(const ModelSpec&, const PanelUnit&)>;
void register_instrument(const std::string& name, InstrumentFn fn);

struct InstrumentSpec {
  std::vector<InstrumentAtom> atoms;

  static InstrumentSpec constant_only();
  // comma separated atoms: const, y0:i, y0:i..j, x:layer:k:t, x:layer:k:t1..t2, custom:name
  static InstrumentSpec parse(const std::string& s);
  std::string to_string() const;
  int size() const { return static_cast<int>(atoms.size()); }
  void check(const ModelSpec& spec) const;
};

std::vector<double> instrument_values(const ModelSpec& spec, const InstrumentSpec& inst, const PanelUnit& unit);

// psi block (x) instrument block: entry j * L + l = psi_j * z_l
std::vector<double> stack_moments(const ModelSpec& spec, const std::vector<MomentId>& ids,
                                  const InstrumentSpec& inst, const PanelUnit& unit, const Theta& th,
                                  bool rescaled);

// Data and moment problems

struct Dataset {
  ModelSpec spec;
  std::vector<PanelUnit> units;
};

// Sample moments over a dataset. Identical units are merged into weighted
// groups held in a canonical order, so reordering or replicating units does
// not change any floating-point sum.
class MomentProblem {
 public:
  MomentProblem(const Dataset& data, std::vector<MomentId> ids, InstrumentSpec inst, bool rescaled);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<MomentId>& ids() const { return ids_; }
  const InstrumentSpec& instruments() const { return inst_; }
  bool rescaled() const { return rescaled_; }
  long long n_units() const { return n_; }
  int dim() const { return static_cast<int>(ids_.size()) * inst_.size(); }

  Eigen::VectorXd mean(const Eigen::VectorXd& theta) const;
  // N^-1 sum m m'
  Eigen::MatrixXd second_moment(const Eigen::VectorXd& theta) const;
  // central differences of the mean, step scale * (1 + |theta_j|)
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta, double scale) const;
  // fraction of units with psi_j == 0 at theta, per moment id
  std::vector<double> null_fraction(const Eigen::VectorXd& theta) const;

 private:
  void unit_moments(const Theta& th, std::size_t g, double* out) const;

  ModelSpec spec_;
  std::vector<MomentId> ids_;
  InstrumentSpec inst_;
  bool rescaled_;
  std::vector<PanelUnit> groups_;
  std::vector<double> count_;
  std::vector<std::vector<double>> z_;
  std::vector<RescaleStructure> structures_;  // one per distinct initial condition
  std::vector<int> structure_of_;
  long long n_ = 0;
};

// Inverse action of a weight matrix
class WeightMatrix {
 public:
  static WeightMatrix identity(int dim);
  static WeightMatrix from_second_moment(const Eigen::MatrixXd& S);

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& v) const;
  Eigen::MatrixXd inverse() const;
  const Eigen::MatrixXd& matrix() const { return W_; }
  bool is_identity() const { return identity_; }
  double condition() const { return condition_; }
  bool ridged() const { return ridged_; }

 private:
  bool identity_ = true;
  bool ridged_ = false;
  double condition_ = 1.0;
  Eigen::MatrixXd W_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

double gmm_objective(const MomentProblem& prob, const Eigen::VectorXd& theta, const WeightMatrix& W);

// Estimation

enum class EstimatorKind { Identity, Rescaled, Iterated };
std::string estimator_name(EstimatorKind k);
EstimatorKind parse_estimator(const std::string& s);

struct EstimateConfig {
  EstimatorKind kind = EstimatorKind::Rescaled;
  InstrumentSpec instruments = InstrumentSpec::constant_only();
  std::vector<MomentId> ids;            // empty: enumerate_moments
  std::optional<Theta> theta0;          // default: zeros
  OptimOptions optim;
  int max_outer = 50;                   // iterated only
  double outer_tol = 1e-4;
  double prune_threshold = 1.0;         // drop ids null for more than this fraction of units
  bool compute_variance = true;
};

struct Covariance {
  Eigen::MatrixXd avar;        // asymptotic variance of sqrt(N)(theta_hat - theta)
  Eigen::MatrixXd covariance;  // avar / N
  Eigen::VectorXd se;
  int rank = 0;
  bool pseudo_inverse = false;
};

struct GmmResult {
  EstimatorKind kind = EstimatorKind::Rescaled;
  Theta theta;
  Eigen::VectorXd theta_flat;
  double objective = 0.0;
  int iterations = 0;        // optimizer iterations, summed over rounds
  int rounds = 1;            // weight updates (iterated)
  bool converged = false;
  std::string message;
  double weight_condition = 1.0;
  Covariance cov;
  bool has_covariance = false;
  Eigen::VectorXd moment_means;
  std::vector<MomentId> ids;
  long long n_units = 0;
  std::vector<double> objective_trace;
  std::vector<double> weight_change_trace;
  std::vector<std::string> warnings;
};

GmmResult estimate(const Dataset& data, const EstimateConfig& cfg);

// Sandwich (M'AM)^-1 M'A S A M (M'AM)^-1 with S the sample second moment
Covariance asymptotic_variance(const MomentProblem& prob, const Eigen::VectorXd& theta, const WeightMatrix& W);

// Efficiency bound, AR(1) with T = 3

struct HeterogeneityMixture {
  std::vector<double> support;
  std::vector<double> weight;
};

struct BoundPoint {
  Eigen::MatrixXd D;      // 2 x dim theta, E[d psi / d theta | y0, x]
  Eigen::Matrix2d Sigma;  // E[psi psi' | y0, x]
  Eigen::MatrixXd Omega;  // dim theta x 2, D' Sigma^-1
  std::vector<double> prob; // outcome probabilities, history index order
  bool ok = true;
};

struct EfficiencyBound {
  Eigen::MatrixXd V0;
  std::vector<BoundPoint> points;
  int dropped = 0;
};

// x_sample supplies covariates and the initial condition; psi = (psi^{0|0}, psi^{1|1}) at t = 2
EfficiencyBound efficiency_bound_ar1_t3(const ModelSpec& spec, const std::vector<PanelUnit>& x_sample,
                                        const Theta& th, const HeterogeneityMixture& mix);
// efficient moment -Omega(x) psi at the unit's observed history
Eigen::VectorXd efficient_moment(const ModelSpec& spec, const BoundPoint& pt, const PanelUnit& unit,
                                 const Theta& th);

} // namespace dpm
