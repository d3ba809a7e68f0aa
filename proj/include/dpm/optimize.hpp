#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace dpm {

struct OptimOptions {
  double gtol = 1e-8;      // gradient infinity norm
  double xtol = 1e-10;     // step infinity norm
  int max_iter = 500;
  double fd_scale = 6e-6;  // central-difference step, scaled by 1 + |x_j|
  bool fallback = true;    // Nelder-Mead restart when the line search fails
  bool gauss_newton = false; // take the supplied curvature at every step instead of the BFGS update
  double ftol = 0.0;       // stop when the objective falls by less than ftol * |f| over 3 iterations
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

struct Objective {
  std::function<double(const Eigen::VectorXd&)> value;
  // optional: gradient and, if H0 is non-null, a positive definite Hessian
  // guess for the initial inverse-Hessian of BFGS
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd*)> gradient;
};

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                            double scale);

OptimResult bfgs(const Objective& obj, const Eigen::VectorXd& x0, const OptimOptions& opt);
OptimResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                        int max_iter = 4000, double ftol = 1e-15);
// BFGS, then Nelder-Mead and a second BFGS pass if the first one stalls
OptimResult minimize(const Objective& obj, const Eigen::VectorXd& x0, const OptimOptions& opt);

} // namespace dpm
