#include "dpm/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace dpm {

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                            double scale) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = scale * (1.0 + std::abs(x[j]));
    xp[j] = x[j] + h;
    const double fp = f(xp);
    xp[j] = x[j] - h;
    const double fm = f(xp);
    xp[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

OptimResult bfgs(const Objective& obj, const Eigen::VectorXd& x0, const OptimOptions& opt) {
  const Eigen::Index n = x0.size();
  OptimResult r;
  int evals = 0;
  auto f = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = obj.value(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  auto grad = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g, Eigen::MatrixXd* H0) {
    if (obj.gradient) {
      obj.gradient(x, g, H0);
    } else {
      g = fd_gradient(f, x, opt.fd_scale);
    }
  };

  Eigen::VectorXd x = x0;
  double fx = f(x);
  Eigen::VectorXd g(n);
  Eigen::MatrixXd H0 = Eigen::MatrixXd::Zero(n, n);
  grad(x, g, &H0);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  {
    Eigen::LLT<Eigen::MatrixXd> llt(H0);
    if (H0.norm() > 0 && llt.info() == Eigen::Success) H = llt.solve(Eigen::MatrixXd::Identity(n, n));
  }

  r.message = "iteration limit";
  std::vector<double> fhist{fx};
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    if (!std::isfinite(fx)) {
      r.message = "non-finite objective";
      break;
    }
    if (g.lpNorm<Eigen::Infinity>() < opt.gtol) {
      r.converged = true;
      r.message = "gradient tolerance";
      break;
    }
    Eigen::VectorXd d = -H * g;
    if (g.dot(d) >= 0) {
      H = Eigen::MatrixXd::Identity(n, n);
      d = -g;
    }
    double alpha = 1.0, fn = fx;
    Eigen::VectorXd xn;
    bool ok = false;
    for (int ls = 0; ls < 60; ++ls) {
      xn = x + alpha * d;
      fn = f(xn);
      if (fn <= fx + 1e-4 * alpha * g.dot(d)) {
        ok = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!ok) {
      // predicted decrease below what the objective can resolve
      if (-g.dot(d) <= 64.0 * std::numeric_limits<double>::epsilon() * std::abs(fx)) {
        r.converged = true;
        r.message = "objective at rounding floor";
      } else {
        r.message = "line search failed";
      }
      break;
    }
    const Eigen::VectorXd s = xn - x;
    Eigen::VectorXd gn(n);
    Eigen::MatrixXd Hn;
    grad(xn, gn, opt.gauss_newton ? &Hn : nullptr);
    const Eigen::VectorXd y = gn - g;
    x = xn;
    fx = fn;
    g = gn;
    if (s.lpNorm<Eigen::Infinity>() < opt.xtol) {
      r.converged = true;
      r.message = "step tolerance";
      ++it;
      break;
    }
    fhist.push_back(fx);
    if (opt.ftol > 0 && fhist.size() > 3 && fhist[fhist.size() - 4] - fx <= opt.ftol * std::abs(fx)) {
      r.converged = true;
      r.message = "objective tolerance";
      ++it;
      break;
    }
    if (opt.gauss_newton) {
      Eigen::LLT<Eigen::MatrixXd> llt(Hn);
      if (Hn.size() && llt.info() == Eigen::Success) {
        H = llt.solve(Eigen::MatrixXd::Identity(n, n));
        continue;
      }
    }
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
  }
  r.x = x;
  r.f = fx;
  r.iterations = it;
  r.evaluations = evals;
  return r;
}

OptimResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                        int max_iter, double ftol) {
  const int n = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> pts(n + 1, x0);
  std::vector<double> fv(n + 1);
  int evals = 0;
  auto F = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  for (int i = 0; i < n; ++i) pts[i + 1][i] += 0.1 * (1.0 + std::abs(x0[i]));
  for (int i = 0; i <= n; ++i) fv[i] = F(pts[i]);
  std::vector<int> idx(n + 1);
  OptimResult r;
  int it = 0;
  for (; it < max_iter; ++it) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    const int best = idx[0], worst = idx[n], second = idx[n - 1];
    double size = 0.0;
    for (int i = 1; i <= n; ++i) size = std::max(size, (pts[idx[i]] - pts[best]).lpNorm<Eigen::Infinity>());
    if (std::abs(fv[worst] - fv[best]) <= ftol * (1.0 + std::abs(fv[best])) && size < 1e-8) {
      r.converged = true;
      break;
    }
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) c += pts[idx[i]];
    c /= n;
    const Eigen::VectorXd xr = c + (c - pts[worst]);
    const double fr = F(xr);
    if (fr < fv[best]) {
      const Eigen::VectorXd xe = c + 2.0 * (c - pts[worst]);
      const double fe = F(xe);
      if (fe < fr) {
        pts[worst] = xe;
        fv[worst] = fe;
      } else {
        pts[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      pts[worst] = xr;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      const Eigen::VectorXd xc = outside ? Eigen::VectorXd(c + 0.5 * (xr - c)) : Eigen::VectorXd(c + 0.5 * (pts[worst] - c));
      const double fc = F(xc);
      if (fc < std::min(fr, fv[worst])) {
        pts[worst] = xc;
        fv[worst] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          pts[idx[i]] = pts[best] + 0.5 * (pts[idx[i]] - pts[best]);
          fv[idx[i]] = F(pts[idx[i]]);
        }
      }
    }
  }
  const int best = static_cast<int>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  r.x = pts[best];
  r.f = fv[best];
  r.iterations = it;
  r.evaluations = evals;
  r.message = r.converged ? "simplex converged" : "simplex iteration limit";
  return r;
}

OptimResult minimize(const Objective& obj, const Eigen::VectorXd& x0, const OptimOptions& opt) {
  OptimResult r = bfgs(obj, x0, opt);
  if (r.converged || !opt.fallback) return r;
  OptimResult nm = nelder_mead(obj.value, r.x);
  OptimResult r2 = bfgs(obj, nm.f < r.f ? nm.x : r.x, opt);
  r2.iterations += r.iterations + nm.iterations;
  r2.evaluations += r.evaluations + nm.evaluations;
  if (!r2.converged) r2.message = "no convergence after simplex restart (" + r2.message + ")";
  else r2.message = "converged after simplex restart (" + r2.message + ")";
  if (r2.f > r.f && !r2.converged) {
    r.iterations = r2.iterations;
    r.evaluations = r2.evaluations;
    r.message = r2.message;
    return r;
  }
  return r2;
}

} // namespace dpm
