#include "dpm/counterfactual.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "dpm/transition.hpp"

namespace dpm {

bool Subpopulation::matches(const ModelSpec& spec, const PanelUnit& u) const {
  if (y0 && *y0 != u.y0) return false;
  for (const auto& b : bands) {
    if (b.layer < 1 || b.layer > spec.layers() || b.k < 1 || b.k > spec.Kx || b.t < 1 || b.t > spec.T)
      throw DimensionError("covariate band names a covariate outside the model");
    if (std::abs(u.xv(spec, b.t, b.layer - 1, b.k - 1) - b.center) > b.tol) return false;
  }
  return true;
}

std::string Subpopulation::describe() const {
  std::ostringstream o;
  o << "y0=";
  if (y0) {
    for (size_t i = 0; i < y0->size(); ++i) o << (i ? "," : "") << (*y0)[i];
  } else {
    o << "any";
  }
  for (const auto& b : bands) o << " x" << b.layer << "." << b.k << "." << b.t << "=" << b.center << "+-" << b.tol;
  return o.str();
}

namespace {

using UnitFn = std::function<double(const Theta&, const PanelUnit&)>;

AverageEstimate subpop_mean(const Dataset& data, const Theta& th, const Subpopulation& sub, const UnitFn& f,
                            const Eigen::MatrixXd* theta_cov) {
  std::vector<const PanelUnit*> units;
  for (const auto& u : data.units)
    if (sub.matches(data.spec, u)) units.push_back(&u);
  if (units.empty()) throw DomainError("empty subpopulation (" + sub.describe() + ")");
  auto mean_at = [&](const Theta& t) {
    double s = 0.0;
    for (const PanelUnit* u : units) s += f(t, *u);
    return s / static_cast<double>(units.size());
  };
  AverageEstimate e;
  e.n = static_cast<long long>(units.size());
  double s = 0.0, ss = 0.0;
  for (const PanelUnit* u : units) {
    const double v = f(th, *u);
    s += v;
    ss += v * v;
  }
  const double n = static_cast<double>(e.n);
  e.value = s / n;
  if (e.n > 1) {
    const double var = std::max(0.0, (ss - n * e.value * e.value) / (n - 1));
    e.se = std::sqrt(var / n);
  }
  if (theta_cov) {
    const Eigen::VectorXd x = th.flat();
    if (theta_cov->rows() != x.size() || theta_cov->cols() != x.size())
      throw DimensionError("parameter covariance has the wrong size");
    Eigen::VectorXd g(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double h = 1e-5 * (1.0 + std::abs(x[j]));
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      g[j] = (mean_at(Theta::from_flat(data.spec, xp)) - mean_at(Theta::from_flat(data.spec, xm))) / (2.0 * h);
    }
    e.se_theta = std::sqrt(std::max(0.0, g.dot(*theta_cov * g)));
  }
  e.se_total = std::sqrt(e.se * e.se + e.se_theta * e.se_theta);
  return e;
}

void check_transition_state(const ModelSpec& spec, const TransitionState& st) {
  ChainSpec c;
  c.target = st;
  c.target.to = st.from.empty() ? 0 : st.from[0];
  check_chain(spec, c);
  if (st.to < 0 || st.to >= spec.support()) throw DimensionError("arrival state out of support");
  if (spec.family != Family::ARP && st.to != st.from[0])
    throw DomainError("off-diagonal transition probabilities are only partially identified in " +
                      family_name(spec.family) + " models");
}

int lag_code_of(const std::vector<int>& state) {
  int lag = 0;
  for (size_t r = 0; r < state.size(); ++r) lag |= state[r] << r;
  return lag;
}

// index of the transition out of `state` into period t + 1, without the fixed effect
double plan_index(const ModelSpec& spec, const Theta& th, const std::vector<int>& state, int t, const PanelUnit& x) {
  return state_index(spec, th, 0, lag_code_of(state)) + covariate_index(spec, th, 0, x.xrow(spec, t + 1));
}

std::string state_text(const std::vector<int>& s) {
  std::string o;
  for (size_t i = 0; i < s.size(); ++i) o += (i ? "," : "") + std::to_string(s[i]);
  return o;
}

} // namespace

AverageEstimate average_transition_probability(const Dataset& data, const Theta& th, const Subpopulation& sub,
                                               const TransitionState& st, const Eigen::MatrixXd* theta_cov) {
  data.spec.check();
  th.check(data.spec);
  check_transition_state(data.spec, st);
  const bool flip = st.to != st.from[0];
  const ModelSpec spec = data.spec;
  return subpop_mean(
      data, th, sub,
      [&](const Theta& t, const PanelUnit& u) {
        Evaluator ev(spec, t, u);
        const double v = ev.phi(st.from.data(), st.t);
        return flip ? 1.0 - v : v;
      },
      theta_cov);
}

AverageEstimate ame(const Dataset& data, const Theta& th, const Subpopulation& sub, int t,
                    const std::vector<int>& rest, const Eigen::MatrixXd* theta_cov) {
  const ModelSpec spec = data.spec;
  spec.check();
  th.check(spec);
  if (spec.family != Family::ARP)
    throw DomainError("average marginal effects are only partially identified in " + family_name(spec.family) +
                      " models");
  std::vector<int> one{1}, zero{0};
  std::vector<int> tail = rest.empty() ? std::vector<int>(spec.p - 1, 0) : rest;
  if ((int)tail.size() != spec.p - 1) throw DimensionError("older lags must have length p - 1");
  one.insert(one.end(), tail.begin(), tail.end());
  zero.insert(zero.end(), tail.begin(), tail.end());
  check_transition_state(spec, TransitionState{one, 1, t});
  check_transition_state(spec, TransitionState{zero, 0, t});
  return subpop_mean(
      data, th, sub,
      [&](const Theta& p, const PanelUnit& u) {
        Evaluator ev(spec, p, u);
        return ev.phi(one.data(), t) + ev.phi(zero.data(), t) - 1.0;
      },
      theta_cov);
}

PartialFractionPlan plan_multiperiod(const ModelSpec& spec, const Theta& th, int t, const std::vector<int>& from,
                                     const std::vector<int>& path, const PanelUnit& x) {
  spec.check();
  th.check(spec);
  if (spec.family != Family::ARP) throw DomainError("multi-period plans are defined for binary AR(p) models");
  if ((int)from.size() != spec.p) throw DimensionError("origin state needs p lags");
  for (int v : from)
    if (v != 0 && v != 1) throw DimensionError("origin state outside {0,1}");
  if (path.empty()) throw DimensionError("target path is empty");
  for (int v : path)
    if (v != 0 && v != 1) throw DimensionError("target path outside {0,1}");
  const int s = static_cast<int>(path.size());
  if (t < spec.p || t + s > spec.T)
    throw DomainError("plan needs p <= t and t + s <= T (t=" + std::to_string(t) + ", s=" + std::to_string(s) + ")");
  if ((int)x.x.size() != spec.T * spec.layers() * spec.Kx) throw DimensionError("covariate array has wrong size");

  PartialFractionPlan plan;
  plan.t = t;
  plan.from = from;
  plan.path = path;
  std::vector<std::vector<int>> states(s);
  states[0] = from;
  for (int j = 1; j < s; ++j) {
    states[j].push_back(path[j - 1]);
    states[j].insert(states[j].end(), states[j - 1].begin(), states[j - 1].end() - 1);
  }
  std::vector<double> c(s);
  for (int j = 0; j < s; ++j) c[j] = plan_index(spec, th, states[j], t + j, x);

  plan.min_pole_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < s; ++i)
    for (int j = i + 1; j < s; ++j) {
      const double gap = std::abs(c[i] - c[j]);
      plan.min_pole_gap = std::min(plan.min_pole_gap, gap);
      if (gap < 1e-8)
        throw IndexCollision("index collision between transitions into periods " + std::to_string(t + i + 1) +
                             " (state " + state_text(states[i]) + ") and " + std::to_string(t + j + 1) + " (state " +
                             state_text(states[j]) + "), gap " + std::to_string(gap));
    }

  int K = 0;
  double kc = 0.0;
  for (int j = 0; j < s; ++j) {
    K += path[j];
    kc += path[j] * c[j];
  }
  plan.mu = K == s ? 1.0 : 0.0;
  // residue at the pole of 1 / (1 + e^{c_j} u), u = e^a
  for (int j = 0; j < s; ++j) {
    double den = 1.0;
    for (int i = 0; i < s; ++i)
      if (i != j) den *= 1.0 - std::exp(c[i] - c[j]);
    const double sign = K % 2 ? -1.0 : 1.0;
    PlanTerm term;
    term.lambda = sign * std::exp(kc - K * c[j]) / den;
    term.t = t + j;
    term.state = states[j];
    term.complement = states[j][0] == 1;
    plan.terms.push_back(term);
  }

  double centre = 0.0;
  for (double v : c) centre += v;
  centre /= s;
  std::vector<double> probes(16);
  for (int i = 0; i < 16; ++i) probes[i] = -centre - 6.0 + 12.0 * i / 15.0;
  plan.check_residual = plan_residual(spec, th, plan, x, probes);
  double scale = 1.0;
  for (const auto& term : plan.terms) scale = std::max(scale, std::abs(term.lambda));
  if (!(plan.check_residual <= 1e-9 * scale))
    throw DomainError("plan reconstruction failed (residual " + std::to_string(plan.check_residual) +
                      ", pole gap " + std::to_string(plan.min_pole_gap) + ")");
  return plan;
}

double plan_value(const ModelSpec& spec, const Theta& th, const PartialFractionPlan& plan, const PanelUnit& x,
                  double a) {
  double v = plan.mu;
  for (const auto& term : plan.terms) {
    const double z = plan_index(spec, th, term.state, term.t, x) + a;
    v += term.lambda * std::exp(-log1pexp(z));
  }
  return v;
}

double path_probability(const ModelSpec& spec, const Theta& th, int t, const std::vector<int>& from,
                        const std::vector<int>& path, const PanelUnit& x, double a) {
  std::vector<int> state = from;
  double lp = 0.0;
  for (size_t j = 0; j < path.size(); ++j) {
    const double z = plan_index(spec, th, state, t + static_cast<int>(j), x) + a;
    lp += (path[j] ? z : 0.0) - log1pexp(z);
    state.insert(state.begin(), path[j]);
    state.pop_back();
  }
  return std::exp(lp);
}

double plan_residual(const ModelSpec& spec, const Theta& th, const PartialFractionPlan& plan, const PanelUnit& x,
                     const std::vector<double>& a_values) {
  double worst = 0.0;
  for (double a : a_values) {
    const double r = std::abs(plan_value(spec, th, plan, x, a) - path_probability(spec, th, plan.t, plan.from, plan.path, x, a));
    worst = std::max(worst, std::isfinite(r) ? r : std::numeric_limits<double>::infinity());
  }
  return worst;
}

double plan_observable(const ModelSpec& spec, const Theta& th, const PartialFractionPlan& plan, const PanelUnit& u) {
  Evaluator ev(spec, th, u);
  double v = plan.mu;
  for (const auto& term : plan.terms) {
    const double f = ev.phi(term.state.data(), term.t);
    v += term.lambda * (term.complement ? 1.0 - f : f);
  }
  return v;
}

AverageEstimate multiperiod_average(const Dataset& data, const Theta& th, const PartialFractionPlan& plan,
                                    const Subpopulation& sub, bool per_unit) {
  const ModelSpec spec = data.spec;
  spec.check();
  th.check(spec);
  return subpop_mean(
      data, th, sub,
      [&](const Theta& p, const PanelUnit& u) {
        if (!per_unit) return plan_observable(spec, p, plan, u);
        const PartialFractionPlan own = plan_multiperiod(spec, p, plan.t, plan.from, plan.path, u);
        return plan_observable(spec, p, own, u);
      },
      nullptr);
}

} // namespace dpm
