#include "dpm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpm/rng.hpp"

namespace dpm {

namespace {

constexpr std::uint64_t kCovariateTag = 1;
constexpr std::uint64_t kShockTag = 2;

int pre_periods(const ModelSpec& spec) { return spec.lags(); }

double gumbel(Stream& s) {
  double u = s.uniform();
  if (u < 1e-12) u = 1e-12;
  if (u > 1.0 - 1e-12) u = 1.0 - 1e-12;
  return -std::log(-std::log(u));
}

int draw_binary(double index, Stream& s) { return index - s.logistic() >= 0.0 ? 1 : 0; }

// layer-wise binary draws packed into a code, layer 1 most significant
int draw_vector(const ModelSpec& spec, const Theta& th, const FixedEffect& a, const double* xrow, int lag,
                bool with_state, Stream& s) {
  int code = 0;
  for (int m = 0; m < spec.M; ++m) {
    const double z = (with_state ? state_index(spec, th, m, lag) : 0.0) + covariate_index(spec, th, m, xrow) + a.a[m];
    code = (code << 1) | draw_binary(z, s);
  }
  return code;
}

int draw_label(const ModelSpec& spec, const Theta& th, const FixedEffect& a, const double* xrow, int lag,
               bool with_state, Stream& s) {
  int best = 0;
  double top = gumbel(s);
  for (int c = 1; c <= spec.C; ++c) {
    const double u = (with_state ? state_index(spec, th, c, lag) : 0.0) + covariate_index(spec, th, c, xrow) +
                     a.a[c - 1] + gumbel(s);
    if (u > top) {
      top = u;
      best = c;
    }
  }
  return best;
}

} // namespace

Design ar3_design(long long N, std::uint64_t seed) {
  Design d;
  d.spec = ModelSpec::arp(3, 5, 1);
  d.theta = Theta::zeros(d.spec);
  d.theta.gamma = {1.0, 0.5, 0.25};
  d.theta.beta = {0.5};
  d.N = N;
  d.seed = seed;
  return d;
}

Design var1_design(long long N, std::uint64_t seed) {
  Design d;
  d.spec = ModelSpec::var1(2, 3, 1);
  d.theta = Theta::zeros(d.spec);
  d.theta.gamma = {1.0, 0.5, 0.5, 1.0};
  d.theta.beta = {0.5, 0.5};
  d.N = N;
  d.seed = seed;
  return d;
}

Design default_design(const ModelSpec& spec, long long N, std::uint64_t seed) {
  spec.check();
  Design d;
  d.spec = spec;
  d.theta = Theta::zeros(spec);
  switch (spec.family) {
    case Family::ARP:
      for (int r = 0; r < spec.p; ++r) d.theta.gamma[r] = 1.0 / (1 << r);
      break;
    case Family::VAR1:
      for (int m = 0; m < spec.M; ++m)
        for (int j = 0; j < spec.M; ++j) d.theta.gamma[m * spec.M + j] = m == j ? 1.0 : 0.5;
      break;
    case Family::MAR1:
      for (int k = 0; k < spec.C; ++k)
        for (int l = 0; l < spec.C; ++l) d.theta.gamma[k * spec.C + l] = k == l ? 1.0 : 0.25;
      break;
    case Family::NET3:
      d.theta.gamma = {1.0, 0.5};
      break;
  }
  for (auto& b : d.theta.beta) b = 0.5;
  if (spec.family == Family::MAR1)
    for (int k = 0; k < spec.Kx; ++k) d.theta.beta[k] = 0.0;  // reference row
  d.N = N;
  d.seed = seed;
  return d;
}

PanelUnit simulate_unit(const Design& d, long long unit) {
  const ModelSpec& spec = d.spec;
  const int P = pre_periods(spec);
  const int per = spec.layers() * spec.Kx;
  PanelUnit u;
  Stream xs(hash_key(d.seed, static_cast<std::uint64_t>(unit), kCovariateTag));
  u.x_pre.resize(static_cast<size_t>(P) * per);
  u.x.resize(static_cast<size_t>(spec.T) * per);
  for (double& v : u.x_pre) v = xs.normal();
  for (double& v : u.x) v = xs.normal();
  const FixedEffect a = effect_of(d, u);

  Stream es(hash_key(d.seed, static_cast<std::uint64_t>(unit), kShockTag));
  const Theta& th = d.theta;
  u.y.resize(spec.T);
  switch (spec.family) {
    case Family::ARP: {
      // staged start: the i-th initial outcome uses only the lags drawn before it
      std::vector<int> seq;
      auto draw = [&](const double* xrow) {
        double z = covariate_index(spec, th, 0, xrow) + a.a[0];
        const int n = static_cast<int>(seq.size());
        for (int r = 1; r <= std::min(spec.p, n); ++r) z += th.gamma[r - 1] * seq[n - r];
        seq.push_back(draw_binary(z, es));
      };
      for (int i = 0; i < P; ++i) draw(u.x_pre.data() + i * per);
      for (int t = 1; t <= spec.T; ++t) draw(u.xrow(spec, t));
      u.y0.assign(seq.begin(), seq.begin() + P);
      std::copy(seq.begin() + P, seq.end(), u.y.begin());
      break;
    }
    case Family::VAR1:
    case Family::NET3: {
      int prev = draw_vector(spec, th, a, u.x_pre.data(), 0, false, es);
      u.y0 = {prev};
      for (int t = 1; t <= spec.T; ++t) u.y[t - 1] = prev = draw_vector(spec, th, a, u.xrow(spec, t), prev, true, es);
      break;
    }
    case Family::MAR1: {
      int prev = draw_label(spec, th, a, u.x_pre.data(), 0, false, es);
      u.y0 = {prev};
      for (int t = 1; t <= spec.T; ++t) u.y[t - 1] = prev = draw_label(spec, th, a, u.xrow(spec, t), prev, true, es);
      break;
    }
  }
  return u;
}

FixedEffect effect_of(const Design& d, const PanelUnit& u) {
  const ModelSpec& spec = d.spec;
  FixedEffect a;
  a.a.assign(spec.fe_dim(), 0.0);
  if (d.effect == EffectRule::None) return a;
  if (d.effect == EffectRule::Constant) {
    std::fill(a.a.begin(), a.a.end(), d.effect_value);
    return a;
  }
  if (spec.Kx == 0) return a;  // nothing to sum
  const int per = spec.layers() * spec.Kx;
  const int P = static_cast<int>(u.x_pre.size()) / per;
  const double norm = std::sqrt(static_cast<double>((P + spec.T) * spec.Kx));
  for (int e = 0; e < spec.fe_dim(); ++e) {
    const int layer = spec.family == Family::MAR1 ? e + 1 : e;
    double s = 0.0;
    for (int i = 0; i < P; ++i)
      for (int k = 0; k < spec.Kx; ++k) s += u.x_pre[i * per + layer * spec.Kx + k];
    for (int t = 1; t <= spec.T; ++t)
      for (int k = 0; k < spec.Kx; ++k) s += u.xv(spec, t, layer, k);
    a.a[e] = s / norm;
  }
  return a;
}

Dataset simulate(const Design& d) {
  d.spec.check();
  d.theta.check(d.spec);
  if (d.N < 1) throw DomainError("design needs at least one unit");
  Dataset out;
  out.spec = d.spec;
  out.units.resize(static_cast<size_t>(d.N));
  for (long long i = 0; i < d.N; ++i) out.units[i] = simulate_unit(d, i);
  return out;
}

std::uint64_t rep_seed(std::uint64_t seed, int rep) { return hash_key(seed, 0x5eedULL, static_cast<std::uint64_t>(rep)); }

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

MonteCarloResult monte_carlo(const Design& design, const std::vector<EstimatorRun>& estimators, int reps,
                             std::uint64_t seed) {
  if (reps < 1) throw DomainError("reps must be at least 1");
  MonteCarloResult out;
  out.design = design;
  out.reps = reps;
  const int k = design.spec.n_theta();
  const Eigen::VectorXd truth = design.theta.flat();
  out.estimators.resize(estimators.size());
  for (size_t e = 0; e < estimators.size(); ++e) out.estimators[e].name = estimators[e].name;

  for (int r = 0; r < reps; ++r) {
    Design dr = design;
    dr.seed = rep_seed(seed, r);
    const Dataset data = simulate(dr);
    for (size_t e = 0; e < estimators.size(); ++e) {
      EstimateConfig cfg = estimators[e].config;
      if (!cfg.theta0) cfg.theta0 = design.theta;
      cfg.compute_variance = false;
      auto& s = out.estimators[e];
      try {
        const GmmResult res = estimate(data, cfg);
        s.estimates.push_back(res.theta_flat);
        s.ok.push_back(res.converged);
      } catch (const std::exception&) {
        s.estimates.push_back(Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN()));
        s.ok.push_back(false);
      }
    }
  }

  const auto names = design.spec.param_names();
  for (auto& s : out.estimators) {
    s.reps = reps;
    s.converged = static_cast<int>(std::count(s.ok.begin(), s.ok.end(), true));
    s.convergence = static_cast<double>(s.converged) / reps;
    for (int j = 0; j < k; ++j) {
      std::vector<double> err;
      for (size_t r = 0; r < s.estimates.size(); ++r)
        if (s.ok[r]) err.push_back(s.estimates[r][j] - truth[j]);
      ParamSummary p;
      p.name = names[j];
      p.truth = truth[j];
      p.median_bias = median(err);
      for (double& v : err) v = std::abs(v);
      p.mae = median(err);
      s.params.push_back(p);
    }
  }
  return out;
}

std::vector<std::pair<double, double>> kernel_density(const std::vector<double>& v, int points) {
  std::vector<double> x;
  for (double d : v)
    if (std::isfinite(d)) x.push_back(d);
  if (x.empty() || points < 2) return {};
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double d : x) mean += d;
  mean /= n;
  double var = 0.0;
  for (double d : x) var += (d - mean) * (d - mean);
  const double sd = x.size() > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  auto q = [&](double p) {
    const double pos = p * (n - 1);
    const size_t i = static_cast<size_t>(pos);
    const double f = pos - i;
    return i + 1 < sorted.size() ? sorted[i] * (1 - f) + sorted[i + 1] * f : sorted[i];
  };
  const double iqr = q(0.75) - q(0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0)) spread = sd > 0 ? sd : 1e-3;
  const double h = 0.9 * spread * std::pow(n, -0.2);
  const double lo = sorted.front() - 3 * h, hi = sorted.back() + 3 * h;
  std::vector<std::pair<double, double>> out;
  out.reserve(points);
  const double c = 1.0 / (n * h * std::sqrt(2.0 * M_PI));
  for (int i = 0; i < points; ++i) {
    const double g = lo + (hi - lo) * i / (points - 1);
    double s = 0.0;
    for (double d : x) {
      const double z = (g - d) / h;
      s += std::exp(-0.5 * z * z);
    }
    out.emplace_back(g, c * s);
  }
  return out;
}

} // namespace dpm
