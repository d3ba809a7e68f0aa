#include "dpm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dpm/moments.hpp"
#include "dpm/rng.hpp"
#include "dpm/transition.hpp"

namespace dpm {

namespace {

void check_enumerable(const ModelSpec& spec) {
  const long long n = spec.n_histories();
  if (n < 0 || n > kMaxHistories)
    throw DomainError("enumeration budget exceeded: " + std::to_string(spec.support()) + "^" +
                      std::to_string(spec.T) + " histories (limit 2^24)");
}

long double log1pexp_ext(long double z) {
  return z > 0.0L ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// the index rounded exactly as the transition functions see it
long double index_of(double state, double covariate) {
  const double idx = state + covariate;
  return static_cast<long double>(idx);
}

long double log_transition_ext(const ModelSpec& spec, const Theta& th, const FixedEffect& a, const double* xrow,
                               int lag, int to) {
  switch (spec.family) {
    case Family::ARP: {
      const long double z = index_of(state_index(spec, th, 0, lag), covariate_index(spec, th, 0, xrow)) + a.a[0];
      return (to ? z : 0.0L) - log1pexp_ext(z);
    }
    case Family::VAR1:
    case Family::NET3: {
      long double lp = 0.0L;
      for (int m = 0; m < spec.M; ++m) {
        const long double z =
            index_of(state_index(spec, th, m, lag), covariate_index(spec, th, m, xrow)) + a.a[m];
        lp += (bit_of(to, m, spec.M) ? z : 0.0L) - log1pexp_ext(z);
      }
      return lp;
    }
    case Family::MAR1: {
      std::vector<long double> z(spec.C + 1, 0.0L);
      for (int c = 1; c <= spec.C; ++c)
        z[c] = index_of(state_index(spec, th, c, lag), covariate_index(spec, th, c, xrow)) + a.a[c - 1];
      const long double zmax = *std::max_element(z.begin(), z.end());
      long double s = 0.0L;
      for (long double v : z) s += std::exp(v - zmax);
      return z[to] - zmax - std::log(s);
    }
  }
  return 0.0L;
}

// log transition table [s][lag][to] for s = 1..T, extended precision so that
// path probabilities keep about three more digits than the functions they weight
std::vector<long double> log_table(const ModelSpec& spec, const Theta& th, const FixedEffect& a, const PanelUnit& u) {
  const int L = spec.lag_states(), S = spec.support();
  std::vector<long double> lt(static_cast<size_t>(spec.T) * L * S);
  for (int s = 1; s <= spec.T; ++s)
    for (int l = 0; l < L; ++l)
      for (int to = 0; to < S; ++to)
        lt[((s - 1) * L + l) * S + to] = log_transition_ext(spec, th, a, u.xrow(spec, s), l, to);
  return lt;
}

long double path_logprob(const ModelSpec& spec, const std::vector<long double>& lt, const Path& path) {
  const int L = spec.lag_states(), S = spec.support();
  long double lp = 0.0L;
  for (int s = 1; s <= spec.T; ++s) lp += lt[((s - 1) * L + path.lag_code(spec, s)) * S + path.Y(s)];
  return lp;
}

void check_unit(const ModelSpec& spec, const Theta& th, const FixedEffect& a, const PanelUnit& u) {
  th.check(spec);
  check_effect(spec, a);
  if ((int)u.x.size() != spec.T * spec.layers() * spec.Kx) throw DimensionError("covariate array has wrong size");
  if ((int)u.y0.size() != spec.lags()) throw DimensionError("initial block has wrong length");
}

} // namespace

std::vector<double> history_probabilities(const ModelSpec& spec, const Theta& th, const FixedEffect& a,
                                          const PanelUnit& unit) {
  check_unit(spec, th, a, unit);
  check_enumerable(spec);
  const auto lt = log_table(spec, th, a, unit);
  const long long n = spec.n_histories();
  std::vector<double> out(n);
  Path path(spec, unit.y0, 0LL);
  for (long long h = 0; h < n; ++h) {
    path.set_history(spec, h);
    out[h] = static_cast<double>(std::exp(path_logprob(spec, lt, path)));
  }
  return out;
}

double conditional_expectation(const ModelSpec& spec, const Theta& th, const FixedEffect& a,
                               const PanelUnit& unit, const HistoryFn& f) {
  check_unit(spec, th, a, unit);
  check_enumerable(spec);
  const auto lt = log_table(spec, th, a, unit);
  const long long n = spec.n_histories();
  long double sum = 0.0L, comp = 0.0L;
  Path path(spec, unit.y0, 0LL);
  for (long long h = 0; h < n; ++h) {
    path.set_history(spec, h);
    const double v = f(h, path);
    if (v == 0.0) continue;
    const long double term = static_cast<long double>(v) * std::exp(path_logprob(spec, lt, path));
    const long double t = sum + term;
    comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
    sum = t;
  }
  return static_cast<double>(sum + comp);
}

std::vector<double> chebyshev_grid(int n, double lo, double hi) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) {
    const double c = std::cos(std::numbers::pi * (2.0 * i + 1.0) / (2.0 * n));
    g[n - 1 - i] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * c;
  }
  return g;
}

LambdaMatrix build_lambda(const ModelSpec& spec, const Theta& th, const PanelUnit& unit,
                          const std::vector<double>& grid) {
  if (spec.fe_dim() != 1) throw DimensionError("Lambda matrix needs a scalar fixed effect");
  check_enumerable(spec);
  LambdaMatrix L;
  L.grid = grid;
  L.theta = th;
  L.unit = unit;
  L.P.resize(spec.n_histories(), static_cast<Eigen::Index>(grid.size()));
  for (size_t j = 0; j < grid.size(); ++j) {
    const auto pr = history_probabilities(spec, th, FixedEffect{{grid[j]}}, unit);
    for (size_t h = 0; h < pr.size(); ++h) L.P(h, j) = pr[h];
  }
  return L;
}

int expected_rank(const ModelSpec& spec) {
  const long long all = spec.n_histories();
  if (spec.family != Family::ARP) return static_cast<int>(all);
  if (spec.T < spec.p + 1) return static_cast<int>(all);
  return static_cast<int>(std::min<long long>(all, static_cast<long long>(spec.T - spec.p + 1) << spec.p));
}

namespace {

// gap between the indices that can occur given y0 (lags reaching into the
// initial block are pinned)
double index_gap(const ModelSpec& spec, const Theta& th, const PanelUnit& unit) {
  std::vector<double> idx;
  const int L = spec.lag_states();
  for (int s = 1; s <= spec.T; ++s) {
    const double c = covariate_index(spec, th, 0, unit.xrow(spec, s));
    for (int l = 0; l < L; ++l) {
      bool reachable = true;
      for (int r = 1; r <= spec.p && reachable; ++r)
        if (s - r <= 0 && ((l >> (r - 1)) & 1) != unit.y0[spec.p - 1 + (s - r)]) reachable = false;
      if (reachable) idx.push_back(state_index(spec, th, 0, l) + c);
    }
  }
  std::sort(idx.begin(), idx.end());
  double gap = std::numeric_limits<double>::infinity();
  for (size_t i = 1; i < idx.size(); ++i) gap = std::min(gap, idx[i] - idx[i - 1]);
  return gap;
}

// one sweep of unit-norm rows then unit-norm columns; rank preserving
Eigen::MatrixXd equilibrate(const Eigen::MatrixXd& P) {
  Eigen::MatrixXd Q = P.rowwise().norm().cwiseInverse().asDiagonal() * P;
  return Q * Q.colwise().norm().cwiseInverse().asDiagonal();
}

} // namespace

RankReport rank_of_image(const ModelSpec& spec, const Theta& th, const PanelUnit& unit,
                         const std::vector<double>& a_grid, double tol) {
  RankReport r;
  r.expected_rank = expected_rank(spec);
  r.grid_size = static_cast<int>(a_grid.size());
  if (r.grid_size < 4 * r.expected_rank)
    throw DomainError("fixed-effect grid too small: " + std::to_string(r.grid_size) + " < 4 x " +
                      std::to_string(r.expected_rank));
  th.check(spec);
  r.min_index_gap = index_gap(spec, th, unit);
  r.degenerate = r.min_index_gap < 1e-8;
  const LambdaMatrix L = build_lambda(spec, th, unit, a_grid);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(equilibrate(L.P));
  const auto& sv = svd.singularValues();
  r.singular_values.assign(sv.data(), sv.data() + sv.size());
  const double cut = sv.size() ? tol * sv[0] : 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cut) ++r.rank;
  r.nullity = static_cast<int>(L.P.rows()) - r.rank;
  return r;
}

RankReport rank_of_image(const ModelSpec& spec, const Theta& th, const PanelUnit& unit, double tol) {
  return rank_of_image(spec, th, unit, chebyshev_grid(4 * expected_rank(spec), -6.0, 6.0), tol);
}

Eigen::MatrixXd left_null_basis(const LambdaMatrix& L, double tol) {
  // the row scaling must be undone for the left null space: v'DP = 0 <=> (Dv)'P = 0
  Eigen::VectorXd d = L.P.rowwise().norm().cwiseInverse();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(equilibrate(L.P), Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  const double cut = sv.size() ? tol * sv[0] : 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cut) ++rank;
  Eigen::MatrixXd N = d.asDiagonal() * svd.matrixU().rightCols(L.P.rows() - rank);
  if (N.cols() == 0) return N;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(N);
  return qr.householderQ() * Eigen::MatrixXd::Identity(N.rows(), N.cols());
}

std::pair<Theta, PanelUnit> spread_design(const ModelSpec& spec, double width) {
  if (spec.family != Family::ARP || spec.Kx < 1) throw DimensionError("spread design needs an ARP model with Kx >= 1");
  const int S = 1 << spec.p;
  const double d = width / S;
  Theta th = Theta::zeros(spec);
  for (int r = 0; r < spec.p; ++r) th.gamma[r] = d * (1 << (spec.p - 1 - r));
  th.beta[0] = 1.0;
  PanelUnit u;
  u.y0.assign(spec.p, 0);
  u.x.assign(static_cast<size_t>(spec.T) * spec.Kx, 0.0);
  for (int t = 1; t <= spec.T; ++t) u.x[(t - 1) * spec.Kx] = -0.5 * width + std::fmod(t * 0.6180339887498949, 1.0) * d;
  return {th, u};
}

double partial_fraction_multinomial(const std::vector<double>& u, const std::vector<double>& v,
                                    const std::vector<double>& a, int j) {
  const size_t K = u.size();
  double Du = 1.0, Dv = 1.0;
  for (size_t k = 0; k < K; ++k) {
    Du += std::exp(u[k] + a[k]);
    Dv += std::exp(v[k] + a[k]);
  }
  if (j < 0) {
    double lhs = 1.0 / Dv;
    for (size_t k = 0; k < K; ++k) lhs += (1.0 - std::exp(u[k] - v[k])) * std::exp(v[k] + a[k]) / (Dv * Du);
    return lhs - 1.0 / Du;
  }
  double lhs = std::exp(v[j] + a[j]) / Dv + (1.0 - std::exp(v[j] - u[j])) * std::exp(u[j] + a[j]) / (Dv * Du);
  for (size_t k = 0; k < K; ++k) {
    if ((int)k == j) continue;
    lhs += (1.0 - std::exp((u[k] - u[j]) - (v[k] - v[j]))) * std::exp(v[k] + a[k] + u[j] + a[j]) / (Dv * Du);
  }
  return lhs - std::exp(u[j] + a[j]) / Du;
}

double partial_fraction_product(const std::vector<double>& u, const std::vector<double>& v,
                                const std::vector<double>& a, int k) {
  const int M = static_cast<int>(u.size());
  auto factor = [&](const std::vector<double>& w, int code) {
    double f = 1.0;
    for (int m = 0; m < M; ++m) f *= std::exp(bit_of(code, m, M) * (w[m] + a[m])) / (1.0 + std::exp(w[m] + a[m]));
    return f;
  };
  double lhs = factor(v, k);
  const double fu = factor(u, k);
  for (int l = 0; l < (1 << M); ++l) {
    if (l == k) continue;
    double e = 0.0;
    for (int j = 0; j < M; ++j) e += (bit_of(l, j, M) - bit_of(k, j, M)) * (u[j] - v[j]);
    lhs += (1.0 - std::exp(e)) * fu * factor(v, l);
  }
  return lhs - fu;
}

double check_partial_fractions(int trials, std::uint64_t seed) {
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    Stream rs(hash_key(seed, static_cast<std::uint64_t>(trial), 0x70f));
    for (int K = 1; K <= 4; ++K) {
      std::vector<double> u(K), v(K), a(K);
      for (int k = 0; k < K; ++k) {
        u[k] = rs.uniform(-3, 3);
        v[k] = rs.uniform(-3, 3);
        a[k] = rs.uniform(-3, 3);
      }
      for (int j = -1; j < K; ++j) worst = std::max(worst, std::abs(partial_fraction_multinomial(u, v, a, j)));
    }
    for (int M = 2; M <= 3; ++M) {
      std::vector<double> u(M), v(M), a(M);
      for (int m = 0; m < M; ++m) {
        u[m] = rs.uniform(-3, 3);
        v[m] = rs.uniform(-3, 3);
        a[m] = rs.uniform(-3, 3);
      }
      for (int k = 0; k < (1 << M); ++k) worst = std::max(worst, std::abs(partial_fraction_product(u, v, a, k)));
    }
  }
  return worst;
}

Instance random_instance(const ModelSpec& spec, std::uint64_t key) {
  spec.check();
  Stream rs(key);
  Instance in;
  in.theta = Theta::zeros(spec);
  for (double& g : in.theta.gamma) g = rs.uniform(-1.5, 1.5);
  for (double& b : in.theta.beta) b = rs.uniform(-1.0, 1.0);
  in.a.a.resize(spec.fe_dim());
  for (double& v : in.a.a) v = rs.uniform(-1.5, 1.5);
  const int per = spec.layers() * spec.Kx;
  in.unit.x.resize(static_cast<size_t>(spec.T) * per);
  for (double& v : in.unit.x) v = rs.normal();
  in.unit.x_pre.resize(static_cast<size_t>(spec.lags()) * per);
  for (double& v : in.unit.x_pre) v = rs.normal();
  const int init_support = spec.family == Family::ARP ? 2 : spec.support();
  in.unit.y0.resize(spec.lags());
  for (int& v : in.unit.y0) v = static_cast<int>(rs.next_u64() % static_cast<std::uint64_t>(init_support));
  in.unit.y.assign(spec.T, 0);
  return in;
}

SweepReport validity_sweep(const ModelSpec& spec, int draws, std::uint64_t seed) {
  spec.check();
  check_enumerable(spec);
  const auto ids = enumerate_moments(spec);
  // chains used by the moments, plus every plain phi
  std::vector<ChainSpec> chains;
  std::vector<std::string> chain_names;
  for (const auto& id : ids) {
    chains.push_back(id.chain());
    chain_names.push_back("zeta " + id.label());
  }
  const bool ar = spec.family == Family::ARP;
  const int targets = ar ? 1 << spec.p : spec.support();
  for (int t = ar ? spec.p : 1; t <= spec.T - 1; ++t)
    for (int k = 0; k < targets; ++k) {
      ChainSpec plain;
      if (ar) {
        for (int r = 0; r < spec.p; ++r) plain.target.from.push_back((k >> (spec.p - 1 - r)) & 1);
      } else {
        plain.target.from = {k};
      }
      plain.target.to = plain.target.from[0];
      plain.target.t = t;
      std::string name = "phi t=" + std::to_string(t) + " from";
      for (int v : plain.target.from) name += " " + std::to_string(v);
      chains.push_back(plain);
      chain_names.push_back(name);
    }
  SweepReport rep;
  rep.draws = draws;
  rep.moments = static_cast<int>(ids.size());
  rep.chains = static_cast<int>(chains.size());
  for (int d = 0; d < draws; ++d) {
    const Instance in = random_instance(spec, hash_key(seed, static_cast<std::uint64_t>(d), 0x51));
    Evaluator ev(spec, in.theta, in.unit);
    for (size_t j = 0; j < ids.size(); ++j) {
      const double e = conditional_expectation(spec, in.theta, in.a, in.unit, [&](long long h, const Path&) {
        ev.set_history(h);
        return psi(ev, ids[j]);
      });
      if (!(std::abs(e) <= rep.max_moment)) {
        rep.max_moment = std::isfinite(e) ? std::abs(e) : std::numeric_limits<double>::infinity();
        rep.worst_moment = ids[j].label();
      }
    }
    for (size_t j = 0; j < chains.size(); ++j) {
      const double e = conditional_expectation(spec, in.theta, in.a, in.unit, [&](long long h, const Path&) {
        ev.set_history(h);
        return ev.chain(chains[j]);
      });
      const double r = std::abs(e - chain_target_probability(spec, in.theta, in.a, in.unit, chains[j]));
      if (!(r <= rep.max_transition)) {
        rep.max_transition = std::isfinite(r) ? r : std::numeric_limits<double>::infinity();
        rep.worst_chain = chain_names[j];
      }
    }
  }
  return rep;
}

} // namespace dpm
