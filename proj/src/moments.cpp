#include "dpm/moments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dpm/rng.hpp"

namespace dpm {

ChainSpec MomentId::chain() const {
  ChainSpec c;
  c.target.from = target;
  c.target.to = target.empty() ? 0 : target[0];
  c.target.t = t;
  c.offsets = offsets;
  return c;
}

std::string MomentId::label() const {
  std::ostringstream os;
  os << "psi[";
  if (family == Family::ARP) {
    os << target[0] << "|";
    for (size_t i = 0; i < target.size(); ++i) os << (i ? "," : "") << target[i];
  } else {
    os << target[0] << "|" << target[0];
  }
  os << "](t=" << t;
  if (pure) {
    os << ";s=" << s;
  } else {
    os << ";s=";
    for (size_t i = 0; i < offsets.size(); ++i) os << (i ? "," : "") << offsets[i];
  }
  os << ")";
  return os.str();
}

namespace {

// nonempty subsets of {1..n} as descending lists, ordered so that the
// descending lists are lexicographically decreasing: (2,1), (2), (1)
std::vector<std::vector<int>> descending_subsets(int n) {
  std::vector<std::vector<int>> out;
  for (int m = 1; m < (1 << n); ++m) {
    std::vector<int> o;
    for (int s = n; s >= 1; --s)
      if ((m >> (s - 1)) & 1) o.push_back(s);
    out.push_back(std::move(o));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
  });
  return out;
}

std::vector<std::vector<int>> targets(const ModelSpec& spec) {
  std::vector<std::vector<int>> out;
  if (spec.family == Family::ARP) {
    for (int c = 0; c < (1 << spec.p); ++c) {
      std::vector<int> y(spec.p);
      for (int r = 0; r < spec.p; ++r) y[r] = (c >> (spec.p - 1 - r)) & 1;
      out.push_back(y);
    }
  } else {
    for (int k = 0; k < spec.support(); ++k) out.push_back({k});
  }
  return out;
}

} // namespace

std::vector<MomentId> enumerate_moments(const ModelSpec& spec) {
  spec.check();
  std::vector<MomentId> ids;
  const int lag = spec.lags();
  const auto tg = targets(spec);
  for (int t = lag + 1; t <= spec.T - 1; ++t) {
    for (const auto& off : descending_subsets(t - lag)) {
      for (const auto& y : tg) {
        MomentId id;
        id.family = spec.family;
        id.target = y;
        id.t = t;
        id.offsets = off;
        ids.push_back(std::move(id));
      }
    }
  }
  return ids;
}

std::vector<MomentId> enumerate_pure_moments(const ModelSpec& spec) {
  spec.check();
  if (spec.family != Family::ARP || spec.p != 1 || spec.Kx != 0)
    throw DomainError("pure moments need an AR(1) model without covariates (Kx = 0)");
  std::vector<MomentId> ids;
  for (int t = 2; t <= spec.T - 1; ++t)
    for (int s = t - 1; s >= 1; --s)
      for (int k = 0; k < 2; ++k) {
        MomentId id;
        id.family = Family::ARP;
        id.target = {k};
        id.t = t;
        id.pure = true;
        id.s = s;
        ids.push_back(std::move(id));
      }
  return ids;
}

long long moment_count_formula(const ModelSpec& spec) {
  if (spec.family != Family::ARP) return -1;
  if (spec.T < spec.p + 2) return 0;
  return (1LL << spec.T) - static_cast<long long>(spec.T - spec.p + 1) * (1LL << spec.p);
}

void check_moment(const ModelSpec& spec, const MomentId& id) {
  if (id.family != spec.family) throw DimensionError("moment id belongs to a different model family");
  if (id.pure) {
    if (spec.family != Family::ARP || spec.p != 1 || spec.Kx != 0)
      throw DomainError("pure moments need an AR(1) model without covariates (Kx = 0)");
    if (id.target.size() != 1 || (id.target[0] != 0 && id.target[0] != 1))
      throw DimensionError("pure moment target must be 0 or 1");
    if (id.t < 2 || id.t > spec.T - 1 || id.s < 1 || id.s >= id.t)
      throw DomainError("pure moment needs 1 <= s < t <= T-1");
    return;
  }
  if (id.offsets.empty()) throw DomainError("moment id needs at least one offset");
  if (id.t < spec.lags() + 1) throw DomainError("moment id needs t >= p + 1");
  check_chain(spec, id.chain());
}

double psi(const Evaluator& ev, const MomentId& id) {
  const int* y = id.target.data();
  const double f = ev.phi(y, id.t);
  if (id.pure) return f - ev.phi(y, id.s);
  const Path& path = ev.path();
  double z = f;
  for (int s : id.offsets) z = path.Y(s) == y[0] ? 1.0 : ev.weight(y, id.t, s) * z;
  return f - z;
}

double psi(const ModelSpec& spec, const MomentId& id, const PanelUnit& unit, const Theta& th) {
  th.check(spec);
  check_moment(spec, id);
  Evaluator ev(spec, th, unit);
  return psi(ev, id);
}

namespace {

double distinct_abs_sum(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  bool any = false;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i > 0 && std::abs(v[i] - v[i - 1]) <= 1e-12) continue;
    sum += std::abs(v[i]);
    any = any || std::abs(v[i]) > 1e-12;
  }
  return any ? sum : 1.0;
}

} // namespace

double rescale_factor(const ModelSpec& spec, const MomentId& id, const PanelUnit& unit, const Theta& th) {
  th.check(spec);
  check_moment(spec, id);
  const long long n = spec.n_histories();
  if (n < 0 || n > (1LL << 24)) throw DomainError("too many histories to rescale");
  Evaluator ev(spec, th, unit);
  std::vector<double> vals(n);
  for (long long h = 0; h < n; ++h) {
    ev.set_history(h);
    vals[h] = psi(ev, id);
  }
  return distinct_abs_sum(vals);
}

UnitMoments evaluate_unit(const ModelSpec& spec, const std::vector<MomentId>& ids, const PanelUnit& unit,
                          const Theta& th, bool with_factors) {
  UnitMoments out;
  const size_t J = ids.size();
  out.value.resize(J);
  Evaluator ev(spec, th, unit);
  if (!with_factors) {
    for (size_t j = 0; j < J; ++j) out.value[j] = psi(ev, ids[j]);
    return out;
  }
  const long long n = spec.n_histories();
  long long observed = 0;
  for (int t = spec.T - 1; t >= 0; --t) observed = observed * spec.support() + unit.y[t];
  thread_local std::vector<double> vals, col;
  vals.resize(J * static_cast<size_t>(n));
  col.resize(static_cast<size_t>(n));
  for (long long h = 0; h < n; ++h) {
    ev.set_history(h);
    for (size_t j = 0; j < J; ++j) vals[j * n + h] = psi(ev, ids[j]);
  }
  out.factor.resize(J);
  for (size_t j = 0; j < J; ++j) {
    out.value[j] = vals[j * n + observed];
    std::copy(vals.begin() + j * n, vals.begin() + (j + 1) * n, col.begin());
    out.factor[j] = distinct_abs_sum(col);
  }
  return out;
}

RescaleStructure::RescaleStructure(const ModelSpec& spec, const std::vector<MomentId>& ids,
                                   const std::vector<int>& y0)
    : y0_(y0) {
  spec.check();
  const long long n = spec.n_histories();
  if (n < 0 || n > (1LL << 24)) throw DomainError("too many histories to rescale");
  const size_t J = ids.size();
  std::uint64_t key = 0x7f4a7c15ULL;
  for (int v : y0) key = mix64(key ^ static_cast<std::uint64_t>(v + 1));
  Stream rng(key);
  std::vector<std::vector<double>> probe[2];
  for (auto& pr : probe) {
    Theta th = Theta::zeros(spec);
    for (double& g : th.gamma) g = rng.uniform(-1.5, 1.5);
    for (double& b : th.beta) b = rng.uniform(-1.0, 1.0);
    PanelUnit u;
    u.y0 = y0;
    u.x.resize(static_cast<size_t>(spec.T) * spec.layers() * spec.Kx);
    for (double& x : u.x) x = rng.normal();
    Evaluator ev(spec, th, u);
    pr.assign(J, std::vector<double>(n));
    for (long long h = 0; h < n; ++h) {
      ev.set_history(h);
      for (size_t j = 0; j < J; ++j) pr[j][h] = psi(ev, ids[j]);
    }
  }
  auto same = [](double a, double b) { return std::abs(a - b) <= 1e-9 * (1.0 + std::abs(a) + std::abs(b)); };
  std::vector<std::vector<int>> at(n);
  for (size_t j = 0; j < J; ++j) {
    std::vector<long long> reps;
    for (long long h = 0; h < n; ++h) {
      const double a = probe[0][j][h], b = probe[1][j][h];
      if (same(a, 0.0) && same(b, 0.0)) continue;
      bool seen = false;
      for (long long r : reps)
        if (same(a, probe[0][j][r]) && same(b, probe[1][j][r])) {
          seen = true;
          break;
        }
      if (!seen) {
        reps.push_back(h);
        at[h].push_back(static_cast<int>(j));
      }
    }
    reps_ += static_cast<int>(reps.size());
  }
  for (long long h = 0; h < n; ++h)
    if (!at[h].empty()) visits_.push_back({h, std::move(at[h])});
}

UnitMoments evaluate_unit(const ModelSpec& spec, const std::vector<MomentId>& ids, const PanelUnit& unit,
                          const Theta& th, const RescaleStructure& rs) {
  UnitMoments out;
  const size_t J = ids.size();
  out.value.resize(J);
  out.factor.resize(J);
  Evaluator ev(spec, th, unit);
  for (size_t j = 0; j < J; ++j) out.value[j] = psi(ev, ids[j]);
  thread_local std::vector<std::vector<double>> vals;
  if (vals.size() < J) vals.resize(J);
  for (size_t j = 0; j < J; ++j) vals[j].clear();
  for (const auto& v : rs.visits()) {
    ev.set_history(v.history);
    for (int j : v.moments) vals[j].push_back(psi(ev, ids[j]));
  }
  for (size_t j = 0; j < J; ++j) out.factor[j] = distinct_abs_sum(vals[j]);
  return out;
}

namespace {

void require_ar1(const ModelSpec& spec, const char* what) {
  if (spec.family != Family::ARP || spec.p != 1)
    throw DimensionError(std::string(what) + " needs an AR(1) model");
}

// (x_a - x_b)'beta
double dxb(const ModelSpec& spec, const PanelUnit& u, const std::vector<double>& beta, int a, int b) {
  double v = 0.0;
  for (int k = 0; k < spec.Kx; ++k) v += (u.xv(spec, a, 0, k) - u.xv(spec, b, 0, k)) * beta[k];
  return v;
}

} // namespace

KitazawaForms kitazawa_forms(const ModelSpec& spec, const PanelUnit& unit, const Theta& th, int t) {
  require_ar1(spec, "kitazawa_forms");
  th.check(spec);
  if (t < 2 || t > spec.T - 1) throw DomainError("kitazawa_forms needs 2 <= t <= T-1");
  const Path path(spec, unit.y0, unit.y);
  const double g = th.gamma[0];
  const double delta = std::exp(g) - 1.0;
  const int Yp2 = path.Y(t - 2), Yp = path.Y(t - 1), Yt = path.Y(t), Yn = path.Y(t + 1);
  const double d1 = dxb(spec, unit, th.beta, t + 1, t);
  const double d2 = dxb(spec, unit, th.beta, t + 1, t - 1);
  KitazawaForms f;
  f.U = Yt + (1 - Yt) * Yn - (1 - Yt) * Yn * std::exp(-d1) - delta * Yp * (1 - Yt) * Yn * std::exp(-d1);
  f.Upsilon = Yt * Yn + Yt * (1 - Yn) * std::exp(d1) + delta * (1 - Yp) * Yt * (1 - Yn) * std::exp(d1);
  f.hU = f.U - Yp - std::tanh((-g * Yp2 + d2) / 2.0) * (f.U + Yp - 2.0 * f.U * Yp);
  f.hUpsilon = f.Upsilon - Yp - std::tanh((g * (1 - Yp2) + d2) / 2.0) * (f.Upsilon + Yp - 2.0 * f.Upsilon * Yp);
  return f;
}

namespace {

struct T3Terms {
  double c[4];             // pattern indicators
  double e[3];             // exponentials
  std::vector<double> dx[3]; // covariate differences in the exponents
  double dg[3];            // gamma coefficients in the exponents
};

T3Terms t3_terms(const ModelSpec& spec, int k, const PanelUnit& unit, const Theta& th) {
  require_ar1(spec, "closed_form_psi_t3");
  if (spec.T != 3) throw DimensionError("closed_form_psi_t3 needs T = 3");
  th.check(spec);
  const int Y0 = unit.y0.at(0), Y1 = unit.y.at(0), Y2 = unit.y.at(1), Y3 = unit.y.at(2);
  const double g = th.gamma[0];
  T3Terms r;
  auto diff = [&](int a, int b) {
    std::vector<double> d(spec.Kx);
    for (int j = 0; j < spec.Kx; ++j) d[j] = unit.xv(spec, a, 0, j) - unit.xv(spec, b, 0, j);
    return d;
  };
  if (k == 0) {
    r.c[0] = (1 - Y1) * (1 - Y2) * Y3;
    r.c[1] = Y1 * (1 - Y2) * Y3;
    r.c[2] = Y1 * (1 - Y2) * (1 - Y3);
    r.c[3] = (1 - Y1) * Y2;
    r.dx[0] = diff(2, 3);
    r.dx[1] = diff(2, 1);
    r.dx[2] = diff(3, 1);
    r.dg[0] = 0;
    r.dg[1] = 1 - Y0;
    r.dg[2] = -Y0;
  } else if (k == 1) {
    r.c[0] = Y1 * Y2 * (1 - Y3);
    r.c[1] = (1 - Y1) * Y2 * (1 - Y3);
    r.c[2] = (1 - Y1) * Y2 * Y3;
    r.c[3] = Y1 * (1 - Y2);
    r.dx[0] = diff(3, 2);
    r.dx[1] = diff(1, 2);
    r.dx[2] = diff(1, 3);
    r.dg[0] = 0;
    r.dg[1] = Y0;
    r.dg[2] = -(1 - Y0);
  } else {
    throw DimensionError("k must be 0 or 1");
  }
  for (int i = 0; i < 3; ++i) {
    double z = r.dg[i] * g;
    for (int j = 0; j < spec.Kx; ++j) z += r.dx[i][j] * th.beta[j];
    r.e[i] = std::exp(z);
  }
  return r;
}

} // namespace

double closed_form_psi_t3(const ModelSpec& spec, int k, const PanelUnit& unit, const Theta& th) {
  const T3Terms r = t3_terms(spec, k, unit, th);
  return (r.e[0] - 1.0) * r.c[0] + r.e[1] * r.c[1] + r.e[2] * r.c[2] - r.c[3];
}

std::vector<double> closed_form_psi_t3_grad(const ModelSpec& spec, int k, const PanelUnit& unit, const Theta& th) {
  const T3Terms r = t3_terms(spec, k, unit, th);
  std::vector<double> g(1 + spec.Kx, 0.0);
  for (int i = 0; i < 3; ++i) {
    const double w = r.e[i] * r.c[i];
    g[0] += w * r.dg[i];
    for (int j = 0; j < spec.Kx; ++j) g[1 + j] += w * r.dx[i][j];
  }
  return g;
}

double static_logit_psi(const ModelSpec& spec, const PanelUnit& unit, const std::vector<double>& beta, int t1) {
  if (spec.family != Family::ARP) throw DimensionError("static_logit_psi needs a binary model");
  if ((int)beta.size() != spec.Kx) throw DimensionError("beta has the wrong length");
  if (t1 < 1 || t1 + 1 > spec.T) throw DomainError("static_logit_psi needs periods t1, t1+1 inside 1..T");
  const int Y1 = unit.y.at(t1 - 1), Y2 = unit.y.at(t1);
  const double d = dxb(spec, unit, beta, t1 + 1, t1);
  return (1.0 - std::exp(-d)) * (Y1 * (1 - Y2) * std::exp(d) - (1 - Y1) * Y2);
}

double psi_limit_ar2(const ModelSpec& spec, const PanelUnit& unit, const Theta& th) {
  if (spec.family != Family::ARP || spec.p != 2 || spec.T != 4)
    throw DimensionError("psi_limit_ar2 needs an AR(2) model with T = 4");
  th.check(spec);
  const int Ym1 = unit.y0.at(0), Y0 = unit.y0.at(1);
  const int Y1 = unit.y.at(0), Y2 = unit.y.at(1), Y3 = unit.y.at(2), Y4 = unit.y.at(3);
  const double g1 = th.gamma[0], g2 = th.gamma[1];
  const double x34 = dxb(spec, unit, th.beta, 3, 4), x31 = dxb(spec, unit, th.beta, 3, 1),
               x41 = dxb(spec, unit, th.beta, 4, 1);
  return -(1 - Y1) * (1 - Y2) * Y3 + (std::exp(x34) - 1.0) * (1 - Y1) * (1 - Y2) * (1 - Y3) * Y4 +
         std::exp(-g1 * Y0 + g2 * (1 - Ym1) + x31) * Y1 * (1 - Y2) * (1 - Y3) * Y4 +
         std::exp(-g1 * Y0 - g2 * Ym1 + x41) * Y1 * (1 - Y2) * (1 - Y3) * (1 - Y4);
}

double efficient_score_prefactor(double gamma) {
  if (!std::isfinite(gamma) || std::abs(gamma) < 1e-12)
    throw DomainError("efficient score prefactor has a pole at gamma = 0");
  return 1.0 / ((1.0 + std::exp(gamma)) * (std::exp(-gamma) - 1.0));
}

EfficientScore efficient_score_ar1_pure(const ModelSpec& spec, const PanelUnit& unit, double gamma) {
  if (spec.family != Family::ARP || spec.p != 1 || spec.T != 3 || spec.Kx != 0)
    throw DimensionError("efficient_score_ar1_pure needs a pure AR(1) model with T = 3");
  if (unit.y0.at(0) != 0) throw DomainError("efficient_score_ar1_pure is stated for y0 = 0");
  EfficientScore s;
  s.prefactor = efficient_score_prefactor(gamma);
  Theta th;
  th.gamma = {gamma};
  Evaluator ev(spec, th, unit);
  MomentId id;
  id.family = Family::ARP;
  // the weighted-chain pair; the plain differences of transition functions
  // combine to a different (valid, inefficient) moment
  id.t = 2;
  id.offsets = {1};
  id.target = {0};
  s.psi00 = psi(ev, id);
  id.target = {1};
  s.psi11 = psi(ev, id);
  s.value = s.prefactor * (s.psi00 + s.psi11);
  return s;
}

} // namespace dpm
