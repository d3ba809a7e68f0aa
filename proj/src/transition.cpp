#include "dpm/transition.hpp"

#include <string>

namespace dpm {

Evaluator::Evaluator(const ModelSpec& spec, const Theta& th, const PanelUnit& u)
    : spec_(spec), table_(spec, th, u), y0_(u.y0), T_(spec.T) {
  mu_.assign(static_cast<size_t>(spec.layers()) * (T_ + 1), 1.0);
  lag_.assign(T_ + 1, 0);
  if ((int)u.y.size() == spec.T)
    set_path(u.y);
  else
    set_history(0);
}

void Evaluator::set_path(const std::vector<int>& y) {
  path_ = Path(spec_, y0_, y);
  refresh();
}

void Evaluator::set_history(long long h) {
  if (path_.seq().empty())
    path_ = Path(spec_, y0_, h);
  else
    path_.set_history(spec_, h);
  refresh();
}

void Evaluator::refresh() {
  const int layers = spec_.layers();
  for (int s = 1; s <= T_; ++s) {
    const int lag = path_.lag_code(spec_, s);
    lag_[s] = lag;
    for (int m = 0; m < layers; ++m) mu_[m * (T_ + 1) + s] = table_.ex(m, s, lag);
  }
}

double Evaluator::ar_phi(const int* y, int t) const {
  const int y1 = y[0];
  const int Yt = path_.Y(t), Yn = path_.Y(t + 1);
  const double mt = mu(0, t), mn = mu(0, t + 1);
  double f;
  if (y1 == 0)
    f = Yt == 0 ? (Yn ? mt / mn : 1.0) : 0.0;
  else
    f = Yt == 1 ? (Yn ? 1.0 : mn / mt) : 0.0;
  if (spec_.p == 1) return f;

  // raise the conditioning set one lag at a time; the lag code mixes the
  // target's first k+1 lags with the realized older ones
  int ybits = 0;
  for (int r = 0; r < spec_.p; ++r) ybits |= y[r] << r;
  const int plag = lag_[t + 1];
  const double* kap_row = table_.ex_row(0, t + 1);
  for (int k = 1; k < spec_.p; ++k) {
    const int mask = (2 << k) - 1;
    const double kap = kap_row[(ybits & mask) | (plag & ~mask)];
    const double u = mu(0, t - k);
    const int yk = y[k];
    const double w = yk ? 1.0 - kap / u : 1.0 - u / kap;
    const int Yk = path_.Y(t - k);
    if (y1 == 0)
      f = yk ? (1 - Yk) + w * f * Yk : (1 - Yk) - w * (1.0 - f) * (1 - Yk);
    else
      f = yk ? Yk - w * (1.0 - f) * Yk : Yk + w * f * (1 - Yk);
  }
  return f;
}

double Evaluator::mv_phi(int k, int t) const {
  if (path_.Y(t) != k) return 0.0;
  const int Yn = path_.Y(t + 1);
  double f = 1.0;
  for (int m = 0; m < spec_.M; ++m) {
    const int d = bit_of(Yn, m, spec_.M) - bit_of(k, m, spec_.M);
    if (d > 0) f *= mu(m, t) / mu(m, t + 1);
    else if (d < 0) f *= mu(m, t + 1) / mu(m, t);
  }
  return f;
}

double Evaluator::mn_phi(int k, int t) const {
  if (path_.Y(t) != k) return 0.0;
  const int c = path_.Y(t + 1);
  if (c == k) return 1.0;
  return (mu(c, t) / mu(k, t)) * (mu(k, t + 1) / mu(c, t + 1));
}

double Evaluator::phi(const int* target, int t) const {
  switch (spec_.family) {
    case Family::ARP: return ar_phi(target, t);
    case Family::VAR1:
    case Family::NET3: return mv_phi(target[0], t);
    case Family::MAR1: return mn_phi(target[0], t);
  }
  return 0.0;
}

double Evaluator::weight(const int* target, int t, int s) const {
  switch (spec_.family) {
    case Family::ARP: {
      int lag = 0;
      for (int r = 0; r < spec_.p; ++r) lag |= target[r] << r;
      const double kap = table_.ex(0, t + 1, lag);
      return target[0] == 0 ? 1.0 - kap / mu(0, s) : 1.0 - mu(0, s) / kap;
    }
    case Family::VAR1:
    case Family::NET3: {
      const int k = target[0], l = path_.Y(s);
      double e = 1.0;
      for (int j = 0; j < spec_.M; ++j) {
        const int d = bit_of(l, j, spec_.M) - bit_of(k, j, spec_.M);
        if (d > 0) e *= table_.ex(j, t + 1, k) / mu(j, s);
        else if (d < 0) e *= mu(j, s) / table_.ex(j, t + 1, k);
      }
      return 1.0 - e;
    }
    case Family::MAR1: {
      const int k = target[0], l = path_.Y(s);
      const double e = (table_.ex(l, t + 1, k) / mu(l, s)) * (mu(k, s) / table_.ex(k, t + 1, k));
      return 1.0 - e;
    }
  }
  return 0.0;
}

double Evaluator::zeta(const int* target, int t, const std::vector<int>& offsets) const {
  double z = phi(target, t);
  for (int s : offsets) z = path_.Y(s) == target[0] ? 1.0 : weight(target, t, s) * z;
  return z;
}

double Evaluator::chain(const ChainSpec& c) const {
  return zeta(c.target.from.data(), c.target.t, c.offsets);
}

void check_chain(const ModelSpec& spec, const ChainSpec& c) {
  const auto& tg = c.target;
  const int t = tg.t;
  int first_t = 1, last_offset = t - 1;
  if (spec.family == Family::ARP) {
    if ((int)tg.from.size() != spec.p) throw DimensionError("ARP target needs p lags");
    for (int v : tg.from)
      if (v != 0 && v != 1) throw DimensionError("ARP target outside {0,1}");
    first_t = spec.p;
    last_offset = t - spec.p;
  } else {
    if (tg.from.size() != 1) throw DimensionError("target must be a single state code");
    if (tg.from[0] < 0 || tg.from[0] >= spec.support()) throw DimensionError("target state out of support");
  }
  if (tg.to != tg.from[0])
    throw DomainError("only same-state transition functions exist (to must equal the most recent origin)");
  if (t < first_t || t > spec.T - 1)
    throw DomainError("period t=" + std::to_string(t) + " outside [" + std::to_string(first_t) + ", " +
                      std::to_string(spec.T - 1) + "]");
  for (size_t j = 0; j < c.offsets.size(); ++j) {
    const int s = c.offsets[j];
    if (s < 1 || s > last_offset)
      throw DomainError("offset " + std::to_string(s) + " outside [1, " + std::to_string(last_offset) + "]");
    if (j > 0 && s >= c.offsets[j - 1]) throw DomainError("offsets must be strictly descending");
  }
}

namespace {

double eval_chain(const ModelSpec& spec, const ChainSpec& c, const PanelUnit& u, const Theta& th) {
  th.check(spec);
  check_chain(spec, c);
  Evaluator ev(spec, th, u);
  return ev.chain(c);
}

ChainSpec single(int k, int t) {
  ChainSpec c;
  c.target.from = {k};
  c.target.to = k;
  c.target.t = t;
  return c;
}

void require(const ModelSpec& spec, Family f, const char* what) {
  if (spec.family != f) throw DimensionError(std::string(what) + " called with a " + family_name(spec.family) + " model");
}

} // namespace

double phi_ar1(const ModelSpec& spec, int k, int t, const PanelUnit& u, const Theta& th) {
  require(spec, Family::ARP, "phi_ar1");
  if (spec.p != 1) throw DimensionError("phi_ar1 needs p = 1");
  if (spec.T < 2) throw DomainError("phi_ar1 needs T >= 2");
  return eval_chain(spec, single(k, t), u, th);
}

double zeta_ar1(const ModelSpec& spec, const ChainSpec& c, const PanelUnit& u, const Theta& th) {
  require(spec, Family::ARP, "zeta_ar1");
  if (spec.p != 1) throw DimensionError("zeta_ar1 needs p = 1");
  if (c.offsets.empty()) throw DomainError("zeta needs at least one offset");
  return eval_chain(spec, c, u, th);
}

double phi_arp(const ModelSpec& spec, const std::vector<int>& target, int t, const PanelUnit& u, const Theta& th) {
  require(spec, Family::ARP, "phi_arp");
  if (spec.T < spec.p + 1) throw DomainError("phi_arp needs T >= p + 1");
  if ((int)target.size() != spec.p) throw DimensionError("target length must equal p");
  ChainSpec c;
  c.target.from = target;
  c.target.to = target.empty() ? 0 : target[0];
  c.target.t = t;
  return eval_chain(spec, c, u, th);
}

double zeta_arp(const ModelSpec& spec, const ChainSpec& c, const PanelUnit& u, const Theta& th) {
  require(spec, Family::ARP, "zeta_arp");
  if (spec.T < spec.p + 2) throw DomainError("zeta_arp needs T >= p + 2");
  if (c.offsets.empty()) throw DomainError("zeta needs at least one offset");
  return eval_chain(spec, c, u, th);
}

double phi_var1(const ModelSpec& spec, int k, int t, const PanelUnit& u, const Theta& th) {
  require(spec, Family::VAR1, "phi_var1");
  return eval_chain(spec, single(k, t), u, th);
}

double zeta_var1(const ModelSpec& spec, const ChainSpec& c, const PanelUnit& u, const Theta& th) {
  require(spec, Family::VAR1, "zeta_var1");
  if (c.offsets.empty()) throw DomainError("zeta needs at least one offset");
  return eval_chain(spec, c, u, th);
}

double phi_mar1(const ModelSpec& spec, int k, int t, const PanelUnit& u, const Theta& th) {
  require(spec, Family::MAR1, "phi_mar1");
  return eval_chain(spec, single(k, t), u, th);
}

double zeta_mar1(const ModelSpec& spec, const ChainSpec& c, const PanelUnit& u, const Theta& th) {
  require(spec, Family::MAR1, "zeta_mar1");
  if (c.offsets.empty()) throw DomainError("zeta needs at least one offset");
  return eval_chain(spec, c, u, th);
}

double phi_network(const ModelSpec& spec, int d, int t, const PanelUnit& u, const Theta& th) {
  require(spec, Family::NET3, "phi_network");
  return eval_chain(spec, single(d, t), u, th);
}

double zeta_network(const ModelSpec& spec, const ChainSpec& c, const PanelUnit& u, const Theta& th) {
  require(spec, Family::NET3, "zeta_network");
  if (c.offsets.empty()) throw DomainError("zeta needs at least one offset");
  return eval_chain(spec, c, u, th);
}

double chain_target_probability(const ModelSpec& spec, const Theta& th, const FixedEffect& a, const PanelUnit& u,
                                const ChainSpec& c) {
  const int t = c.target.t;
  const double* xr = u.xrow(spec, t + 1);
  std::vector<double> xn(xr, xr + spec.layers() * spec.Kx);
  return transition_probability(spec, th, a, xn, c.target);
}

} // namespace dpm
