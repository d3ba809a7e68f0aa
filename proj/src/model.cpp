#include "dpm/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dpm {

std::string family_name(Family f) {
  switch (f) {
    case Family::ARP: return "ARP";
    case Family::VAR1: return "VAR1";
    case Family::MAR1: return "MAR1";
    case Family::NET3: return "NET3";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  if (s == "ARP" || s == "arp") return Family::ARP;
  if (s == "VAR1" || s == "var1") return Family::VAR1;
  if (s == "MAR1" || s == "mar1") return Family::MAR1;
  if (s == "NET3" || s == "net3") return Family::NET3;
  throw DimensionError("unknown model family '" + s + "'");
}

ModelSpec ModelSpec::arp(int p, int T, int Kx) {
  ModelSpec s;
  s.family = Family::ARP;
  s.p = p;
  s.T = T;
  s.Kx = Kx;
  s.check();
  return s;
}

ModelSpec ModelSpec::var1(int M, int T, int Kx) {
  ModelSpec s;
  s.family = Family::VAR1;
  s.M = M;
  s.T = T;
  s.Kx = Kx;
  s.check();
  return s;
}

ModelSpec ModelSpec::mar1(int C, int T, int Kx) {
  ModelSpec s;
  s.family = Family::MAR1;
  s.C = C;
  s.T = T;
  s.Kx = Kx;
  s.check();
  return s;
}

ModelSpec ModelSpec::net3(int T, int Kx) {
  ModelSpec s;
  s.family = Family::NET3;
  s.M = 3;
  s.T = T;
  s.Kx = Kx;
  s.check();
  return s;
}

void ModelSpec::check() const {
  if (T < 1) throw DimensionError("T must be >= 1");
  if (Kx < 0) throw DimensionError("Kx must be >= 0");
  switch (family) {
    case Family::ARP:
      if (p < 1) throw DimensionError("ARP needs p >= 1");
      if (p > 16) throw DimensionError("ARP lag order above 16 is not supported");
      break;
    case Family::VAR1:
      if (p != 1) throw DimensionError("VAR1 has p = 1");
      if (M < 2 || M > 8) throw DimensionError("VAR1 needs 2 <= M <= 8");
      break;
    case Family::MAR1:
      if (p != 1) throw DimensionError("MAR1 has p = 1");
      if (C < 1) throw DimensionError("MAR1 needs C >= 1");
      break;
    case Family::NET3:
      if (p != 1) throw DimensionError("NET3 has p = 1");
      if (M != 3) throw DimensionError("NET3 has exactly three dyads (M = 3)");
      break;
  }
}

int ModelSpec::support() const {
  switch (family) {
    case Family::ARP: return 2;
    case Family::VAR1:
    case Family::NET3: return 1 << M;
    case Family::MAR1: return C + 1;
  }
  return 0;
}

int ModelSpec::layers() const {
  switch (family) {
    case Family::ARP: return 1;
    case Family::VAR1:
    case Family::NET3: return M;
    case Family::MAR1: return C + 1;
  }
  return 0;
}

int ModelSpec::lag_states() const {
  return family == Family::ARP ? (1 << p) : support();
}

int ModelSpec::fe_dim() const {
  switch (family) {
    case Family::ARP: return 1;
    case Family::VAR1:
    case Family::NET3: return M;
    case Family::MAR1: return C;
  }
  return 0;
}

int ModelSpec::n_gamma() const {
  switch (family) {
    case Family::ARP: return p;
    case Family::VAR1: return M * M;
    case Family::MAR1: return C * C;
    case Family::NET3: return 2;
  }
  return 0;
}

int ModelSpec::n_beta() const {
  switch (family) {
    case Family::ARP:
    case Family::NET3: return Kx;
    case Family::VAR1: return M * Kx;
    case Family::MAR1: return (C + 1) * Kx;
  }
  return 0;
}

std::vector<std::string> ModelSpec::param_names() const {
  std::vector<std::string> out;
  auto num = [](int i) { return std::to_string(i); };
  switch (family) {
    case Family::ARP:
      for (int r = 1; r <= p; ++r) out.push_back("gamma." + num(r));
      for (int k = 1; k <= Kx; ++k) out.push_back("beta." + num(k));
      break;
    case Family::VAR1:
      for (int m = 1; m <= M; ++m)
        for (int j = 1; j <= M; ++j) out.push_back("gamma." + num(m) + "." + num(j));
      for (int m = 1; m <= M; ++m)
        for (int k = 1; k <= Kx; ++k) out.push_back("beta." + num(m) + "." + num(k));
      break;
    case Family::MAR1:
      for (int k = 1; k <= C; ++k)
        for (int l = 1; l <= C; ++l) out.push_back("gamma." + num(k) + "." + num(l));
      for (int c = 0; c <= C; ++c)
        for (int k = 1; k <= Kx; ++k) out.push_back("beta." + num(c) + "." + num(k));
      break;
    case Family::NET3:
      out.push_back("gamma");
      out.push_back("delta");
      for (int k = 1; k <= Kx; ++k) out.push_back("beta." + num(k));
      break;
  }
  return out;
}

long long ModelSpec::n_histories() const {
  long double n = std::pow(static_cast<long double>(support()), T);
  if (n > 9.0e18L) return -1;
  return static_cast<long long>(n);
}

Theta Theta::zeros(const ModelSpec& spec) {
  Theta th;
  th.gamma.assign(spec.n_gamma(), 0.0);
  th.beta.assign(spec.n_beta(), 0.0);
  return th;
}

Theta Theta::from_flat(const ModelSpec& spec, const Eigen::VectorXd& v) {
  if (v.size() != spec.n_theta())
    throw DimensionError("parameter vector has length " + std::to_string(v.size()) + ", expected " +
                         std::to_string(spec.n_theta()));
  Theta th;
  th.gamma.assign(v.data(), v.data() + spec.n_gamma());
  th.beta.assign(v.data() + spec.n_gamma(), v.data() + v.size());
  return th;
}

Eigen::VectorXd Theta::flat() const {
  Eigen::VectorXd v(gamma.size() + beta.size());
  for (size_t i = 0; i < gamma.size(); ++i) v[i] = gamma[i];
  for (size_t i = 0; i < beta.size(); ++i) v[gamma.size() + i] = beta[i];
  return v;
}

void Theta::check(const ModelSpec& spec) const {
  if ((int)gamma.size() != spec.n_gamma() || (int)beta.size() != spec.n_beta())
    throw DimensionError("theta layout does not match the model (gamma " + std::to_string(gamma.size()) +
                         "/" + std::to_string(spec.n_gamma()) + ", beta " + std::to_string(beta.size()) +
                         "/" + std::to_string(spec.n_beta()) + ")");
  for (double g : gamma)
    if (!std::isfinite(g)) throw DomainError("non-finite gamma");
  for (double b : beta)
    if (!std::isfinite(b)) throw DomainError("non-finite beta");
}

Path::Path(const ModelSpec& spec, const std::vector<int>& y0, const std::vector<int>& y) {
  const int P = spec.lags();
  if ((int)y0.size() != P) throw DimensionError("initial block has wrong length");
  if ((int)y.size() != spec.T) throw DimensionError("outcome path has wrong length");
  seq_.reserve(P + spec.T);
  seq_.insert(seq_.end(), y0.begin(), y0.end());
  seq_.insert(seq_.end(), y.begin(), y.end());
  off_ = P - 1;
}

Path::Path(const ModelSpec& spec, const std::vector<int>& y0, long long history) {
  const int P = spec.lags();
  const int S = spec.support();
  if ((int)y0.size() != P) throw DimensionError("initial block has wrong length");
  seq_.assign(y0.begin(), y0.end());
  seq_.resize(P + spec.T);
  for (int t = 0; t < spec.T; ++t) {
    seq_[P + t] = static_cast<int>(history % S);
    history /= S;
  }
  off_ = P - 1;
}

void Path::set_history(const ModelSpec& spec, long long history) {
  const int P = spec.lags();
  const int S = spec.support();
  for (int t = 0; t < spec.T; ++t) {
    seq_[P + t] = static_cast<int>(history % S);
    history /= S;
  }
}

int Path::lag_code(const ModelSpec& spec, int s) const {
  if (spec.family != Family::ARP) return Y(s - 1);
  int code = 0;
  for (int r = 1; r <= spec.p; ++r) code |= Y(s - r) << (r - 1);
  return code;
}

std::vector<int> Path::outcomes(int T) const {
  return std::vector<int>(seq_.end() - T, seq_.end());
}

double state_index(const ModelSpec& spec, const Theta& th, int layer, int lag) {
  switch (spec.family) {
    case Family::ARP: {
      double v = 0.0;
      for (int r = 0; r < spec.p; ++r)
        if ((lag >> r) & 1) v += th.gamma[r];
      return v;
    }
    case Family::VAR1: {
      double v = 0.0;
      for (int j = 0; j < spec.M; ++j)
        if (bit_of(lag, j, spec.M)) v += th.gamma[layer * spec.M + j];
      return v;
    }
    case Family::NET3: {
      int own = bit_of(lag, layer, 3);
      int r = 1;
      for (int j = 0; j < 3; ++j)
        if (j != layer) r *= bit_of(lag, j, 3);
      return th.gamma[0] * own + th.gamma[1] * r;
    }
    case Family::MAR1:
      if (layer == 0 || lag == 0) return 0.0;
      return th.gamma[(layer - 1) * spec.C + (lag - 1)];
  }
  return 0.0;
}

double covariate_index(const ModelSpec& spec, const Theta& th, int layer, const double* xrow) {
  const int K = spec.Kx;
  double v = 0.0;
  switch (spec.family) {
    case Family::ARP:
      for (int k = 0; k < K; ++k) v += xrow[k] * th.beta[k];
      return v;
    case Family::VAR1:
      for (int k = 0; k < K; ++k) v += xrow[layer * K + k] * th.beta[layer * K + k];
      return v;
    case Family::NET3:
      for (int k = 0; k < K; ++k) v += xrow[layer * K + k] * th.beta[k];
      return v;
    case Family::MAR1:
      if (layer == 0) return 0.0;
      for (int k = 0; k < K; ++k) v += xrow[layer * K + k] * th.beta[layer * K + k] - xrow[k] * th.beta[k];
      return v;
  }
  return v;
}

double log1pexp(double z) {
  if (z > 700.0) z = 700.0;
  if (z < -700.0) z = -700.0;
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

IndexTable::IndexTable(const ModelSpec& spec, const Theta& th, const PanelUnit& u)
    : T_(spec.T), L_(spec.lag_states()) {
  const int layers = spec.layers();
  idx_.resize(static_cast<size_t>(layers) * T_ * L_);
  ex_.resize(idx_.size());
  std::vector<double> st(static_cast<size_t>(layers) * L_);
  for (int m = 0; m < layers; ++m)
    for (int l = 0; l < L_; ++l) st[m * L_ + l] = state_index(spec, th, m, l);
  for (int s = 1; s <= T_; ++s) {
    const double* xr = u.xrow(spec, s);
    for (int m = 0; m < layers; ++m) {
      const double c = covariate_index(spec, th, m, xr);
      for (int l = 0; l < L_; ++l) {
        const int i = at(m, s, l);
        idx_[i] = st[m * L_ + l] + c;
        ex_[i] = clamp_exp(idx_[i]);
      }
    }
  }
}

double log_transition(const ModelSpec& spec, const Theta& th, const FixedEffect& a, const double* xrow,
                      int lag, int to) {
  switch (spec.family) {
    case Family::ARP: {
      const double z = state_index(spec, th, 0, lag) + covariate_index(spec, th, 0, xrow) + a.a[0];
      return (to ? z : 0.0) - log1pexp(z);
    }
    case Family::VAR1:
    case Family::NET3: {
      double lp = 0.0;
      for (int m = 0; m < spec.M; ++m) {
        const double z = state_index(spec, th, m, lag) + covariate_index(spec, th, m, xrow) + a.a[m];
        lp += (bit_of(to, m, spec.M) ? z : 0.0) - log1pexp(z);
      }
      return lp;
    }
    case Family::MAR1: {
      std::vector<double> z(spec.C + 1, 0.0);
      for (int c = 1; c <= spec.C; ++c)
        z[c] = state_index(spec, th, c, lag) + covariate_index(spec, th, c, xrow) + a.a[c - 1];
      const double zmax = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (double v : z) s += std::exp(v - zmax);
      return z[to] - zmax - std::log(s);
    }
  }
  return 0.0;
}

void check_effect(const ModelSpec& spec, const FixedEffect& a) {
  if ((int)a.a.size() != spec.fe_dim())
    throw DimensionError("fixed effect has length " + std::to_string(a.a.size()) + ", expected " +
                         std::to_string(spec.fe_dim()));
  for (double v : a.a)
    if (!std::isfinite(v)) throw DomainError("non-finite fixed effect");
}

double transition_probability(const ModelSpec& spec, const Theta& th, const FixedEffect& a,
                              const std::vector<double>& x_next, const TransitionState& st) {
  th.check(spec);
  check_effect(spec, a);
  if ((int)x_next.size() != spec.layers() * spec.Kx)
    throw DimensionError("covariate slice has length " + std::to_string(x_next.size()) + ", expected " +
                         std::to_string(spec.layers() * spec.Kx));
  const int S = spec.support();
  if (st.to < 0 || st.to >= S) throw DimensionError("arrival state out of support");
  int lag = 0;
  if (spec.family == Family::ARP) {
    if ((int)st.from.size() != spec.p) throw DimensionError("ARP state needs p lags");
    for (int r = 0; r < spec.p; ++r) {
      if (st.from[r] != 0 && st.from[r] != 1) throw DimensionError("lag outside {0,1}");
      lag |= st.from[r] << r;
    }
  } else {
    if (st.from.size() != 1) throw DimensionError("state must be a single code");
    if (st.from[0] < 0 || st.from[0] >= S) throw DimensionError("origin state out of support");
    lag = st.from[0];
  }
  return std::exp(log_transition(spec, th, a, x_next.data(), lag, st.to));
}

double history_probability(const ModelSpec& spec, const Theta& th, const FixedEffect& a, const PanelUnit& u,
                           const std::vector<int>& y_path) {
  th.check(spec);
  check_effect(spec, a);
  if ((int)u.x.size() != spec.T * spec.layers() * spec.Kx) throw DimensionError("covariate array has wrong size");
  Path path(spec, u.y0, y_path);
  double lp = 0.0;
  for (int t = 1; t <= spec.T; ++t)
    lp += log_transition(spec, th, a, u.xrow(spec, t), path.lag_code(spec, t), path.Y(t));
  return std::exp(lp);
}

std::vector<Violation> validate_dataset(const ModelSpec& spec, const std::vector<PanelUnit>& units) {
  std::vector<Violation> out;
  const int S = spec.support();
  const int P = spec.lags();
  const size_t nx = static_cast<size_t>(spec.T) * spec.layers() * spec.Kx;
  for (size_t i = 0; i < units.size(); ++i) {
    const PanelUnit& u = units[i];
    const int id = static_cast<int>(i);
    const int init_support = spec.family == Family::ARP ? 2 : S;
    if ((int)u.y0.size() != P)
      out.push_back({id, 0, "y0", "initial block has " + std::to_string(u.y0.size()) + " values, expected " +
                                     std::to_string(P)});
    for (size_t j = 0; j < u.y0.size(); ++j)
      if (u.y0[j] < 0 || u.y0[j] >= init_support)
        out.push_back({id, static_cast<int>(j) + 1 - P, "y0", "value " + std::to_string(u.y0[j]) + " outside support"});
    if ((int)u.y.size() != spec.T)
      out.push_back({id, 0, "y", "path has " + std::to_string(u.y.size()) + " periods, expected " +
                                    std::to_string(spec.T)});
    for (size_t t = 0; t < u.y.size(); ++t)
      if (u.y[t] < 0 || u.y[t] >= S)
        out.push_back({id, static_cast<int>(t) + 1, "y", "value " + std::to_string(u.y[t]) + " outside support"});
    if (u.x.size() != nx) {
      out.push_back({id, 0, "x", "covariate array has " + std::to_string(u.x.size()) + " entries, expected " +
                                    std::to_string(nx)});
    } else {
      for (size_t j = 0; j < nx; ++j) {
        if (std::isfinite(u.x[j])) continue;
        const int per = spec.layers() * spec.Kx;
        const int t = static_cast<int>(j) / per + 1;
        const int layer = (static_cast<int>(j) % per) / std::max(spec.Kx, 1);
        const int k = static_cast<int>(j) % std::max(spec.Kx, 1);
        out.push_back({id, t, "x[" + std::to_string(layer + 1) + "][" + std::to_string(k + 1) + "]",
                       "non-finite covariate"});
      }
    }
  }
  return out;
}

} // namespace dpm
